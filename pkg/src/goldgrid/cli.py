"""Command-line entry point: ``goldgrid <group> <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
import time

from goldgrid.errors import GoldgridError


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# goldbach
def cmd_verify(args) -> int:
    from goldgrid.goldbach import GoldbachRange, verify_range
    from goldgrid.goldbach.oracle import oracle_verify_range

    rng = GoldbachRange(args.start, args.end)
    t0 = time.perf_counter()
    result = verify_range(rng, backend=args.backend)
    out = {"range": [rng.start, rng.end], "result": result.to_json(), "seconds": round(time.perf_counter() - t0, 4)}
    if args.oracle:
        out["oracle_agrees"] = oracle_verify_range(rng) == result
    _print_json(out)
    return 0 if result.counterexample is None and out.get("oracle_agrees", True) else 1


# server
def _config_from_args(args, base=None):
    from goldgrid.server import SchedulerConfig

    cfg = base or SchedulerConfig()
    pairs = {
        "quorum": args.quorum,
        "target_replication": args.replication,
        "deadline_delay": args.deadline_secs,
        "generator_range_width_evens": args.range_width,
        "range_limit": args.range_limit,
        "daemon_poll_interval": args.poll_interval,
        "retention_after_assimilation": args.retention_secs,
    }
    for key, value in pairs.items():
        if value is not None:
            cfg = cfg.with_value(key, str(value))
    return cfg


def cmd_server_run(args) -> int:
    from goldgrid.server.http import DaemonRunner, make_http_server
    from goldgrid.statcli.admin import open_project

    project = open_project(args.data_dir, must_exist=False, durable=args.durable)
    cfg = _config_from_args(args, project.config)
    if cfg != project.config:
        for key, value in cfg.to_dict().items():
            if value != getattr(project.config, key):
                project.set_config(key, "none" if value is None else str(value))
    httpd = make_http_server(project, args.host, args.port)
    runner = DaemonRunner(project)
    runner.start()
    host, port = httpd.server_address[:2]
    print(json.dumps({"listening": f"http://{host}:{port}"}), flush=True)

    stop = threading.Event()

    def _shutdown(*_):
        stop.set()
        threading.Thread(target=httpd.shutdown, daemon=True).start()

    signal.signal(signal.SIGTERM, _shutdown)
    signal.signal(signal.SIGINT, _shutdown)
    try:
        httpd.serve_forever(poll_interval=0.2)
    finally:
        runner.stop()
        httpd.server_close()
        project.store.close()
    return 0


# worker
def cmd_worker_run(args) -> int:
    from goldgrid.worker import HostSpec, ServerClient, Worker, register

    client = ServerClient(args.server)
    spec = HostSpec(args.ram, args.disk, args.cpu_class)
    host_id = register(client, spec, args.name, args.work_dir)
    worker = Worker(
        client,
        args.work_dir,
        host_id,
        cpu_class=args.cpu_class,
        poll_interval=args.poll_interval,
        behavior=args.behavior,
    )
    signal.signal(signal.SIGTERM, lambda *_: worker.stop_event.set())
    try:
        worker.run(idle_exit=args.idle_exit, max_tasks_total=args.max_tasks)
    except KeyboardInterrupt:
        worker.stop_event.set()
    print(json.dumps({"host_id": host_id, "reported": len(worker.reported)}), flush=True)
    return 0


# sim
def cmd_sim_run(args) -> int:
    from goldgrid.simnet import SimConfig, run_sim

    cfg = SimConfig(
        seed=args.seed,
        days=args.days,
        dropout_frac=args.dropouts,
        cheater_frac=args.cheaters,
        slow_frac=args.slow,
        initial_hosts=args.initial_hosts,
        availability=args.availability,
        range_limit=args.range_limit,
    )
    trace = run_sim(cfg)
    if args.out:
        trace.to_csv(args.out)
    _print_json(
        {
            "days": cfg.days,
            "status": trace.status,
            "unsound_assimilations": trace.unsound_assimilations,
            "shared_host_pairs": trace.shared_host_pairs,
            "cheater_collisions": trace.cheater_collisions,
            "credit_violations": trace.credit_violations,
            "out": args.out,
        }
    )
    return 0


def cmd_sim_saturate(args) -> int:
    from goldgrid.simnet import SaturationConfig, saturate_server

    report = saturate_server(SaturationConfig(seed=args.seed, ticks=args.ticks), args.multiplier)
    _print_json(
        {
            "multiplier": args.multiplier,
            "max_backlog": report.max_backlog(),
            "backlog_grows": report.backlog_grows(),
            "latency_p50": report.percentile(50),
            "latency_p90": report.percentile(90),
            "latency_p99": report.percentile(99),
            "mean_busy_fraction": sum(report.busy_fraction) / len(report.busy_fraction),
        }
    )
    return 0


# stats
def cmd_stats_throughput(args) -> int:
    from goldgrid.statcli import estimate_throughput
    from goldgrid.statcli.admin import open_project

    project = open_project(args.data_dir, read_only=True)
    end = args.end if args.end is not None else project.clock.now()
    with project.store.view() as v:
        est = estimate_throughput(v, end - args.window_secs, end, args.flops_per_even)
    project.store.close()
    _print_json(est.__dict__)
    return 0


def cmd_stats_growth(args) -> int:
    from goldgrid.statcli import DailyGrowth, daily_growth, export_csv
    from goldgrid.statcli.admin import open_project

    project = open_project(args.data_dir, read_only=True)
    with project.store.view() as v:
        rows = daily_growth(v)
    project.store.close()
    if args.csv:
        export_csv(rows, args.csv, row_type=DailyGrowth)
    _print_json([r.__dict__ for r in rows])
    return 0


# admin
def cmd_admin(args) -> int:
    from goldgrid.statcli import admin

    if args.admin_cmd == "init":
        _print_json(admin.init_project(args.data_dir))
    elif args.admin_cmd == "status":
        _print_json(admin.project_status(args.data_dir))
    elif args.admin_cmd == "cancel-wu":
        _print_json({"wu_id": args.wu_id, "cancelled": admin.cancel_wu(args.data_dir, args.wu_id)})
    elif args.admin_cmd == "set-config":
        _print_json(admin.set_config(args.data_dir, args.key, args.value).to_dict())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="goldgrid", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    groups = p.add_subparsers(dest="group", required=True)

    gb = groups.add_parser("goldbach").add_subparsers(dest="cmd", required=True)
    v = gb.add_parser("verify", help="check every even number in a range")
    v.add_argument("--from", dest="start", type=int, required=True)
    v.add_argument("--to", dest="end", type=int, required=True)
    v.add_argument("--oracle", action="store_true", help="cross-check with the brute-force oracle")
    v.add_argument("--backend", choices=("cython", "python"))
    v.set_defaults(func=cmd_verify)

    srv = groups.add_parser("server").add_subparsers(dest="cmd", required=True)
    r = srv.add_parser("run", help="serve the scheduler and run the daemons")
    r.add_argument("--data-dir", required=True)
    r.add_argument("--host", default="127.0.0.1")
    r.add_argument("--port", type=int, default=8080)
    r.add_argument("--quorum", type=int)
    r.add_argument("--replication", type=int)
    r.add_argument("--deadline-secs", type=float)
    r.add_argument("--range-width", type=int, help="evens per work unit")
    r.add_argument("--range-limit", type=int, help="stop generating work past this even number")
    r.add_argument("--poll-interval", type=float, help="daemon poll interval in seconds")
    r.add_argument("--retention-secs", type=float)
    r.add_argument("--durable", action="store_true", help="fsync every commit")
    r.set_defaults(func=cmd_server_run)

    wk = groups.add_parser("worker").add_subparsers(dest="cmd", required=True)
    w = wk.add_parser("run", help="fetch, compute and report work units")
    w.add_argument("--server", required=True)
    w.add_argument("--name", required=True, help="volunteer user name")
    w.add_argument("--cpu-class", type=int, default=1)
    w.add_argument("--work-dir", required=True)
    w.add_argument("--ram", type=int, default=2**30)
    w.add_argument("--disk", type=int, default=10 * 2**30)
    w.add_argument("--poll-interval", type=float, default=10.0)
    w.add_argument("--idle-exit", type=float, help="exit after this many idle seconds")
    w.add_argument("--max-tasks", type=int)
    w.add_argument("--behavior", choices=("honest", "cheat", "dropout"), default="honest", help=argparse.SUPPRESS)
    w.set_defaults(func=cmd_worker_run)

    sm = groups.add_parser("sim").add_subparsers(dest="cmd", required=True)
    s = sm.add_parser("run", help="run a seeded simulation and write the daily trace")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--days", type=int, default=10)
    s.add_argument("--cheaters", type=float, default=0.0)
    s.add_argument("--dropouts", type=float, default=0.0)
    s.add_argument("--slow", type=float, default=0.0)
    s.add_argument("--initial-hosts", type=int, default=0)
    s.add_argument("--availability", choices=("always", "spread", "single"), default="always")
    s.add_argument("--range-limit", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sim_run)
    sat = sm.add_parser("saturate", help="scheduler queue under a multiplied request rate")
    sat.add_argument("--multiplier", type=float, default=1.0)
    sat.add_argument("--seed", type=int, default=0)
    sat.add_argument("--ticks", type=int, default=300)
    sat.set_defaults(func=cmd_sim_saturate)

    st = groups.add_parser("stats").add_subparsers(dest="cmd", required=True)
    t = st.add_parser("throughput", help="estimated flops from validated results")
    t.add_argument("--data-dir", required=True)
    t.add_argument("--window-secs", type=float, default=3600.0)
    t.add_argument("--flops-per-even", type=float, default=1000.0)
    t.add_argument("--end", type=float, help="window end (default: now)")
    t.set_defaults(func=cmd_stats_throughput)
    g = st.add_parser("growth", help="new users and hosts per day")
    g.add_argument("--data-dir", required=True)
    g.add_argument("--csv")
    g.set_defaults(func=cmd_stats_growth)

    ad = groups.add_parser("admin").add_subparsers(dest="admin_cmd", required=True)
    for name in ("init", "status"):
        a = ad.add_parser(name)
        a.add_argument("--data-dir", required=True)
    a = ad.add_parser("cancel-wu")
    a.add_argument("--data-dir", required=True)
    a.add_argument("wu_id", type=int)
    a = ad.add_parser("set-config")
    a.add_argument("--data-dir", required=True)
    a.add_argument("key")
    a.add_argument("value")
    for sub in ad.choices.values():
        sub.set_defaults(func=cmd_admin)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (GoldgridError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
