"""Value types for the Goldbach workload and their compact encodings."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from goldgrid.errors import CheckpointMismatch, InvalidArgument, InvalidPayload

MASK64 = (1 << 64) - 1

_RESULT = struct.Struct("<5Q")
_CHECKPOINT = struct.Struct("<7Q")


@dataclass(frozen=True)
class GoldbachRange:
    """Inclusive range of even numbers ``start..end``."""

    start: int
    end: int

    def __post_init__(self):
        if self.start % 2 or self.end % 2:
            raise InvalidArgument(f"range bounds must be even: [{self.start}, {self.end}]")
        if self.start < 4:
            raise InvalidArgument(f"range must start at 4 or above, got {self.start}")
        if self.end < self.start:
            raise InvalidArgument(f"empty range [{self.start}, {self.end}]")
        if self.end > MASK64:
            raise InvalidArgument("range exceeds 64-bit integers")

    @property
    def evens(self) -> int:
        return (self.end - self.start) // 2 + 1

    def __contains__(self, n) -> bool:
        return self.start <= n <= self.end and n % 2 == 0


@dataclass(frozen=True)
class GoldbachResult:
    evens_checked: int
    max_min_p: int
    argmax_n: int
    checksum64: int
    counterexample: Optional[int] = None

    def to_bytes(self) -> bytes:
        return _RESULT.pack(
            self.evens_checked,
            self.max_min_p,
            self.argmax_n,
            self.checksum64,
            self.counterexample or 0,
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "GoldbachResult":
        ev, mp, am, cs, ce = _RESULT.unpack(data)
        return cls(ev, mp, am, cs, ce or None)

    def to_json(self) -> dict:
        out = {
            "evens_checked": self.evens_checked,
            "max_min_p": self.max_min_p,
            "argmax_n": self.argmax_n,
            "checksum64": str(self.checksum64),
        }
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample
        return out

    @classmethod
    def from_json(cls, obj) -> "GoldbachResult":
        """Parse a wire payload, raising InvalidPayload on anything malformed."""
        if not isinstance(obj, dict):
            raise InvalidPayload("payload must be an object")
        try:
            fields = [obj["evens_checked"], obj["max_min_p"], obj["argmax_n"]]
            checksum = obj["checksum64"]
        except KeyError as exc:
            raise InvalidPayload(f"missing field {exc.args[0]}") from None
        for value in fields:
            if isinstance(value, bool) or not isinstance(value, int):
                raise InvalidPayload("integer field expected")
        if isinstance(checksum, bool) or not isinstance(checksum, (str, int)):
            raise InvalidPayload("checksum64 must be a decimal string")
        try:
            checksum = int(checksum)
        except ValueError:
            raise InvalidPayload(f"bad checksum64 {checksum!r}") from None
        ce = obj.get("counterexample")
        if ce is not None and (isinstance(ce, bool) or not isinstance(ce, int)):
            raise InvalidPayload("counterexample must be an integer")
        if any(v < 0 or v > MASK64 for v in fields + [checksum]) or (
            ce is not None and not 0 < ce <= MASK64
        ):
            raise InvalidPayload("field outside the unsigned 64-bit range")
        return cls(fields[0], fields[1], fields[2], checksum, ce)

    def is_consistent_with(self, rng: GoldbachRange) -> bool:
        """Structural check a validator can run without recomputing."""
        if self.counterexample is not None:
            ce = self.counterexample
            if ce not in rng or self.evens_checked != (ce - rng.start) // 2 + 1:
                return False
            if self.evens_checked == 1:
                return self.max_min_p == 0 and self.argmax_n == 0
        elif self.evens_checked != rng.evens:
            return False
        return self.max_min_p >= 2 and self.argmax_n in rng


@dataclass(frozen=True)
class Checkpoint:
    """Scan state after ``evens_done`` evens; ``next_n`` is the next to test.

    ``partial_max_min_p`` and ``partial_argmax_n`` are 0 before the first even.
    """

    range: GoldbachRange
    next_n: int
    partial_checksum: int
    partial_max_min_p: int
    partial_argmax_n: int
    evens_done: int

    @classmethod
    def initial(cls, rng: GoldbachRange) -> "Checkpoint":
        return cls(rng, rng.start, 0, 0, 0, 0)

    def check_against(self, rng: GoldbachRange) -> None:
        if self.range != rng:
            raise CheckpointMismatch(f"checkpoint is for {self.range}, not {rng}")
        if not rng.start <= self.next_n <= rng.end + 2 or self.next_n % 2:
            raise CheckpointMismatch(f"next_n {self.next_n} outside {rng}")
        if (self.next_n - rng.start) // 2 != self.evens_done:
            raise CheckpointMismatch("evens_done does not match next_n")

    def to_bytes(self) -> bytes:
        return _CHECKPOINT.pack(
            self.range.start,
            self.range.end,
            self.next_n,
            self.partial_checksum,
            self.partial_max_min_p,
            self.partial_argmax_n,
            self.evens_done,
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if len(data) != _CHECKPOINT.size:
            raise CheckpointMismatch(f"checkpoint must be {_CHECKPOINT.size} bytes, got {len(data)}")
        start, end, nxt, cs, mp, am, done = _CHECKPOINT.unpack(data)
        try:
            rng = GoldbachRange(start, end)
        except InvalidArgument as exc:
            raise CheckpointMismatch(str(exc)) from None
        return cls(rng, nxt, cs, mp, am, done)

    def save(self, path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(self.to_bytes())
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())
