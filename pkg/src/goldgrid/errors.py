"""Exception types shared across the package."""


class GoldgridError(Exception):
    pass


class NotFound(GoldgridError, KeyError):
    def __init__(self, kind, key):
        super().__init__(f"{kind} {key!r} not found")
        self.kind = kind
        self.key = key

    def __str__(self):
        return self.args[0]


class InvalidArgument(GoldgridError, ValueError):
    pass


class InvalidPayload(GoldgridError, ValueError):
    pass


class StoreError(GoldgridError):
    pass


class TransactionAborted(StoreError):
    """Raised by fault-injecting stores to simulate a crash mid-transaction."""


class CheckpointMismatch(GoldgridError, ValueError):
    pass


class OracleRangeTooLarge(GoldgridError, ValueError):
    pass


class IoError(GoldgridError, OSError):
    pass
