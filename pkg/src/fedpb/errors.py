"""Exception types raised across the simulator.

Errors fall in two families that the CLI maps to distinct exit codes:
configuration problems (exit 1) and unreadable or corrupt input data (exit 2).
"""


class FedPBError(Exception):
    """Base class for all simulator errors."""


class ConfigError(FedPBError, ValueError):
    """Invalid arguments or configuration values."""


class DataError(FedPBError):
    """Input data that cannot be read or is corrupt."""


# email_ingest
class MalformedMessage(DataError):
    """Raw email bytes have no header/body separator."""


# embedding
class DimensionMismatch(DataError):
    def __init__(self, line_no: int, expected: int, got: int):
        super().__init__(f"line {line_no}: expected {expected} values, got {got}")
        self.line_no = line_no
        self.expected = expected
        self.got = got


class ParseFailure(DataError):
    def __init__(self, line_no: int, detail: str):
        super().__init__(f"line {line_no}: {detail}")
        self.line_no = line_no


class IndexOutOfRange(DataError, IndexError):
    """An encoded sample refers to a row the embedding table does not have."""


# nn_core
class ShapeMismatch(ConfigError):
    pass


class LengthMismatch(ConfigError):
    pass


class EmptyDataset(ConfigError):
    pass


class CheckpointMismatch(DataError):
    """Checkpoint architecture descriptor differs from the expected one."""


# data_partition
class EmptyClass(ConfigError):
    pass


class TooManyClients(ConfigError):
    pass


class InsufficientClassSamples(ConfigError):
    pass


# fed_protocol
class InvalidSelection(ConfigError):
    pass


class EmptyClient(ConfigError):
    pass


class EmptyUpdateSet(ConfigError):
    pass


# harness
class ConfigInvalid(ConfigError):
    def __init__(self, field: str, detail: str):
        super().__init__(f"{field}: {detail}")
        self.field = field


class DataUnreadable(DataError):
    def __init__(self, path, detail: str = "cannot be read"):
        super().__init__(f"{path}: {detail}")
        self.path = path
