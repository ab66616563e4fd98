"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to; file format
errors also carry a short ``code`` naming the failure.
"""


class HopcError(Exception):
    exit_code = 1
    code = "error"


class ConfigError(HopcError, ValueError):
    exit_code = 2


class DataError(HopcError, ValueError):
    exit_code = 3


class MalformedHeaderError(DataError):
    code = "malformed-header"


class TruncatedPayloadError(DataError):
    code = "truncated-payload"


class VersionMismatchError(DataError):
    code = "version-mismatch"


class NumericalError(HopcError, ArithmeticError):
    exit_code = 4
