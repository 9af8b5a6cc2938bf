"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: config errors exit 2, data errors exit 3,
numeric failures exit 4.
"""


class GFAttackError(Exception):
    exit_code = 1


class ConfigError(GFAttackError):
    exit_code = 2


class DataError(GFAttackError):
    exit_code = 3


class FormatError(DataError):
    """A file could not be parsed. Carries the offending path and line."""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class IntegrityError(DataError):
    pass


class PreconditionError(DataError):
    pass


class ContractError(GFAttackError):
    exit_code = 2


class NumericError(GFAttackError):
    exit_code = 4
