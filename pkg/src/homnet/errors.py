"""Exception types; each maps to a CLI exit code."""


class HomnetError(Exception):
    exit_code = 1


class ConfigError(HomnetError):
    exit_code = 2


class DataError(HomnetError):
    exit_code = 3


class InfeasibleError(HomnetError):
    exit_code = 4
