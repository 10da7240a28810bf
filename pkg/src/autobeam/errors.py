"""Exception types shared by the library and the command line."""


class AutobeamError(Exception):
    exit_code = 1


class UsageError(AutobeamError, ValueError):
    """Invalid arguments or calls made in the wrong state."""

    exit_code = 2


class DataError(AutobeamError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 3
