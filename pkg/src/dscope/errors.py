"""Exception types shared across the package."""


class DataError(Exception):
    """Raised when user-supplied data (files, records, stores) is invalid.

    The CLI maps this to exit code 2; everything else is an internal error.
    """
