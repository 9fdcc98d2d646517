"""Error types shared across the package."""


class ArgumentError(ValueError):
    """An argument violates an operation's precondition (bad k, sigma, ordering...)."""


class FormatError(ValueError):
    """An input file does not follow the expected layout."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class DimensionError(FormatError):
    """Rows of a tabular input have inconsistent lengths."""
