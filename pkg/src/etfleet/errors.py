"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid scenario/CLI configuration. Maps to exit code 1."""


class DataError(Exception):
    """Unreadable or malformed input data. Maps to exit code 2."""


class RecordParseError(DataError):
    """A trajectory record row that could not be decoded."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason
