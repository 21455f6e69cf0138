"""Exception hierarchy shared across the package."""


class EdgarCorpusError(Exception):
    """Base class for every typed error raised by this package."""


class InvalidPath(EdgarCorpusError, ValueError):
    pass


class InvalidArgument(EdgarCorpusError, ValueError):
    pass


class NotFound(EdgarCorpusError):
    pass


class ConfigError(EdgarCorpusError):
    """Configuration failed validation; ``key`` names the offending setting."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
