"""Extractor error types."""


class FeatxError(Exception):
    """Base class for extractor errors."""


class ManifestError(FeatxError):
    """Malformed or inconsistent extraction manifest."""


class SetupError(FeatxError):
    """A requested encoder backend is not available in this environment."""
