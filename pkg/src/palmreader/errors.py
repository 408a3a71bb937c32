"""Exception types shared across the package.

Argument-contract violations raise plain ValueError; these classes cover
failures the HTTP service and CLI map to distinct exit paths.
"""


class PalmError(Exception):
    """Base class for palmreader failures."""


class BadImageError(PalmError):
    """Input bytes could not be decoded as an image."""


class DatasetError(PalmError):
    """Dataset is empty, malformed, or violates a training precondition."""


class CorruptModelError(PalmError):
    """Model file is truncated, malformed, or has an unsupported version."""


class RuleTableError(PalmError):
    """Rule table file is missing required entries or fails to parse."""


class ConfigError(PalmError):
    """Pipeline config file is malformed, out of range, or references missing files."""
