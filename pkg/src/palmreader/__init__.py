"""Palm-line detection, classification, and trait reading."""

__version__ = "0.1.0"
