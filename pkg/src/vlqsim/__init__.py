"""Variable-length limited-feedback quantizer simulation toolkit."""

__version__ = "0.1.0"
