"""Joint angle-frequency power spectrum estimation from compressed array samples."""

__version__ = "0.1.0"
