"""Random Fourier feature maps and their communication-link demonstrators."""

__version__ = "0.1.0"
