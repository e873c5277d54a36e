"""DCT-domain convolutional network for PSG pseudo-images."""

__version__ = "0.1.0"
