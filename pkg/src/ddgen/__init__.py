"""ddgen: generative sampling of image-shaped datasets in a 1-D dual divergence space."""

__version__ = "0.1.0"
