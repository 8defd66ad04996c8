"""Object-based set similarity for labelled object-detection datasets."""

__version__ = "0.1.0"
