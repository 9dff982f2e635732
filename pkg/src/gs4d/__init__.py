"""Four-dimensional modulation format design: GMI, shaping, link model and SSFM."""

__version__ = "0.1.0"
