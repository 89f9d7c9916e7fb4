"""Two-stream video person re-identification with learned optical flow."""

__version__ = "0.1.0"
