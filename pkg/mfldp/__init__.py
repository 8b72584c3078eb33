"""Path-space large deviations of mean-field jump processes."""

__version__ = "1.0.0"
