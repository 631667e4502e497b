"""Random-forest / TreeSHAP source-impact pathway discovery for ensemble time series."""

__version__ = "0.1.0"
