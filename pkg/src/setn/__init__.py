"""Statistics-encoded tensor networks for disorder-averaged spin chains."""

__version__ = "0.1.0"
