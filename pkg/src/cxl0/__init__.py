"""Executable model of coherent disaggregated memory with per-machine crashes."""

__version__ = "0.1.0"
