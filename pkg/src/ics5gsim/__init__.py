"""Deterministic virtual testbed: bottle-filling ICS over wired and 5G mmWave links."""

__version__ = "0.1.0"
SCHEMA_VERSION = 1
