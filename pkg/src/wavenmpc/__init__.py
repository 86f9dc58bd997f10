"""Preview NMPC for an underwater vehicle in waves, with fixed-point wave prediction."""

__version__ = "0.1.0"
