"""Bundled datasets."""

from importlib.resources import files
from pathlib import Path


def galaxy_path() -> Path:
    """Path to the bundled galaxy-velocity data file (82 obs, 1000 km/s units)."""
    return Path(str(files(__package__) / "galaxies.txt"))
