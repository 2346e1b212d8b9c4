"""Bundled workload documents."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def fixture_path(name: str) -> Path:
    """Path of the bundled document ``name`` (with or without ``.json``)."""
    if not name.endswith(".json"):
        name += ".json"
    path = Path(str(resources.files(__package__) / name))
    if not path.is_file():
        raise FileNotFoundError(f"no bundled fixture {name!r}")
    return path


def names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files(__package__).iterdir() if p.name.endswith(".json"))
