"""Shipped experiment configs."""
from __future__ import annotations

from importlib import resources


def names() -> list[str]:
    return sorted(p.name for p in resources.files(__name__).iterdir() if p.name.endswith(".cfg"))


def read_text(name: str) -> str:
    if name not in names():
        raise FileNotFoundError(name)
    return resources.files(__name__).joinpath(name).read_text()
