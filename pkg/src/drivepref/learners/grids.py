"""Hyperparameter grids: one config file declares every kind's sweep."""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from ..errors import ParseError
from .base import MODEL_KINDS


def load_grids(path: str | Path | None = None) -> dict[str, list[dict]]:
    """Grid points per model kind, in declared order (order breaks selection ties)."""
    if path is None:
        text = resources.files("drivepref.configs").joinpath("model_grids.json").read_text()
        src = "<default grids>"
    else:
        text = Path(path).read_text()
        src = path
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, path=src, line=e.lineno) from e
    for kind, points in obj.items():
        if kind not in MODEL_KINDS:
            raise ParseError(f"unknown model kind {kind!r} in grid config", path=src)
        if not isinstance(points, list) or not all(isinstance(p, dict) for p in points):
            raise ParseError(f"grid for {kind!r} must be a list of objects", path=src)
    return obj
