# MIT License
# Copyright (c) 2025 Ronnie Garrison
"""Atomic artifact writes (CSV, JSON, GraphML) and JSON reads."""
from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any, Union

import numpy as np

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _tmp_path(target: Path) -> Path:
    return (
        target.with_suffix(target.suffix + ".tmp")
        if target.suffix
        else target.with_name(target.name + ".tmp")
    )


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    """Write bytes through a fsynced temporary file, then replace the target."""
    target = Path(path).expanduser()
    tmp = _tmp_path(target)
    tmp.parent.mkdir(parents=True, exist_ok=True)
    with open(tmp, "wb") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    os.replace(str(tmp), str(target))
    logger.debug("Saved %d bytes to %s", len(data), target)
    return target


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def _to_builtin(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def dumps_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_to_builtin) + "\n"


def write_json(path: PathLike, obj: Any) -> Path:
    return atomic_write_text(path, dumps_json(obj))


def read_json(path: PathLike) -> Any:
    with open(Path(path).expanduser(), "r", encoding="utf-8") as f:
        return json.load(f)
