# MIT License
# Copyright (c) 2025 Ronnie Garrison
"""Run configuration: validated pydantic model, YAML loading, thread sizing."""
from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import AfterValidator, BaseModel, ConfigDict, Field, ValidationError, field_validator
from typing_extensions import Annotated

from .errors import ConfigError

ALGORITHMS = ("utc-cfr-rm+", "utc-cfr-rm")
THREADS_ENV = "UTC_EQ_THREADS"


def _resolve_output_dir(path: Path) -> Path:
    try:
        resolved = path.expanduser().resolve(strict=False)
    except (OSError, RuntimeError):
        resolved = path.expanduser()
    if resolved.exists():
        if not resolved.is_dir():
            raise ValueError(f"output path '{resolved}' exists and is not a directory")
        if not os.access(resolved, os.W_OK):
            raise ValueError(f"output directory '{resolved}' is not writable")
        return resolved
    parent = resolved.parent
    while not parent.exists() and parent != parent.parent:
        parent = parent.parent
    if not os.access(parent, os.W_OK):
        raise ValueError(f"cannot create output directory under '{parent}'")
    return resolved


OutputDir = Annotated[Path, AfterValidator(_resolve_output_dir)]


class RunConfig(BaseModel):
    """Parameters of one learning run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    game: str
    algo: Literal["utc-cfr-rm+", "utc-cfr-rm"] = "utc-cfr-rm+"
    iters: int = Field(default=1000, ge=1)
    time_limit: Optional[float] = Field(default=None, gt=0)
    seed: int = 0
    eps_fp: float = Field(default=1e-9, gt=0)
    log_every: int = Field(default=50, ge=1)
    out: Optional[OutputDir] = None
    timing: bool = True
    normalize: bool = False
    threads: Optional[int] = Field(default=None, ge=1)
    export_deviations: bool = False

    @field_validator("game")
    @classmethod
    def _check_game(cls, value: str) -> str:
        from .games import GameSpec

        GameSpec.parse(value)
        return value

    @property
    def plus(self) -> bool:
        return self.algo == "utc-cfr-rm+"

    @classmethod
    def create(cls, **values: Any) -> "RunConfig":
        """Validate keyword values, turning validation failures into ConfigError."""
        try:
            return cls(**{k: v for k, v in values.items() if v is not None})
        except ValidationError as exc:
            raise ConfigError(_format_validation_error(exc)) from exc

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "RunConfig":
        runs = load_run_configs(path)
        if len(runs) != 1:
            raise ConfigError(f"{path}: expected exactly one run, found {len(runs)}")
        return runs[0]


def _format_validation_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err.get("loc", ())) or "config"
        parts.append(f"{loc}: {err.get('msg')}")
    return "; ".join(parts)


def load_run_configs(path: Union[str, Path], **overrides: Any) -> List[RunConfig]:
    """Read one mapping or a `runs:` list from a YAML document."""
    source = Path(path).expanduser()
    if not source.is_file():
        raise ConfigError(f"config file not found: {source}")
    try:
        with source.open("r", encoding="utf-8") as f:
            document = yaml.safe_load(f) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: invalid YAML ({exc})") from exc
    entries: List[Dict[str, Any]]
    if isinstance(document, dict) and "runs" in document:
        defaults = {k: v for k, v in document.items() if k != "runs"}
        entries = [{**defaults, **(run or {})} for run in document["runs"] or []]
    elif isinstance(document, dict):
        entries = [document]
    else:
        raise ConfigError(f"{source}: expected a mapping or a 'runs' list")
    if not entries:
        raise ConfigError(f"{source}: no runs defined")
    return [RunConfig.create(**{**entry, **overrides}) for entry in entries]


def resolve_threads(config: Optional[RunConfig], players: int) -> int:
    """Worker count: explicit setting, then UTC_EQ_THREADS, then min(players, cpus)."""
    if config is not None and config.threads is not None:
        return config.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer (got {env!r})") from exc
        if value < 1:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer (got {env!r})")
        return value
    return max(1, min(players, os.cpu_count() or 1))
