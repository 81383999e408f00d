"""Run configuration and the flat ``key = value`` config-file format."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    trees: int = 2
    depth: int = 12
    candidates: int = 2000       # random weak-classifier shapes per node
    thresholds: int = 60         # thresholds per shape
    samples: int = 100           # reservoir size per domain per frontier node
    finalist_shapes: int = 30
    finalist_thresholds: int = 10
    screen_entropy: int = 1      # 1: stage 1 ranks by entropy gain, 0: by the run's alpha
    orientations: int = 9
    grid: int = 8                # spatial bins per axis
    radius: float = 0.5          # rectangle offsets, units of sqrt(bbox area)
    min_syn: int = 50
    alpha: float = 0.2
    prior_grid: int = 24
    stride: int = 1
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        positive = ("trees", "depth", "candidates", "thresholds", "samples",
                    "finalist_shapes", "finalist_thresholds", "grid", "min_syn",
                    "prior_grid", "stride", "workers")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.screen_entropy not in (0, 1):
            raise ConfigError("screen_entropy must be 0 or 1")
        if self.orientations < 2:
            raise ConfigError("orientations must be >= 2")
        if not self.radius > 0:
            raise ConfigError("radius must be > 0")
        if self.depth > 255:
            raise ConfigError("depth must be <= 255")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")

    @property
    def n_bins(self) -> int:
        return self.grid * self.grid

    def snapshot(self) -> dict:
        """Everything that determines a trained model; workers excluded."""
        d = asdict(self)
        del d["workers"]
        return d

    def updated(self, **changes) -> "RunConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes)


def _coerce(name: str, raw: str):
    types = {f.name: f.type for f in fields(RunConfig)}
    if name not in types:
        raise ConfigError(f"unknown config key {name!r}")
    try:
        return float(raw) if types[name] in ("float", float) else int(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}")


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        values[key] = _coerce(key, raw)
    return values


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    values = parse_config_text(Path(path).read_text(encoding="utf-8"))
    try:
        return replace(base or RunConfig(), **values)
    except TypeError as err:
        raise ConfigError(str(err))
