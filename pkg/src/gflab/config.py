"""Run configuration: loading, validation and command-line overrides."""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

DYNAMICS = ("aggregate", "boltzmann")
INIT_NAMES = ("normal", "uniform", "twopoint")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"invalid config key '{key}': {message}")


@dataclass
class SimConfig:
    dynamics: str = "aggregate"
    e: float = 0.5
    n: int = 100
    T: float = 5.0
    dt: float = 1e-3
    init: object = "normal"
    seed: int = 0
    replicas: int = 1
    grid: str | None = None
    out: str | None = None
    record_every: int = 1
    threads: int = 1
    e_list: list | None = None
    perturbations: int = 5
    K: int = 32
    iters: int = 20
    mu0: str | None = None
    mu1: str | None = None
    base_dir: str = field(default=".", repr=False, compare=False)

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------------
    def validate(self) -> "SimConfig":
        if self.dynamics not in DYNAMICS:
            raise ConfigError("dynamics", f"must be one of {', '.join(DYNAMICS)}, got {self.dynamics!r}")
        self.e = _real("e", self.e)
        if not 0.0 <= self.e <= 1.0:
            raise ConfigError("e", f"restitution must lie in [0, 1], got {self.e!r}")
        self.n = _count("n", self.n, 1)
        self.T = _real("T", self.T)
        if self.T < 0:
            raise ConfigError("T", "time horizon must be nonnegative")
        self.dt = _real("dt", self.dt)
        if not self.dt > 0:
            raise ConfigError("dt", "step size must be positive")
        self.seed = _integer("seed", self.seed)
        if self.seed < 0:
            raise ConfigError("seed", "seed must be nonnegative")
        self.replicas = _count("replicas", self.replicas, 1)
        self.record_every = _count("record_every", self.record_every, 1)
        self.threads = _count("threads", self.threads, 1)
        self.perturbations = _count("perturbations", self.perturbations, 1)
        self.K = _count("K", self.K, 1)
        self.iters = _count("iters", self.iters, 0)
        if self.e_list is not None:
            if not isinstance(self.e_list, (list, tuple)) or not self.e_list:
                raise ConfigError("e_list", "must be a nonempty list of restitution values")
            vals = [_real("e_list", x) for x in self.e_list]
            if any(not 0.0 <= x <= 1.0 for x in vals):
                raise ConfigError("e_list", "every restitution must lie in [0, 1]")
            self.e_list = vals
        if self.grid is not None:
            from .measures import GridSpec

            try:
                GridSpec.parse(str(self.grid))
            except (ValueError, TypeError) as err:
                raise ConfigError("grid", str(err)) from None
        self._validate_init()
        for key in ("mu0", "mu1"):
            path = getattr(self, key)
            if path is not None and not self.resolve(path).is_file():
                raise ConfigError(key, f"file not found: {path}")
        return self

    def _validate_init(self):
        init = self.init
        if isinstance(init, dict):
            unknown = set(init) - {"name", "params"}
            if unknown:
                raise ConfigError("init", f"unknown entries {sorted(unknown)}")
            name = init.get("name")
            params = init.get("params", {}) or {}
            if not isinstance(params, dict):
                raise ConfigError("init", "params must be a mapping")
        elif isinstance(init, str):
            name, params = init, {}
        else:
            raise ConfigError("init", "must be a name, a file path or {name, params}")
        if name in INIT_NAMES:
            if name == "twopoint" and self.n % 2:
                raise ConfigError("init", "twopoint initial data needs an even particle count")
            for k, v in params.items():
                if k not in ("scale", "center"):
                    raise ConfigError("init", f"unknown parameter {k!r}")
                _real("init", v)
        elif name == "file" or (isinstance(name, str) and self.resolve(name).suffix in (".csv", ".json")):
            path = params.get("path") if name == "file" else name
            if path is None or not self.resolve(path).is_file():
                raise ConfigError("init", f"file not found: {path}")
        else:
            raise ConfigError("init", f"unknown initial data {name!r}")

    # ------------------------------------------------------------------
    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def init_spec(self) -> tuple[str, dict]:
        """``(name, params)``; file initial data is reported as ``("file", {"path": ...})``."""
        init = self.init
        if isinstance(init, dict):
            name, params = init["name"], dict(init.get("params", {}) or {})
        else:
            name, params = init, {}
        if name not in INIT_NAMES and name != "file":
            params = {"path": name}
            name = "file"
        return name, params

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


def _real(key, value) -> float:
    if isinstance(value, bool):
        raise ConfigError(key, "expected a number")
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {value!r}") from None
    if not math.isfinite(x):
        raise ConfigError(key, "must be finite")
    return x


def _integer(key, value) -> int:
    if isinstance(value, bool):
        raise ConfigError(key, "expected an integer")
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if not isinstance(value, int):
        try:
            value = int(str(value))
        except ValueError:
            raise ConfigError(key, f"expected an integer, got {value!r}") from None
    return value


def _count(key, value, minimum) -> int:
    v = _integer(key, value)
    if v < minimum:
        raise ConfigError(key, f"must be >= {minimum}")
    return v


FIELDS = tuple(f.name for f in dataclasses.fields(SimConfig) if f.name != "base_dir")


def from_dict(data: dict, base_dir: str = ".", **defaults) -> SimConfig:
    """Build a config; unknown keys are rejected by name."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    for key in data:
        if key not in FIELDS:
            raise ConfigError(key, "unknown key")
    merged = {**defaults, **data}
    return SimConfig(**merged, base_dir=base_dir)


def load(path, **defaults) -> SimConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as err:
        raise ConfigError("config", f"cannot read {path}: {err.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError("config", f"not valid JSON: {err}") from None
    return from_dict(data, base_dir=str(p.parent), **defaults)


def output_root() -> Path:
    """Root for relative output directories; ``GFL_OUT`` overrides the working directory."""
    return Path(os.environ.get("GFL_OUT") or ".")
