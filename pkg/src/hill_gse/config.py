"""Run configuration shared by the CLI subcommands."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

from .errors import ConfigError
from .kernel import kernel_from_config

SEED_ENV = "HILL_GSE_SEED"


@dataclass
class RunConfig:
    """Everything that determines a run's numerical output.

    Worker counts are deliberately absent: they never change results and
    are passed on the command line only.
    """

    kernel: dict = field(default_factory=lambda: {"type": "ou", "m": 1.0})
    grid_size: int = 512
    galerkin_modes: int = 64
    ode_steps: int = 4096
    seed: int = 42
    n_samples: int = 10000
    lambdas: list | None = None
    tilt: str = "none"
    theta: float = 1.0
    tolerances: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not isinstance(self.kernel, dict):
            raise ConfigError("'kernel' must be a mapping")
        for name in ("grid_size", "galerkin_modes", "ode_steps", "seed", "n_samples"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.galerkin_modes < 1 or self.galerkin_modes > self.grid_size // 2:
            raise ConfigError("galerkin_modes must lie in [1, grid_size/2]")
        if self.ode_steps < self.grid_size or self.ode_steps & (self.ode_steps - 1):
            raise ConfigError("ode_steps must be a power of two >= grid_size")
        if self.tilt not in ("none", "auto"):
            raise ConfigError("tilt must be 'none' or 'auto'")
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError("theta must lie in [0, 1]")
        self.make_kernel()

    def kernel_spec(self):
        return {**self.kernel, "grid_size": self.grid_size}

    def make_kernel(self):
        return kernel_from_config(self.kernel_spec())

    def to_dict(self):
        return dataclasses.asdict(self)

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def sha256(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def replace(self, **changes):
        d = self.to_dict()
        d.update({k: v for k, v in changes.items() if v is not None})
        return RunConfig(**d)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_config(path):
    """Read a JSON config; ``"default"`` or ``None`` gives the defaults."""
    if path in (None, "default"):
        return RunConfig()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(data)


def apply_seed_override(cfg, cli_seed=None, env=None):
    """Config seed, then the environment override, then an explicit flag."""
    env = os.environ if env is None else env
    seed = cfg.seed
    if env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    if cli_seed is not None:
        seed = int(cli_seed)
    return cfg.replace(seed=seed)
