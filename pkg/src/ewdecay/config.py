"""Run configuration: JSON blocks mapped onto dataclasses, unknown keys rejected."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import List, Optional, Union


class ConfigError(ValueError):
    pass


@dataclass
class GeometryConfig:
    dim: int = 2
    R0: float = 1.0
    R1: float = 2.0
    n_r: int = 24
    n_theta: int = 200
    n_face: int = 6
    mesh_path: Optional[str] = None


@dataclass
class TensorConfig:
    kind: str = "constant-lame"
    lambda0: float = 1.0
    mu0: float = 1.0
    eps: float = 0.25
    s: float = 1.0


@dataclass
class DampingConfig:
    enabled: bool = True
    R_d: float = 1.5
    a0: float = 5.0
    xi: float = 0.2
    a_min: Optional[float] = None


@dataclass
class NonlinearityConfig:
    enabled: bool = True
    p: Union[float, List[float]] = 3.0


@dataclass
class TimeConfig:
    T: float = 10.0
    cfl_safety: float = 0.9
    record_every: int = 1
    dt_max: float = 0.02


@dataclass
class InitialDataConfig:
    kind: str = "fourier-mode"
    seed: int = 0
    amplitude: float = 0.2


@dataclass
class OutputConfig:
    snapshot_every: int = 0
    trace: str = "trace.csv"


@dataclass
class ChecksConfig:
    delta_extend: bool = False
    delta_tol: float = 1e-8


@dataclass
class FlagsConfig:
    force: bool = False
    out_of_theory_2d: bool = True


@dataclass
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    tensor: TensorConfig = field(default_factory=TensorConfig)
    damping: DampingConfig = field(default_factory=DampingConfig)
    nonlinearity: NonlinearityConfig = field(default_factory=NonlinearityConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    initial_data: InitialDataConfig = field(default_factory=InitialDataConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    checks: ChecksConfig = field(default_factory=ChecksConfig)
    flags: FlagsConfig = field(default_factory=FlagsConfig)

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def replace(self, **blocks):
        """Copy with selected fields of selected blocks overridden.

        ``cfg.replace(time={"T": 4}, damping={"enabled": False})``
        """
        d = self.to_dict()
        for block, values in blocks.items():
            if block not in d:
                raise ConfigError(f"unknown block {block!r}")
            d[block].update(values)
        return from_dict(d)

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return from_dict(data)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(text)


TENSOR_KINDS = ("constant-lame", "lame-quadratic", "lame-exponential")
INITIAL_KINDS = ("radial-bump", "random-seeded", "fourier-mode")

_NUMBER = (int, float)


def _coerce(block_name, f, value):
    name = f"{block_name}.{f.name}"
    t = f.type
    if value is None:
        if "Optional" in str(t):
            return None
        raise ConfigError(f"{name} must not be null")
    if t in ("int", int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer")
        return value
    if t in ("float", float):
        if isinstance(value, bool) or not isinstance(value, _NUMBER):
            raise ConfigError(f"{name} must be a number")
        return float(value)
    if t in ("bool", bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean")
        return value
    if "Union[float, List[float]]" in str(t):
        if isinstance(value, list):
            if not all(isinstance(v, _NUMBER) and not isinstance(v, bool) for v in value):
                raise ConfigError(f"{name} must be a number or list of numbers")
            return [float(v) for v in value]
        if isinstance(value, bool) or not isinstance(value, _NUMBER):
            raise ConfigError(f"{name} must be a number or list of numbers")
        return float(value)
    if "Optional[float]" in str(t):
        if isinstance(value, bool) or not isinstance(value, _NUMBER):
            raise ConfigError(f"{name} must be a number or null")
        return float(value)
    if "str" in str(t):
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string")
        return value
    raise ConfigError(f"unsupported field type for {name}")  # pragma: no cover


def from_dict(data):
    """Build a RunConfig from nested dicts; missing keys take defaults."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    blocks = {f.name: f for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - set(blocks)
    if unknown:
        raise ConfigError(f"unknown config block(s): {sorted(unknown)}")
    kwargs = {}
    for name, bf in blocks.items():
        cls = bf.default_factory().__class__
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"block {name!r} must be an object")
        fields = {f.name: f for f in dataclasses.fields(cls)}
        bad = set(raw) - set(fields)
        if bad:
            raise ConfigError(f"unknown key(s) in {name}: {sorted(bad)}")
        kwargs[name] = cls(**{k: _coerce(name, fields[k], v) for k, v in raw.items()})
    cfg = RunConfig(**kwargs)
    validate(cfg)
    return cfg


def validate(cfg):
    g, t = cfg.geometry, cfg.time
    if g.dim not in (2, 3):
        raise ConfigError("geometry.dim must be 2 or 3")
    if not (0 < g.R0 < g.R1):
        raise ConfigError("geometry requires 0 < R0 < R1")
    if cfg.tensor.kind not in TENSOR_KINDS:
        raise ConfigError(f"tensor.kind must be one of {TENSOR_KINDS}")
    if cfg.initial_data.kind not in INITIAL_KINDS:
        raise ConfigError(f"initial_data.kind must be one of {INITIAL_KINDS}")
    if t.T <= 0 or t.cfl_safety <= 0 or t.dt_max <= 0 or t.record_every < 1:
        raise ConfigError("time block requires T, cfl_safety, dt_max > 0 and record_every >= 1")
    if cfg.output.snapshot_every < 0:
        raise ConfigError("output.snapshot_every must be >= 0")
    if not (0 <= cfg.initial_data.seed < 2**64):
        raise ConfigError("initial_data.seed must be a 64-bit unsigned integer")
    p = cfg.nonlinearity.p
    if isinstance(p, list) and len(p) != g.dim:
        raise ConfigError(f"nonlinearity.p must have {g.dim} entries")
    if g.dim == 2 and not cfg.flags.out_of_theory_2d:
        raise ConfigError("2D runs are outside the theory (n >= 3); set flags.out_of_theory_2d")
    return cfg
