"""Parametric NPI control families, sampling, and grid discretization.

Five families: linear pulse, step, continuous seasonality, double step,
and piecewise-constant schedules.  All evaluate to levels in [0, 1].
Branch boundaries follow the closed-on-the-left convention written in the
family formulas (``t <= t0`` keeps the pre-switch level).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .epimodels import TimeGrid
from .errors import ConfigError

_LEVEL_TOL = 1e-12


def _check_level(name: str, v: float):
    if not (0.0 - _LEVEL_TOL <= v <= 1.0 + _LEVEL_TOL):
        raise ConfigError(f"{name}={v} outside [0, 1]")


@dataclass(frozen=True)
class LinearPulse:
    """Plateau u1 reached from baseline u0 by linear ramps around t0.

    Breakpoints at t0, t0 + width/3, t0 + 4*width/3, t0 + 5*width/3.
    width == 0 degenerates to the constant u0.
    """

    u0: float
    u1: float
    t0: float
    width: float

    def __post_init__(self):
        _check_level("u0", self.u0)
        _check_level("u1", self.u1)
        if self.t0 < 0 or self.width < 0:
            raise ConfigError("t0 and width must be nonnegative")

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ConfigError("t must be nonnegative")
        if self.width < 1e-300:  # degenerate: ramp slope would overflow
            return np.full_like(t, self.u0)
        w = self.width
        up = 3.0 * (self.u1 - self.u0) / w * (t - self.t0) + self.u0
        down = 3.0 * (self.u0 - self.u1) / w * (t - self.t0 - 4.0 * w / 3.0) + self.u1
        return np.where(
            t <= self.t0, self.u0,
            np.where(t <= self.t0 + w / 3.0, up,
                     np.where(t <= self.t0 + 4.0 * w / 3.0, self.u1,
                              np.where(t <= self.t0 + 5.0 * w / 3.0, down, self.u0))))


@dataclass(frozen=True)
class Step:
    """u0 for t <= t0, u1 afterwards."""

    u0: float
    u1: float
    t0: float

    def __post_init__(self):
        _check_level("u0", self.u0)
        _check_level("u1", self.u1)
        if self.t0 < 0:
            raise ConfigError("t0 must be nonnegative")

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ConfigError("t must be nonnegative")
        return np.where(t <= self.t0, self.u0, self.u1)


@dataclass(frozen=True)
class Seasonality:
    """u(t) = (u0/2) * (1 + cos(2*pi*t/t_star + (shift/t_star)*(pi/2)) / 2)."""

    u0: float
    shift: float
    t_star: float

    def __post_init__(self):
        _check_level("u0", self.u0)
        if self.t_star <= 0:
            raise ConfigError("t_star must be positive")

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.t_star):
            raise ConfigError(f"t outside [0, {self.t_star}]")
        phase = 2.0 * math.pi * t / self.t_star + (self.shift / self.t_star) * (math.pi / 2.0)
        return (self.u0 / 2.0) * (1.0 + 0.5 * np.cos(phase))


@dataclass(frozen=True)
class DoubleStep:
    """Alternating levels u0/u1 with switches at t0, t0 + width/2, t0 + width."""

    u0: float
    u1: float
    t0: float
    width: float

    def __post_init__(self):
        _check_level("u0", self.u0)
        _check_level("u1", self.u1)
        if self.t0 < 0 or self.width < 0:
            raise ConfigError("t0 and width must be nonnegative")

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ConfigError("t must be nonnegative")
        return np.where(
            t <= self.t0, self.u0,
            np.where(t <= self.t0 + self.width / 2.0, self.u1,
                     np.where(t <= self.t0 + self.width, self.u0, self.u1)))


@dataclass(frozen=True)
class PiecewiseConstant:
    """N equal slabs over (0, t_star]; level i applies on [t_{i-1}, t_i).

    The last slab is closed at t_star so every time receives a value.
    """

    levels: tuple[float, ...]
    t_star: float

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        if len(self.levels) < 1:
            raise ConfigError("piecewise-constant control needs at least one level")
        for v in self.levels:
            _check_level("level", v)
        if self.t_star <= 0:
            raise ConfigError("t_star must be positive")

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.t_star):
            raise ConfigError(f"t outside [0, {self.t_star}]")
        n = len(self.levels)
        slab = self.t_star / n
        # nudge guards grid nodes that land one ulp below a slab boundary
        idx = np.minimum((np.floor((t + 1e-9 * slab) / slab)).astype(int), n - 1)
        return np.asarray(self.levels)[idx]


ControlSpec = Union[LinearPulse, Step, Seasonality, DoubleStep, PiecewiseConstant]

_FAMILY_NAMES = {
    LinearPulse: "linear_pulse",
    Step: "step",
    Seasonality: "seasonality",
    DoubleStep: "double_step",
    PiecewiseConstant: "piecewise_constant",
}
_FAMILY_TYPES = {name: cls for cls, name in _FAMILY_NAMES.items()}


@dataclass(frozen=True)
class ControlSignal:
    """A control observed pointwise on the collocation grid."""

    grid: TimeGrid
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.shape != (self.grid.n,):
            raise ConfigError(f"samples shape {samples.shape} does not match grid n={self.grid.n}")
        object.__setattr__(self, "samples", samples)


def evaluate(spec: ControlSpec, t):
    """Exact evaluation of the family formula at time(s) t."""
    return spec.evaluate(t)


def discretize(spec: ControlSpec, grid: TimeGrid) -> ControlSignal:
    """Sample the control at every grid node: samples[k] = u(T_k)."""
    return ControlSignal(grid=grid, samples=np.asarray(spec.evaluate(grid.points), dtype=float))


@dataclass(frozen=True)
class SamplingBounds:
    """Uniform ranges for the family degrees of freedom.

    t0/width ranges default to [0, t_star] and [0, t_star/3].  overrides
    maps a family name (e.g. "seasonality") to the SamplingBounds used
    for that family instead of these shared ranges.
    """

    level_range: tuple[float, float] = (0.0, 1.0)
    t0_range: tuple[float, float] | None = None
    width_range: tuple[float, float] | None = None
    overrides: dict[str, "SamplingBounds"] | None = None

    def __post_init__(self):
        lo, hi = self.level_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ConfigError(f"level_range {self.level_range} must be within [0, 1]")
        if self.overrides:
            unknown = set(self.overrides) - set(_FAMILY_TYPES)
            if unknown:
                raise ConfigError(f"overrides for unknown families: {sorted(unknown)}")

    def for_family(self, family: str) -> "SamplingBounds":
        if self.overrides and family in self.overrides:
            return self.overrides[family]
        return self

    def resolved(self, t_star: float) -> tuple[tuple[float, float], tuple[float, float], tuple[float, float]]:
        t0 = self.t0_range if self.t0_range is not None else (0.0, t_star)
        width = self.width_range if self.width_range is not None else (0.0, t_star / 3.0)
        return self.level_range, t0, width


def sample_mixed_specs(seed: int, count: int, bounds: SamplingBounds, grid: TimeGrid) -> list[ControlSpec]:
    """Draw `count` specs split as evenly as possible across the four
    parametric families (remainder assigned in family order)."""
    if count < 4:
        raise ConfigError(f"mixed sampling needs count >= 4, got {count}")
    rng = np.random.default_rng(seed)
    base, rem = divmod(count, 4)
    counts = [base + (1 if i < rem else 0) for i in range(4)]
    specs: list[ControlSpec] = []
    ranges = {
        fam: bounds.for_family(fam).resolved(grid.t_star)
        for fam in ("linear_pulse", "step", "seasonality", "double_step")
    }
    levels, t0s, widths = ranges["linear_pulse"]
    for _ in range(counts[0]):
        u0, u1 = rng.uniform(*levels, 2)
        specs.append(LinearPulse(u0, u1, rng.uniform(*t0s), rng.uniform(*widths)))
    levels, t0s, _ = ranges["step"]
    for _ in range(counts[1]):
        u0, u1 = rng.uniform(*levels, 2)
        specs.append(Step(u0, u1, rng.uniform(*t0s)))
    levels, _, widths = ranges["seasonality"]
    for _ in range(counts[2]):
        specs.append(Seasonality(rng.uniform(*levels), rng.uniform(*widths), grid.t_star))
    levels, t0s, widths = ranges["double_step"]
    for _ in range(counts[3]):
        u0, u1 = rng.uniform(*levels, 2)
        specs.append(DoubleStep(u0, u1, rng.uniform(*t0s), rng.uniform(*widths)))
    return specs


def sample_mixed(seed: int, count: int, bounds: SamplingBounds, grid: TimeGrid) -> list[ControlSignal]:
    return [discretize(s, grid) for s in sample_mixed_specs(seed, count, bounds, grid)]


def sample_piecewise_specs(
    seed: int, count: int, n_phases: int, level_range: tuple[float, float], grid: TimeGrid
) -> list[PiecewiseConstant]:
    if n_phases < 1:
        raise ConfigError("n_phases must be >= 1")
    rng = np.random.default_rng(seed)
    return [
        PiecewiseConstant(tuple(rng.uniform(*level_range, n_phases)), grid.t_star)
        for _ in range(count)
    ]


def sample_piecewise(
    seed: int, count: int, n_phases: int, level_range: tuple[float, float], grid: TimeGrid
) -> list[ControlSignal]:
    return [discretize(s, grid) for s in sample_piecewise_specs(seed, count, n_phases, level_range, grid)]


def sample_step_heights_specs(
    seed: int, count: int, level_range: tuple[float, float], grid: TimeGrid
) -> list[Step]:
    """Steps switching from 0 to a uniform height at a uniform onset time."""
    rng = np.random.default_rng(seed)
    return [Step(0.0, rng.uniform(*level_range), rng.uniform(0.0, grid.t_star)) for _ in range(count)]


def sample_step_heights(
    seed: int, count: int, level_range: tuple[float, float], grid: TimeGrid
) -> list[ControlSignal]:
    return [discretize(s, grid) for s in sample_step_heights_specs(seed, count, level_range, grid)]


def spec_to_json(spec: ControlSpec) -> dict:
    """{"family": ..., "params": {...}} wire encoding."""
    params = {k: v for k, v in spec.__dict__.items()}
    if isinstance(spec, PiecewiseConstant):
        params["levels"] = list(spec.levels)
    return {"family": _FAMILY_NAMES[type(spec)], "params": params}


def spec_from_json(doc: dict) -> ControlSpec:
    if not isinstance(doc, dict) or set(doc) != {"family", "params"}:
        raise ConfigError(f"control spec document must have exactly the keys family/params, got {sorted(doc)}")
    family = doc["family"]
    if family not in _FAMILY_TYPES:
        raise ConfigError(f"unknown control family {family!r}")
    cls = _FAMILY_TYPES[family]
    fields = set(cls.__dataclass_fields__)
    params = doc["params"]
    unknown = set(params) - fields
    if unknown:
        raise ConfigError(f"unknown parameters for {family}: {sorted(unknown)}")
    missing = fields - set(params)
    if missing:
        raise ConfigError(f"missing parameters for {family}: {sorted(missing)}")
    if cls is PiecewiseConstant:
        return PiecewiseConstant(tuple(params["levels"]), params["t_star"])
    return cls(**params)
