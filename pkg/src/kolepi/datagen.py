"""Synthetic dataset generation and persistence.

A scenario pins the epidemic model, grid, control sampling plan, sizes
and seeds; generation integrates every sampled control and records both
the trajectories and the exact derivative observations.  Datasets are
persisted as a manifest plus raw little-endian float64 blocks so
round-trips are bit-exact and reruns from the manifest's seeds
regenerate identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from . import controls as ctl
from . import epimodels as epi
from .errors import ConfigError, DataError, FormatError
from .kol import MODE_MAP, MODE_PARTIAL, TrainingSet

_FORMAT_VERSION = 1


@dataclass(frozen=True)
class MixedPlan:
    """Even split across the four parametric control families."""

    bounds: ctl.SamplingBounds = field(default_factory=ctl.SamplingBounds)

    def sample(self, seed: int, count: int, grid: epi.TimeGrid) -> np.ndarray:
        sigs = ctl.sample_mixed(seed, count, self.bounds, grid)
        return np.stack([s.samples for s in sigs])


@dataclass(frozen=True)
class PiecewisePlan:
    """Piecewise-constant schedules over equal slabs."""

    n_phases: int
    level_range: tuple[float, float] = (0.0, 0.8)

    def sample(self, seed: int, count: int, grid: epi.TimeGrid) -> np.ndarray:
        sigs = ctl.sample_piecewise(seed, count, self.n_phases, self.level_range, grid)
        return np.stack([s.samples for s in sigs])


@dataclass(frozen=True)
class StepHeightsPlan:
    """Step controls switching from 0 to a uniform height at a uniform onset."""

    level_range: tuple[float, float] = (0.0, 0.8)

    def sample(self, seed: int, count: int, grid: epi.TimeGrid) -> np.ndarray:
        sigs = ctl.sample_step_heights(seed, count, self.level_range, grid)
        return np.stack([s.samples for s in sigs])


SamplingPlan = Union[MixedPlan, PiecewisePlan, StepHeightsPlan]

_PLAN_NAMES = {MixedPlan: "mixed", PiecewisePlan: "piecewise", StepHeightsPlan: "step_heights"}
_PLAN_TYPES = {v: k for k, v in _PLAN_NAMES.items()}


@dataclass(frozen=True)
class ScenarioConfig:
    model: epi.ModelKind
    params: epi.EpiParams
    x0: tuple[float, ...]
    grid: epi.TimeGrid
    plan: SamplingPlan
    train_size: int
    test_size: int
    train_seed: int
    test_seed: int
    substeps: int | None = None

    def __post_init__(self):
        epi.validate_state(self.model, np.asarray(self.x0, dtype=float))
        if self.train_size < 1 or self.test_size < 1:
            raise ConfigError("train_size and test_size must be >= 1")

    def resolved_substeps(self) -> int:
        if self.substeps is not None:
            return self.substeps
        return epi.default_substeps(self.model, self.params, self.grid.dt)


@dataclass(frozen=True)
class Dataset:
    config: ScenarioConfig
    split: str  # "train" | "test"
    controls: np.ndarray  # (N, n)
    trajectories: np.ndarray  # (N, d, n)
    derivatives: np.ndarray  # (N, d, n)

    @property
    def size(self) -> int:
        return self.controls.shape[0]


def generate(config: ScenarioConfig, split: str = "train") -> Dataset:
    """Sample controls per the plan and integrate each one.

    The train and test splits draw from independent seeds recorded in the
    config, so either can be regenerated alone.
    """
    if split == "train":
        seed, count = config.train_seed, config.train_size
    elif split == "test":
        seed, count = config.test_seed, config.test_size
    else:
        raise ConfigError(f"split must be 'train' or 'test', got {split!r}")
    u = config.plan.sample(seed, count, config.grid)
    x0 = np.asarray(config.x0, dtype=float)
    traj = epi.integrate_batch(config.model, config.params, x0, u, config.grid, config.resolved_substeps())
    deriv = epi.derivative_observations_batch(config.model, config.params, traj, u)
    return Dataset(config=config, split=split, controls=u, trajectories=traj, derivatives=deriv)


def finite_difference_derivatives(trajectories: np.ndarray, dt: float) -> np.ndarray:
    """Central-difference derivative estimates for externally supplied
    trajectories (one-sided at the endpoints); used when the generating
    right-hand side is unavailable.  Shape-preserving on (..., n)."""
    x = np.asarray(trajectories, dtype=float)
    if x.shape[-1] < 2:
        raise DataError("finite differences need at least two grid points")
    out = np.empty_like(x)
    out[..., 1:-1] = (x[..., 2:] - x[..., :-2]) / (2.0 * dt)
    out[..., 0] = (x[..., 1] - x[..., 0]) / dt
    out[..., -1] = (x[..., -1] - x[..., -2]) / dt
    return out


def to_training_set(ds: Dataset, mode: str) -> TrainingSet:
    """Flatten a dataset into KOL training pairs (raw values stored;
    any positivity transform is applied at fit time)."""
    if mode == MODE_MAP:
        targets = ds.trajectories.reshape(ds.size, -1)
    elif mode == MODE_PARTIAL:
        targets = ds.derivatives.reshape(ds.size, -1)
    else:
        raise ConfigError(f"mode must be '{MODE_MAP}' or '{MODE_PARTIAL}', got {mode!r}")
    return TrainingSet(
        mode=mode,
        grid=ds.config.grid,
        inputs=ds.controls,
        targets=targets,
        x0=np.asarray(ds.config.x0, dtype=float),
        d=ds.config.model.dim,
        metadata={"model": ds.config.model.value, "split": ds.split},
    )


def _bounds_to_json(bounds: ctl.SamplingBounds) -> dict:
    doc = {
        "level_range": list(bounds.level_range),
        "t0_range": list(bounds.t0_range) if bounds.t0_range else None,
        "width_range": list(bounds.width_range) if bounds.width_range else None,
    }
    if bounds.overrides:
        doc["overrides"] = {fam: _bounds_to_json(b) for fam, b in sorted(bounds.overrides.items())}
    return doc


def _bounds_from_json(doc: dict) -> ctl.SamplingBounds:
    _reject_unknown(doc, {"level_range", "t0_range", "width_range", "overrides"}, "sampling bounds")
    overrides = doc.get("overrides")
    return ctl.SamplingBounds(
        level_range=tuple(doc.get("level_range", (0.0, 1.0))),
        t0_range=tuple(doc["t0_range"]) if doc.get("t0_range") else None,
        width_range=tuple(doc["width_range"]) if doc.get("width_range") else None,
        overrides={fam: _bounds_from_json(b) for fam, b in overrides.items()} if overrides else None,
    )


def _plan_to_json(plan: SamplingPlan) -> dict:
    doc = {"kind": _PLAN_NAMES[type(plan)]}
    if isinstance(plan, MixedPlan):
        doc.update(_bounds_to_json(plan.bounds))
    elif isinstance(plan, PiecewisePlan):
        doc["n_phases"] = plan.n_phases
        doc["level_range"] = list(plan.level_range)
    else:
        doc["level_range"] = list(plan.level_range)
    return doc


def _plan_from_json(doc: dict) -> SamplingPlan:
    kind = doc.get("kind")
    if kind not in _PLAN_TYPES:
        raise ConfigError(f"unknown sampling plan {kind!r}")
    if kind == "mixed":
        allowed = {"kind", "level_range", "t0_range", "width_range", "overrides"}
        _reject_unknown(doc, allowed, "mixed plan")
        return MixedPlan(bounds=_bounds_from_json({k: v for k, v in doc.items() if k != "kind"}))
    if kind == "piecewise":
        _reject_unknown(doc, {"kind", "n_phases", "level_range"}, "piecewise plan")
        return PiecewisePlan(n_phases=doc["n_phases"], level_range=tuple(doc.get("level_range", (0.0, 0.8))))
    _reject_unknown(doc, {"kind", "level_range"}, "step_heights plan")
    return StepHeightsPlan(level_range=tuple(doc.get("level_range", (0.0, 0.8))))


def _reject_unknown(doc: dict, allowed: set[str], what: str):
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {what}: {sorted(unknown)}")


def scenario_to_json(config: ScenarioConfig) -> dict:
    return {
        "model": config.model.value,
        "params": {
            "r0": config.params.r0,
            "gamma": config.params.gamma,
            "delta": config.params.delta,
            "epsilon": config.params.epsilon,
            "phi": config.params.phi,
        },
        "x0": list(config.x0),
        "grid": {"t_star": config.grid.t_star, "dt": config.grid.dt},
        "plan": _plan_to_json(config.plan),
        "train_size": config.train_size,
        "test_size": config.test_size,
        "train_seed": config.train_seed,
        "test_seed": config.test_seed,
        "substeps": config.substeps,
    }


def scenario_from_json(doc: dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError(f"scenario must be a JSON object, got {type(doc).__name__}")
    allowed = {"model", "params", "x0", "grid", "plan", "train_size", "test_size",
               "train_seed", "test_seed", "substeps"}
    _reject_unknown(doc, allowed, "scenario")
    try:
        model = epi.ModelKind(doc["model"])
    except ValueError:
        raise ConfigError(f"unknown model {doc.get('model')!r}") from None
    except KeyError:
        raise ConfigError("scenario is missing 'model'") from None
    _reject_unknown(doc.get("params", {}), {"r0", "gamma", "delta", "epsilon", "phi"}, "params")
    _reject_unknown(doc.get("grid", {}), {"t_star", "dt"}, "grid")
    try:
        return ScenarioConfig(
            model=model,
            params=epi.EpiParams(**doc["params"]),
            x0=tuple(doc["x0"]),
            grid=epi.TimeGrid(**doc["grid"]),
            plan=_plan_from_json(doc["plan"]),
            train_size=doc["train_size"],
            test_size=doc["test_size"],
            train_seed=doc["train_seed"],
            test_seed=doc["test_seed"],
            substeps=doc.get("substeps"),
        )
    except KeyError as exc:
        raise ConfigError(f"scenario is missing {exc}") from None


_BLOCKS = (("controls.bin", "controls"), ("traj.bin", "trajectories"), ("deriv.bin", "derivatives"))


def write(ds: Dataset, outdir) -> Path:
    """Persist a dataset directory: manifest.json plus raw float64 blocks."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": _FORMAT_VERSION,
        "scenario": scenario_to_json(ds.config),
        "split": ds.split,
        "shapes": {name: list(getattr(ds, attr).shape) for name, attr in _BLOCKS},
        "checksums": {},
    }
    for name, attr in _BLOCKS:
        payload = np.ascontiguousarray(getattr(ds, attr), dtype="<f8").tobytes()
        manifest["checksums"][name] = hashlib.sha256(payload).hexdigest()
        (outdir / name).write_bytes(payload)
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return outdir


def read(indir) -> Dataset:
    """Load a dataset directory, verifying checksums, shapes, and the
    conservation/derivative invariants."""
    indir = Path(indir)
    try:
        manifest = json.loads((indir / "manifest.json").read_text())
    except FileNotFoundError:
        raise FormatError(f"{indir}: missing manifest.json") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{indir}: unreadable manifest") from exc
    if manifest.get("format") != _FORMAT_VERSION:
        raise FormatError(f"{indir}: unsupported dataset format {manifest.get('format')!r}")
    config = scenario_from_json(manifest["scenario"])
    arrays = {}
    for name, attr in _BLOCKS:
        payload = (indir / name).read_bytes()
        digest = hashlib.sha256(payload).hexdigest()
        if digest != manifest["checksums"][name]:
            raise FormatError(f"{indir}/{name}: checksum mismatch")
        shape = tuple(manifest["shapes"][name])
        if len(payload) != int(np.prod(shape)) * 8:
            raise FormatError(f"{indir}/{name}: payload size does not match shape {shape}")
        arrays[attr] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    ds = Dataset(config=config, split=manifest["split"], controls=arrays["controls"],
                 trajectories=arrays["trajectories"], derivatives=arrays["derivatives"])
    _validate_invariants(ds)
    return ds


def _validate_invariants(ds: Dataset):
    sums = ds.trajectories.sum(axis=1)
    worst = float(np.max(np.abs(sums - 1.0)))
    if worst > epi.CONSERVATION_TOL:
        raise DataError(f"conservation violated: max |sum - 1| = {worst:.3e}")
    regen = epi.derivative_observations_batch(ds.config.model, ds.config.params, ds.trajectories, ds.controls)
    if not np.array_equal(regen, ds.derivatives):
        raise DataError("stored derivatives do not match the recomputed observations")
