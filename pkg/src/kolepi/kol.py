"""Kernel-operator-learning surrogates for control-to-trajectory maps.

Two modes share one regression core.  Mode "m" learns the map from
sampled controls to trajectory samples, optionally through an
elementwise square root of the targets so that squaring the prediction
enforces nonnegativity exactly.  Mode "partial" learns the map to the
trajectory's time derivative and recovers the trajectory from the
initial state by trapezoidal integration, which is the exact integral of
the piecewise-linear reconstruction used between collocation points.

Fitting assembles the kernel Gram matrix over the training controls,
factorizes S + ridge*I by Cholesky, and solves one right-hand side per
output coordinate (d*n of them) with the shared factor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import kernels
from .controls import ControlSignal
from .epimodels import TimeGrid
from .errors import ConditioningError, ConfigError, DataError, FormatError

MODE_MAP = "m"
MODE_PARTIAL = "partial"
DEFAULT_RIDGE = 1e-10
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainingSet:
    """Aligned control samples and flattened targets for one KOL mode.

    inputs: (N, n) control samples; targets: (N, d*n) trajectory samples
    (mode "m", raw values) or derivative samples (mode "partial").
    """

    mode: str
    grid: TimeGrid
    inputs: np.ndarray
    targets: np.ndarray
    x0: np.ndarray
    d: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in (MODE_MAP, MODE_PARTIAL):
            raise ConfigError(f"mode must be '{MODE_MAP}' or '{MODE_PARTIAL}', got {self.mode!r}")
        inputs = np.asarray(self.inputs, dtype=float)
        targets = np.asarray(self.targets, dtype=float)
        x0 = np.asarray(self.x0, dtype=float)
        if inputs.ndim != 2 or inputs.shape[1] != self.grid.n:
            raise DataError(f"inputs shape {inputs.shape} does not match grid n={self.grid.n}")
        if targets.shape != (inputs.shape[0], self.d * self.grid.n):
            raise DataError(
                f"targets shape {targets.shape} does not match (N={inputs.shape[0]}, d*n={self.d * self.grid.n})"
            )
        if x0.shape != (self.d,):
            raise DataError(f"x0 shape {x0.shape} does not match d={self.d}")
        if self.mode == MODE_MAP and (targets.min() < -1e-12 or targets.max() > 1.0 + 1e-12):
            raise DataError(
                f"mode '{MODE_MAP}' targets are compartment fractions and must lie in [0, 1]; "
                f"found range [{targets.min():.3g}, {targets.max():.3g}]"
            )
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "x0", x0)


@dataclass(frozen=True)
class Prediction:
    grid: TimeGrid
    values: np.ndarray  # (d, n)
    raw_derivative: np.ndarray | None = None  # (d, n), mode "partial" only


@dataclass(frozen=True)
class KolModel:
    mode: str
    kernel: kernels.KernelSpec
    grid: TimeGrid
    x0: np.ndarray
    u_train: np.ndarray  # (N, n)
    coeff: np.ndarray  # (N, d*n) solving (S + ridge*I) coeff = targets
    ridge: float
    positivity: bool
    d: int
    chol: tuple | None = None  # cho_factor output; not persisted

    @property
    def n_train(self) -> int:
        return self.u_train.shape[0]


def fit(
    ts: TrainingSet,
    kernel: kernels.KernelSpec,
    ridge: float = DEFAULT_RIDGE,
    positivity: bool | None = None,
) -> KolModel:
    """Train a KOL surrogate on the given training set.

    positivity defaults to True for mode "m" (square-root transform of
    the targets) and is rejected for mode "partial", whose derivative
    targets are signed.
    """
    if ridge < 0:
        raise ConfigError("ridge must be nonnegative")
    if positivity is None:
        positivity = ts.mode == MODE_MAP
    if positivity and ts.mode != MODE_MAP:
        raise ConfigError("positivity transform applies to mode 'm' only")
    targets = ts.targets
    if positivity:
        targets = np.sqrt(targets)  # nonnegativity guaranteed by the TrainingSet invariant
    gm = kernels.gram(kernel, ts.inputs, ridge=ridge)
    try:
        chol = cho_factor(gm.regularized, lower=True)
    except LinAlgError:
        smallest = float(np.linalg.eigvalsh(gm.regularized)[0])
        raise ConditioningError(
            f"regularized Gram (N={ts.inputs.shape[0]}, ridge={ridge:g}) is not positive definite; "
            f"smallest eigenvalue {smallest:.3e}"
        ) from None
    # canonical C layout keeps predictions bit-identical across save/load
    coeff = np.ascontiguousarray(cho_solve(chol, targets))
    return KolModel(
        mode=ts.mode,
        kernel=kernel,
        grid=ts.grid,
        x0=ts.x0.copy(),
        u_train=ts.inputs.copy(),
        coeff=coeff,
        ridge=ridge,
        positivity=positivity,
        d=ts.d,
        chol=chol,
    )


def _check_grid(model: KolModel, grid: TimeGrid):
    if grid.n != model.grid.n or abs(grid.dt - model.grid.dt) > 1e-12 * model.grid.dt:
        raise DataError(
            f"control grid (t*={grid.t_star}, dt={grid.dt}) does not match "
            f"model grid (t*={model.grid.t_star}, dt={model.grid.dt})"
        )


def predict_samples(model: KolModel, u) -> Prediction:
    """Predict the full trajectory for one control signal."""
    if isinstance(u, ControlSignal):
        _check_grid(model, u.grid)
        samples = u.samples
    else:
        samples = np.asarray(u, dtype=float)
        if samples.shape != (model.grid.n,):
            raise DataError(f"control samples shape {samples.shape} does not match grid n={model.grid.n}")
    k = kernels.cross(model.kernel, samples[None, :], model.u_train)
    raw = (k @ model.coeff).reshape(model.d, model.grid.n)
    if model.mode == MODE_MAP:
        values = raw ** 2 if model.positivity else raw
        return Prediction(grid=model.grid, values=values)
    values = model.x0[:, None] + cumulative_trapezoid(raw, dx=model.grid.dt, axis=1, initial=0.0)
    return Prediction(grid=model.grid, values=values, raw_derivative=raw)


def predict_at(model: KolModel, u, t: float) -> np.ndarray:
    """State at an arbitrary time via linear interpolation of the nodal prediction."""
    if not 0.0 <= t <= model.grid.t_star:
        raise ConfigError(f"t={t} outside [0, {model.grid.t_star}]")
    pred = predict_samples(model, u)
    pts = model.grid.points
    return np.array([np.interp(t, pts, row) for row in pred.values])


def batch_predict(model: KolModel, signals) -> list[Prediction]:
    """Element-wise predict_samples, aborting with index context on failure."""
    out = []
    for i, sig in enumerate(signals):
        try:
            out.append(predict_samples(model, sig))
        except Exception as exc:
            raise type(exc)(f"batch element {i}: {exc}") from exc
    return out


def save(model: KolModel, path):
    """Write a model file: one JSON manifest line, then little-endian
    float64 blocks for the training inputs and the coefficient matrix."""
    manifest = {
        "format": _FORMAT_VERSION,
        "mode": model.mode,
        "kernel": kernels.spec_to_json(model.kernel),
        "ridge": model.ridge,
        "grid": {"t_star": model.grid.t_star, "dt": model.grid.dt},
        "x0": [float(v) for v in model.x0],
        "dims": {"n_train": model.n_train, "n": model.grid.n, "d": model.d},
        "positivity": model.positivity,
        "blocks": ["u_train", "coeff"],
    }
    path = Path(path)
    with path.open("wb") as fh:
        fh.write((json.dumps(manifest) + "\n").encode("utf-8"))
        fh.write(np.ascontiguousarray(model.u_train, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.coeff, dtype="<f8").tobytes())


def load(path) -> KolModel:
    """Read a model file written by save(); bit-faithful round trip."""
    path = Path(path)
    with path.open("rb") as fh:
        header = fh.readline()
        try:
            manifest = json.loads(header.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: unreadable model manifest") from exc
        if manifest.get("format") != _FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported model format {manifest.get('format')!r}")
        dims = manifest["dims"]
        n_train, n, d = dims["n_train"], dims["n"], dims["d"]
        payload = fh.read()
    expected = (n_train * n + n_train * d * n) * 8
    if len(payload) != expected:
        raise FormatError(f"{path}: expected {expected} payload bytes, found {len(payload)}")
    u_train = np.frombuffer(payload[: n_train * n * 8], dtype="<f8").reshape(n_train, n).copy()
    coeff = np.frombuffer(payload[n_train * n * 8:], dtype="<f8").reshape(n_train, d * n).copy()
    grid = TimeGrid(t_star=manifest["grid"]["t_star"], dt=manifest["grid"]["dt"])
    if grid.n != n:
        raise FormatError(f"{path}: grid n={grid.n} does not match declared n={n}")
    return KolModel(
        mode=manifest["mode"],
        kernel=kernels.spec_from_json(manifest["kernel"]),
        grid=grid,
        x0=np.asarray(manifest["x0"], dtype=float),
        u_train=u_train,
        coeff=coeff,
        ridge=manifest["ridge"],
        positivity=manifest["positivity"],
        d=d,
    )
