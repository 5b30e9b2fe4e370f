"""Compartmental epidemic ODE models with a transmission-reducing control.

Four classic models (SIR, SIS, SIRD, SEIRD) share the structure
``x' = F(x, u)`` where the control ``u(t)`` in [0, 1] scales the
transmission rate by ``(1 - u)``.  Trajectories are produced by forward
Euler on a uniform observation grid, with an internal sub-step decoupled
from the grid so stiff parameter choices stay stable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, DataError, IntegrationError

CONSERVATION_TOL = 1e-12


class ModelKind(Enum):
    SIR = "sir"
    SIS = "sis"
    SIRD = "sird"
    SEIRD = "seird"

    @property
    def dim(self) -> int:
        return {"sir": 3, "sis": 2, "sird": 4, "seird": 5}[self.value]

    @property
    def compartments(self) -> tuple[str, ...]:
        return {
            "sir": ("S", "I", "R"),
            "sis": ("S", "I"),
            "sird": ("S", "I", "R", "D"),
            "seird": ("S", "E", "I", "R", "D"),
        }[self.value]

    @property
    def infectious_index(self) -> int:
        """Row index of the I compartment in the state ordering."""
        return 2 if self is ModelKind.SEIRD else 1


@dataclass(frozen=True)
class EpiParams:
    """Epidemic rates; beta is always derived from r0 (see beta_from_r0).

    delta (E->I), epsilon (E->R) apply to SEIRD only; phi (I->D) applies
    to SIRD and SEIRD.  Unused rates are ignored by the other models.
    """

    r0: float
    gamma: float
    delta: float = 0.0
    epsilon: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if self.r0 <= 0:
            raise ConfigError(f"r0 must be positive, got {self.r0}")
        for name in ("gamma", "delta", "epsilon", "phi"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative, got {getattr(self, name)}")

    def total_rate(self, model: ModelKind) -> float:
        """Sum of beta and all transition rates; bounds the fastest timescale."""
        return beta_from_r0(model, self) + self.gamma + self.delta + self.epsilon + self.phi


@dataclass(frozen=True)
class TimeGrid:
    """Uniform collocation grid {0, dt, ..., t_star} with n = t_star/dt + 1 points."""

    t_star: float
    dt: float
    n: int = field(init=False)

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        n = int(round(self.t_star / self.dt)) + 1
        if n < 2 or abs((n - 1) * self.dt - self.t_star) > 1e-9 * self.dt:
            raise ConfigError(f"t_star={self.t_star} is not a multiple of dt={self.dt}")
        object.__setattr__(self, "t_star", (n - 1) * self.dt)
        object.__setattr__(self, "n", n)

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.n) * self.dt


@dataclass(frozen=True)
class Trajectory:
    grid: TimeGrid
    values: np.ndarray  # (d, n) compartment fractions at the grid points

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != self.grid.n:
            raise DataError(f"trajectory shape {self.values.shape} does not match grid n={self.grid.n}")


def validate_state(model: ModelKind, x, tol: float = 1e-12) -> np.ndarray:
    """Check a state vector: correct length, components in [0,1], sum 1."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise DataError(f"state for {model.value} must have shape ({model.dim},), got {x.shape}")
    if np.any(x < -tol) or np.any(x > 1 + tol):
        raise DataError(f"state components outside [0,1]: {x}")
    if abs(x.sum() - 1.0) > tol:
        raise DataError(f"state components sum to {x.sum()!r}, expected 1")
    return x


def beta_from_r0(model: ModelKind, params: EpiParams) -> float:
    """Transmission rate implied by the model's basic reproduction number.

    SIR/SIS: beta = r0*gamma.  SIRD: beta = r0*(gamma+phi).
    SEIRD: beta = r0*(gamma+phi)*(delta+epsilon)/delta, accounting for the
    fraction delta/(delta+epsilon) of exposed who become infectious.
    """
    if model in (ModelKind.SIR, ModelKind.SIS):
        if params.gamma == 0:
            raise ConfigError("gamma must be positive to derive beta from r0")
        return params.r0 * params.gamma
    exit_rate = params.gamma + params.phi
    if exit_rate == 0:
        raise ConfigError("gamma + phi must be positive to derive beta from r0")
    if model is ModelKind.SIRD:
        return params.r0 * exit_rate
    if params.delta == 0:
        raise ConfigError("delta must be positive for SEIRD")
    return params.r0 * exit_rate * (params.delta + params.epsilon) / params.delta


def rhs_batch(model: ModelKind, params: EpiParams, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vector field F for a batch of states.

    x: (B, d), u: (B,).  Flow terms are computed once and entered with
    opposite signs in source/sink rows, so each row of the result sums to
    zero up to rounding.
    """
    beta = beta_from_r0(model, params)
    if model is ModelKind.SIR:
        s, i = x[:, 0], x[:, 1]
        inf = beta * (1.0 - u) * s * i
        rec = params.gamma * i
        return np.stack([-inf, inf - rec, rec], axis=1)
    if model is ModelKind.SIS:
        s, i = x[:, 0], x[:, 1]
        inf = beta * (1.0 - u) * s * i
        rec = params.gamma * i
        return np.stack([rec - inf, inf - rec], axis=1)
    if model is ModelKind.SIRD:
        s, i = x[:, 0], x[:, 1]
        inf = beta * (1.0 - u) * s * i
        rec = params.gamma * i
        dea = params.phi * i
        return np.stack([-inf, inf - rec - dea, rec, dea], axis=1)
    s, e, i = x[:, 0], x[:, 1], x[:, 2]
    inf = beta * (1.0 - u) * s * i
    e_to_i = params.delta * e
    e_to_r = params.epsilon * e
    rec = params.gamma * i
    dea = params.phi * i
    return np.stack([-inf, inf - e_to_i - e_to_r, e_to_i - rec - dea, rec + e_to_r, dea], axis=1)


def rhs(model: ModelKind, params: EpiParams, x, u: float) -> np.ndarray:
    """F(x, u) for a single state vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise DataError(f"state for {model.value} must have shape ({model.dim},), got {x.shape}")
    return rhs_batch(model, params, x[None, :], np.asarray([u], dtype=float))[0]


def default_substeps(model: ModelKind, params: EpiParams, dt: float, budget: float = 0.1) -> int:
    """Smallest substep count keeping (internal step) * (total rate) <= budget."""
    return max(1, math.ceil(dt * params.total_rate(model) / budget))


def integrate_batch(
    model: ModelKind,
    params: EpiParams,
    x0,
    controls: np.ndarray,
    grid: TimeGrid,
    substeps: int,
) -> np.ndarray:
    """Forward Euler for a batch of control sample vectors.

    controls: (B, n) sample values on the grid; each control is held at
    its left-node value across the observation interval (zero-order hold).
    Returns (B, d, n).  Raises IntegrationError on the first non-finite
    state, identifying the offending observation step.
    """
    controls = np.asarray(controls, dtype=float)
    if controls.ndim != 2 or controls.shape[1] != grid.n:
        raise DataError(f"controls shape {controls.shape} does not match grid n={grid.n}")
    if substeps < 1:
        raise ConfigError("substeps must be >= 1")
    x0 = validate_state(model, x0)
    nb = controls.shape[0]
    state = np.tile(x0, (nb, 1))
    out = np.empty((nb, model.dim, grid.n))
    out[:, :, 0] = state
    h = grid.dt / substeps
    for k in range(grid.n - 1):
        u = controls[:, k]
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(substeps):
                state = state + h * rhs_batch(model, params, state, u)
        if not np.all(np.isfinite(state)):
            bad = int(np.argwhere(~np.isfinite(state))[0, 0])
            raise IntegrationError(
                f"non-finite state while advancing to grid point {k + 1} "
                f"(t={grid.points[k + 1]:g}, batch element {bad}); "
                f"increase substeps (currently {substeps})"
            )
        out[:, :, k + 1] = state
    worst = float(out.min())
    if worst < -1e-12:
        # reported rather than clipped: a negative compartment means the
        # integrator is misconfigured for these rates
        warnings.warn(
            f"integration produced negative compartment values (min {worst:.3e}); "
            f"consider more substeps (currently {substeps})",
            stacklevel=2,
        )
    return out


def integrate(
    model: ModelKind,
    params: EpiParams,
    x0,
    control,
    grid: TimeGrid,
    substeps: int | None = None,
) -> Trajectory:
    """Integrate a single control signal; see integrate_batch."""
    samples = np.asarray(getattr(control, "samples", control), dtype=float)
    if substeps is None:
        substeps = default_substeps(model, params, grid.dt)
    values = integrate_batch(model, params, x0, samples[None, :], grid, substeps)[0]
    return Trajectory(grid=grid, values=values)


def derivative_observations(model: ModelKind, params: EpiParams, traj: Trajectory, control) -> np.ndarray:
    """Exact x'(t_k) = F(x(t_k), u(t_k)) at every grid point, shape (d, n)."""
    samples = np.asarray(getattr(control, "samples", control), dtype=float)
    if samples.shape != (traj.grid.n,):
        raise DataError(f"control has {samples.shape[0]} samples, trajectory grid has {traj.grid.n}")
    return derivative_observations_batch(model, params, traj.values[None], samples[None])[0]


def derivative_observations_batch(
    model: ModelKind, params: EpiParams, values: np.ndarray, controls: np.ndarray
) -> np.ndarray:
    """Batched derivative observations: values (B, d, n), controls (B, n) -> (B, d, n)."""
    if values.shape[0] != controls.shape[0] or values.shape[2] != controls.shape[1]:
        raise DataError(f"trajectory batch {values.shape} does not match controls {controls.shape}")
    out = np.empty_like(values)
    for k in range(values.shape[2]):
        out[:, :, k] = rhs_batch(model, params, values[:, :, k], controls[:, k])
    return out
