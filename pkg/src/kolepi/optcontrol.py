"""Optimal control of NPIs through the true ODE or a KOL surrogate.

Two problems: minimum eradication time over delayed-activation
(Heaviside) controls, solved by brute-force sweep of the switching time;
and quadratic infection/control cost over piecewise-constant schedules,
solved by multistart SLSQP.  Both accept any state provider exposing
``trajectory(samples) -> (d, n)`` on a shared grid, so the true model
and the surrogates are interchangeable, and surrogate solutions can be
re-scored under the true dynamics (cross-evaluation).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize

from . import epimodels as epi
from . import kol
from .controls import PiecewiseConstant, Step, discretize
from .errors import ConfigError, DataError, NoEradicationError

DEFAULT_ETA = 1.0 / 2001.0  # one case in the benchmark population of 2001


class TrueOdeProvider:
    """Trajectories from forward-Euler integration of the actual model."""

    def __init__(self, model: epi.ModelKind, params: epi.EpiParams, x0, grid: epi.TimeGrid,
                 substeps: int | None = None):
        self.model = model
        self.params = params
        self.x0 = np.asarray(x0, dtype=float)
        self.grid = grid
        self.substeps = substeps if substeps is not None else epi.default_substeps(model, params, grid.dt)
        self.infectious_index = model.infectious_index
        self.label = "ode"

    def trajectory(self, samples: np.ndarray) -> np.ndarray:
        return self.trajectories(np.asarray(samples, dtype=float)[None, :])[0]

    def trajectories(self, batch: np.ndarray) -> np.ndarray:
        return epi.integrate_batch(self.model, self.params, self.x0, batch, self.grid, self.substeps)


class SurrogateProvider:
    """Trajectories from a fitted KOL model (either mode)."""

    def __init__(self, model: kol.KolModel, infectious_index: int = 1):
        self.model = model
        self.grid = model.grid
        self.infectious_index = infectious_index
        self.label = f"kol-{model.mode}"
        self._train_lo = float(model.u_train.min())
        self._train_hi = float(model.u_train.max())
        self._warned = False

    def trajectory(self, samples: np.ndarray) -> np.ndarray:
        samples = np.asarray(samples, dtype=float)
        margin = 0.05 * (self._train_hi - self._train_lo) + 1e-9
        if not self._warned and (samples.min() < self._train_lo - margin or samples.max() > self._train_hi + margin):
            warnings.warn(
                f"control levels [{samples.min():.3g}, {samples.max():.3g}] fall outside the "
                f"training range [{self._train_lo:.3g}, {self._train_hi:.3g}]; surrogate extrapolates",
                stacklevel=2,
            )
            self._warned = True
        return kol.predict_samples(self.model, samples).values

    def trajectories(self, batch: np.ndarray) -> np.ndarray:
        return np.stack([self.trajectory(row) for row in batch])


def r_umax(beta: float, gamma: float, u_max: float) -> float:
    """Maximum control reproduction number beta*(1 - u_max)/gamma."""
    if gamma <= 0:
        raise ConfigError("gamma must be positive")
    return beta * (1.0 - u_max) / gamma


def eradication_time(traj: np.ndarray, i_index: int, eta: float, grid: epi.TimeGrid) -> float | None:
    """First time the infectious row returns to the threshold eta.

    Scans the nodal values for a down-crossing I(T_{k-1}) > eta >= I(T_k)
    and linearly interpolates inside the bracketing interval.  If the row
    starts at or below eta and is immediately non-increasing, the
    eradication time is 0 by convention; if the threshold is never
    exceeded and then recrossed, there is no eradication event (None).
    """
    if eta <= 0:
        raise ConfigError("eta must be positive")
    row = np.asarray(traj, dtype=float)[i_index]
    if row.shape[0] != grid.n:
        raise DataError(f"trajectory has {row.shape[0]} columns, grid has {grid.n}")
    above = row > eta
    for k in range(1, grid.n):
        if above[k - 1] and not above[k]:
            frac = (row[k - 1] - eta) / (row[k - 1] - row[k])
            return float(grid.points[k - 1] + frac * grid.dt)
    if row[0] <= eta and row[1] <= row[0]:
        return 0.0
    return None


@dataclass(frozen=True)
class EradicationConfig:
    u_max: float
    eta: float = DEFAULT_ETA
    tau_step: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.u_max <= 1.0:
            raise ConfigError("u_max must lie in [0, 1]")
        if self.eta <= 0 or self.tau_step <= 0:
            raise ConfigError("eta and tau_step must be positive")


@dataclass(frozen=True)
class EradicationSweep:
    """Brute-force sweep result over Heaviside switching times."""

    u_max: float
    taus: np.ndarray  # swept switching times
    te: np.ndarray  # eradication time per tau (nan where no event)
    s_at_te: np.ndarray  # susceptibles at the eradication time (nan where no event)
    tau_star: float
    te_star: float
    s_star: float
    provider: str

    @property
    def te_at_zero(self) -> float | None:
        val = float(self.te[0])
        return None if np.isnan(val) else val


def min_eradication(provider, cfg: EradicationConfig) -> EradicationSweep:
    """Exhaustive search of u_max * H(t - tau) over a fine tau grid.

    The Heaviside control is realized as Step(0, u_max, t0=tau) sampled
    on the provider grid, so all tau inside one grid interval collapse to
    the same discretized control; the sweep evaluates each distinct
    pattern once.  Ties resolve to the smallest tau.
    """
    grid = provider.grid
    pts = grid.points
    taus = np.arange(0.0, grid.t_star + cfg.tau_step / 2, cfg.tau_step)
    # switch-on node of each tau: first grid index with T_k > tau
    on_node = np.searchsorted(pts, taus, side="right")
    uniq_nodes, inverse = np.unique(on_node, return_inverse=True)
    patterns = np.zeros((uniq_nodes.size, grid.n))
    for row, m in enumerate(uniq_nodes):
        patterns[row, m:] = cfg.u_max
    trajs = provider.trajectories(patterns)
    te_u = np.full(uniq_nodes.size, np.nan)
    s_u = np.full(uniq_nodes.size, np.nan)
    for row in range(uniq_nodes.size):
        te = eradication_time(trajs[row], provider.infectious_index, cfg.eta, grid)
        if te is not None:
            te_u[row] = te
            s_u[row] = np.interp(te, pts, trajs[row, 0])
    te_all = te_u[inverse]
    s_all = s_u[inverse]
    if np.all(np.isnan(te_all)):
        raise NoEradicationError(
            f"no switching time produced an eradication event (u_max={cfg.u_max}, eta={cfg.eta})"
        )
    best = int(np.nanargmin(te_all))
    return EradicationSweep(
        u_max=cfg.u_max, taus=taus, te=te_all, s_at_te=s_all,
        tau_star=float(taus[best]), te_star=float(te_all[best]), s_star=float(s_all[best]),
        provider=provider.label,
    )


def quad_cost(traj: np.ndarray, control_samples: np.ndarray, c_i: float, c_u: float,
              grid: epi.TimeGrid, i_index: int = 1) -> float:
    """C_I * int I(t)^2 dt + C_u * int u(t)^2 dt by trapezoidal quadrature."""
    traj = np.asarray(traj, dtype=float)
    u = np.asarray(control_samples, dtype=float)
    if traj.shape[1] != grid.n or u.shape != (grid.n,):
        raise DataError("trajectory/control shapes do not match the grid")
    i_term = trapezoid(traj[i_index] ** 2, dx=grid.dt)
    u_term = trapezoid(u ** 2, dx=grid.dt)
    return float(c_i * i_term + c_u * u_term)


@dataclass(frozen=True)
class QuadConfig:
    c_i: float
    c_u: float
    n_phases: int
    u_ub: float = 0.7
    multistart: int = 5
    maxiter: int = 200
    ftol: float = 1e-12

    def __post_init__(self):
        if self.c_i < 0 or self.c_u < 0:
            raise ConfigError("cost weights must be nonnegative")
        if self.n_phases < 1:
            raise ConfigError("n_phases must be >= 1")
        if not 0.0 < self.u_ub <= 1.0:
            raise ConfigError("u_ub must lie in (0, 1]")
        if self.multistart < 1:
            raise ConfigError("multistart must be >= 1")


@dataclass(frozen=True)
class OCResult:
    levels: np.ndarray
    objective: float
    iterations: int
    n_evals: int
    provider: str
    converged: bool
    objective_true: float | None = None


def _phase_samples(levels: np.ndarray, grid: epi.TimeGrid, u_ub: float) -> np.ndarray:
    spec = PiecewiseConstant(tuple(np.clip(levels, 0.0, u_ub)), grid.t_star)
    return discretize(spec, grid).samples


def optimize_quadratic(provider, cfg: QuadConfig, seed: int = 0) -> OCResult:
    """Multistart SLSQP over piecewise-constant schedule levels.

    Starts from the box midpoint plus uniform random draws; gradients are
    central finite differences with relative step 1e-6, shrunk to
    one-sided at active bounds.  Levels are projected into [0, u_ub]
    before every provider evaluation, so the returned schedule is always
    feasible.  Deterministic given the seed.
    """
    grid = provider.grid
    if (grid.n - 1) % cfg.n_phases != 0:
        raise ConfigError(f"grid with {grid.n - 1} intervals does not split into {cfg.n_phases} equal phases")
    nev = 0

    def objective(x: np.ndarray) -> float:
        nonlocal nev
        nev += 1
        samples = _phase_samples(x, grid, cfg.u_ub)
        traj = provider.trajectory(samples)
        return quad_cost(traj, samples, cfg.c_i, cfg.c_u, grid, provider.infectious_index)

    def jac(x: np.ndarray) -> np.ndarray:
        g = np.empty_like(x)
        for i in range(x.size):
            h = 1e-6 * max(abs(x[i]), 1.0)
            hi = min(x[i] + h, cfg.u_ub)
            lo = max(x[i] - h, 0.0)
            xp, xm = x.copy(), x.copy()
            xp[i], xm[i] = hi, lo
            g[i] = (objective(xp) - objective(xm)) / (hi - lo)
        return g

    rng = np.random.default_rng(seed)
    starts = [np.full(cfg.n_phases, cfg.u_ub / 2.0)]
    starts += [rng.uniform(0.0, cfg.u_ub, cfg.n_phases) for _ in range(cfg.multistart - 1)]
    best = None
    for x0 in starts:
        res = minimize(
            objective, x0, jac=jac, method="SLSQP",
            bounds=[(0.0, cfg.u_ub)] * cfg.n_phases,
            options={"maxiter": cfg.maxiter, "ftol": cfg.ftol},
        )
        if best is None or res.fun < best.fun:
            best = res
    levels = np.clip(best.x, 0.0, cfg.u_ub)
    return OCResult(
        levels=levels,
        objective=float(objective(levels)),
        iterations=int(best.nit),
        n_evals=nev,
        provider=provider.label,
        converged=bool(best.success),
    )


def cross_evaluate(levels: np.ndarray, truth: TrueOdeProvider, cfg: QuadConfig) -> float:
    """Cost of a schedule under the true dynamics (the comparison quantity)."""
    samples = _phase_samples(np.asarray(levels, dtype=float), truth.grid, cfg.u_ub)
    traj = truth.trajectory(samples)
    return quad_cost(traj, samples, cfg.c_i, cfg.c_u, truth.grid, truth.infectious_index)


def heaviside_signal(u_max: float, tau: float, grid: epi.TimeGrid):
    """Discretized u_max * H(t - tau) as a Step control signal."""
    return discretize(Step(0.0, u_max, tau), grid)
