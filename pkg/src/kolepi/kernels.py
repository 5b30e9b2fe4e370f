"""Scalar kernels on sampled control vectors and Gram assembly.

Distance kernels (Matern, RBF, rational quadratic), the linear kernel,
and closed-form infinite-width neural tangent kernels (NTK) for ReLU and
Erf activations.  A logistic-sigmoid NTK is available through 2-D
Gauss-Hermite quadrature; it is exact only in the quadrature limit and
noticeably slower, so the closed forms are the default choice.

A finite-width Monte-Carlo estimator of the tangent kernel at
initialization is included as an independent test oracle for the NTK
closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import erf as sp_erf
from scipy.special import gamma as sp_gamma
from scipy.special import kv as bessel_kv

from .errors import ConfigError, DataError

CORRELATION_TOL = 1e-9
_GH_NODES = 64


@dataclass(frozen=True)
class Linear:
    pass


@dataclass(frozen=True)
class Matern:
    nu: float
    rho: float

    def __post_init__(self):
        if self.nu < 1e-3:
            raise ConfigError(f"nu={self.nu} below the supported minimum 1e-3")
        if self.rho <= 0:
            raise ConfigError("rho must be positive")


@dataclass(frozen=True)
class RBF:
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")


@dataclass(frozen=True)
class RationalQuadratic:
    alpha: float
    length: float

    def __post_init__(self):
        if self.alpha <= 0 or self.length <= 0:
            raise ConfigError("alpha and length must be positive")


@dataclass(frozen=True)
class Ntk:
    """Infinite-width NTK of a fully connected net.

    depth counts nonlinear hidden layers; a linear readout follows.
    w_var/b_var are the weight and bias variances of the NTK
    parameterization, with inputs scaled by 1/n in the first layer.
    """

    depth: int = 1
    activation: str = "relu"
    w_var: float | None = None
    b_var: float = 0.1

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.activation not in ("relu", "erf", "sigmoid"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.w_var is None:
            object.__setattr__(self, "w_var", 2.0 if self.activation == "relu" else 1.0)
        if self.w_var <= 0 or self.b_var < 0:
            raise ConfigError("w_var must be positive and b_var nonnegative")


KernelSpec = Union[Linear, Matern, RBF, RationalQuadratic, Ntk]

_KIND_NAMES = {Linear: "linear", Matern: "matern", RBF: "rbf",
               RationalQuadratic: "rational_quadratic", Ntk: "ntk"}
_KIND_TYPES = {v: k for k, v in _KIND_NAMES.items()}


def spec_to_json(spec: KernelSpec) -> dict:
    doc = {"kind": _KIND_NAMES[type(spec)]}
    doc.update(spec.__dict__)
    return doc


def spec_from_json(doc: dict) -> KernelSpec:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigError("kernel spec document must carry a 'kind' key")
    kind = doc["kind"]
    if kind not in _KIND_TYPES:
        raise ConfigError(f"unknown kernel kind {kind!r}")
    cls = _KIND_TYPES[kind]
    params = {k: v for k, v in doc.items() if k != "kind"}
    unknown = set(params) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown parameters for kernel {kind}: {sorted(unknown)}")
    return cls(**params)


@dataclass(frozen=True)
class GramMatrix:
    matrix: np.ndarray  # (N, N), exactly symmetric
    ridge: float = 0.0

    @property
    def regularized(self) -> np.ndarray:
        return self.matrix + self.ridge * np.eye(self.matrix.shape[0])


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d2, 0.0)


def _matern(spec: Matern, r: np.ndarray) -> np.ndarray:
    xi = math.sqrt(2.0 * spec.nu) * r / spec.rho
    if spec.nu == 0.5:
        return np.exp(-xi)
    if spec.nu == 1.5:
        return (1.0 + xi) * np.exp(-xi)
    if spec.nu == 2.5:
        return (1.0 + xi + xi * xi / 3.0) * np.exp(-xi)
    out = np.ones_like(xi)
    pos = xi > 0
    with np.errstate(over="ignore", invalid="ignore"):
        val = (2.0 ** (1.0 - spec.nu) / sp_gamma(spec.nu)) * xi[pos] ** spec.nu * bessel_kv(spec.nu, xi[pos])
    # overflow of K_nu at tiny arguments means the kernel is 1 to machine precision
    out[pos] = np.where(np.isfinite(val), val, 1.0)
    return out


def _gh_diag(var: np.ndarray):
    """E[sigma(u)^2] for u ~ N(0, var), logistic sigmoid, 1-D Gauss-Hermite."""
    nodes, weights = np.polynomial.hermite.hermgauss(_GH_NODES)
    u = math.sqrt(2.0) * np.sqrt(var)[:, None] * nodes[None, :]
    s = 1.0 / (1.0 + np.exp(-u))
    return (s * s) @ weights / math.sqrt(math.pi)


def _gh_expectations(vaa: np.ndarray, vbb: np.ndarray, vab: np.ndarray):
    """E[sigma(u)sigma(v)] and E[sigma'(u)sigma'(v)] for the logistic sigmoid
    under (u, v) ~ N(0, [[vaa, vab], [vab, vbb]]), by tensorized Gauss-Hermite."""
    nodes, weights = np.polynomial.hermite.hermgauss(_GH_NODES)
    sa = np.sqrt(vaa)
    cond = np.maximum(vbb[None, :] - vab ** 2 / vaa[:, None], 0.0)
    a21 = vab / sa[:, None]
    a22 = np.sqrt(cond)
    es = np.zeros_like(vab)
    ed = np.zeros_like(vab)
    sig = lambda x: 1.0 / (1.0 + np.exp(-x))
    for i in range(_GH_NODES):
        u = math.sqrt(2.0) * sa * nodes[i]  # (na,)
        su = sig(u)[:, None]
        du = (su * (1.0 - su))
        mean_v = math.sqrt(2.0) * a21 * nodes[i]
        inner_s = np.zeros_like(vab)
        inner_d = np.zeros_like(vab)
        for j in range(_GH_NODES):
            v = mean_v + math.sqrt(2.0) * a22 * nodes[j]
            sv = sig(v)
            inner_s += weights[j] * sv
            inner_d += weights[j] * sv * (1.0 - sv)
        es += weights[i] * su * inner_s
        ed += weights[i] * du * inner_d
    return es / math.pi, ed / math.pi


def _ntk_cross(spec: Ntk, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Tangent-kernel recursion over layers, vectorized over all pairs.

    Tracks the pairwise preactivation covariance s alongside the
    self-covariances va/vb, and accumulates theta_l = sigma_l +
    dot_sigma_l * theta_{l-1}; the step l = depth is the linear readout's
    contribution, so the loop runs exactly `depth` times.
    """
    n = a.shape[1]
    wv, bv = spec.w_var, spec.b_var
    s = wv * (a @ b.T) / n + bv
    va = wv * np.einsum("ij,ij->i", a, a) / n + bv
    vb = wv * np.einsum("ij,ij->i", b, b) / n + bv
    theta = s.copy()
    for _ in range(spec.depth):
        if spec.activation == "relu":
            denom = np.sqrt(np.outer(va, vb))
            corr = s / denom
            if np.any(np.abs(corr) > 1.0 + CORRELATION_TOL):
                raise DataError(f"NTK correlation {np.max(np.abs(corr))} exceeds 1 beyond tolerance")
            corr = np.clip(corr, -1.0, 1.0)
            ang = np.arccos(corr)
            e_ss = denom / (2.0 * math.pi) * (np.sin(ang) + (math.pi - ang) * np.cos(ang))
            e_dd = (math.pi - ang) / (2.0 * math.pi)
            va_next, vb_next = va / 2.0, vb / 2.0
        elif spec.activation == "erf":
            denom = np.sqrt(np.outer(1.0 + 2.0 * va, 1.0 + 2.0 * vb))
            arg = 2.0 * s / denom
            if np.any(np.abs(arg) > 1.0 + CORRELATION_TOL):
                raise DataError(f"NTK arcsine argument {np.max(np.abs(arg))} exceeds 1 beyond tolerance")
            e_ss = (2.0 / math.pi) * np.arcsin(np.clip(arg, -1.0, 1.0))
            e_dd = (4.0 / math.pi) / np.sqrt(np.maximum(denom ** 2 - 4.0 * s ** 2, 1e-300))
            va_next = (1.0 / math.pi) * np.arcsin(2.0 * va / (1.0 + 2.0 * va))
            vb_next = (1.0 / math.pi) * np.arcsin(2.0 * vb / (1.0 + 2.0 * vb))
        else:  # logistic sigmoid, quadrature path
            e_ss, e_dd = _gh_expectations(va, vb, s)
            va_next = _gh_diag(va)
            vb_next = _gh_diag(vb)
        s = wv * e_ss + bv
        theta = s + (wv * e_dd) * theta
        va = wv * va_next + bv
        vb = wv * vb_next + bv
    return theta


def cross(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kernel matrix k(a_i, b_j) for two stacks of sample vectors."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise DataError(f"input lengths differ: {a.shape[1]} vs {b.shape[1]}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DataError("kernel inputs must be finite")
    if isinstance(spec, Linear):
        return a @ b.T
    if isinstance(spec, RBF):
        return np.exp(-_sq_dists(a, b) / (2.0 * spec.sigma ** 2))
    if isinstance(spec, RationalQuadratic):
        return (1.0 + _sq_dists(a, b) / (2.0 * spec.alpha * spec.length ** 2)) ** (-spec.alpha)
    if isinstance(spec, Matern):
        return _matern(spec, np.sqrt(_sq_dists(a, b)))
    return _ntk_cross(spec, a, b)


def evaluate(spec: KernelSpec, a, b) -> float:
    """Scalar kernel value k(a, b)."""
    return float(cross(spec, np.asarray(a, dtype=float)[None, :], np.asarray(b, dtype=float)[None, :])[0, 0])


def gram(spec: KernelSpec, inputs: np.ndarray, ridge: float = 0.0) -> GramMatrix:
    """Symmetric Gram matrix over training inputs (N, n).

    The upper triangle is computed and mirrored, so symmetry is exact.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[0] < 1:
        raise DataError(f"gram expects a (N, n) input stack, got {inputs.shape}")
    full = cross(spec, inputs, inputs)
    upper = np.triu(full)
    return GramMatrix(matrix=upper + np.triu(full, 1).T, ridge=ridge)


def ntk_evaluate(spec: Ntk, a, b) -> float:
    """Scalar infinite-width NTK value; alias of evaluate for NTK specs."""
    if not isinstance(spec, Ntk):
        raise ConfigError("ntk_evaluate requires an Ntk spec")
    return evaluate(spec, a, b)


def _mc_activation(name: str):
    if name == "relu":
        return lambda h: np.maximum(h, 0.0), lambda h: (h > 0).astype(float)
    if name == "erf":
        return lambda h: sp_erf(h), lambda h: 2.0 / math.sqrt(math.pi) * np.exp(-h * h)
    sig = lambda h: 1.0 / (1.0 + np.exp(-h))
    return sig, lambda h: sig(h) * (1.0 - sig(h))


def finite_width_ntk_mc(
    depth: int,
    activation: str,
    width: int,
    seeds: int,
    a,
    b,
    w_var: float | None = None,
    b_var: float = 0.1,
) -> float:
    """Monte-Carlo tangent kernel of a finite-width net at initialization.

    Builds `seeds` random fully connected nets (depth nonlinear hidden
    layers, linear readout) under the NTK parameterization - weights drawn
    N(0,1) and scaled by sqrt(w_var/fan_in), biases scaled by
    sqrt(b_var) - and averages <grad_theta f(a), grad_theta f(b)>.
    Intended as a test oracle for the closed-form recursion.
    """
    if width < 64:
        raise ConfigError("width must be >= 64 for a meaningful estimate")
    if w_var is None:
        w_var = 2.0 if activation == "relu" else 1.0
    act, dact = _mc_activation(activation)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    sizes = [n] + [width] * depth + [1]
    total = 0.0
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        ws = [rng.standard_normal((sizes[l + 1], sizes[l])) for l in range(len(sizes) - 1)]
        bs = [rng.standard_normal(sizes[l + 1]) for l in range(len(sizes) - 1)]

        def tangent_fields(x):
            acts = [x]
            pre = []
            cur = x
            for l, w in enumerate(ws):
                h = math.sqrt(w_var / sizes[l]) * (w @ cur) + math.sqrt(b_var) * bs[l]
                pre.append(h)
                cur = act(h) if l < len(ws) - 1 else h
                acts.append(cur)
            deltas = [None] * len(ws)
            delta = np.ones(1)
            deltas[-1] = delta
            for l in range(len(ws) - 2, -1, -1):
                back = math.sqrt(w_var / sizes[l + 1]) * (ws[l + 1].T @ deltas[l + 1])
                deltas[l] = dact(pre[l]) * back
            return acts, deltas

        acts_a, del_a = tangent_fields(a)
        acts_b, del_b = tangent_fields(b)
        val = 0.0
        for l in range(len(ws)):
            gd = float(del_a[l] @ del_b[l])
            val += gd * ((w_var / sizes[l]) * float(acts_a[l] @ acts_b[l]) + b_var)
        total += val
    return total / seeds
