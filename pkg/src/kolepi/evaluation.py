"""Prediction-error metric, boxplot statistics, and benchmark runners.

The prediction relative error of a batch is the mean over samples of the
summed per-compartment relative Euclidean trajectory errors.  Boxplot
statistics use the linear-interpolation quantile convention with
1.5-IQR whiskers clipped to the data extremes; benchmark boxplots are
taken over the pooled per-sample errors across batches, which is also
where the headline medians come from.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import datagen, kol
from .errors import ConfigError, DataError
from .kernels import KernelSpec


@dataclass(frozen=True)
class ErrorReport:
    per_sample: np.ndarray  # (N,) summed relative errors per test sample
    per_compartment: np.ndarray  # (d,) mean relative error per compartment
    aggregate: float  # mean of per_sample
    fit_seconds: float | None = None
    predict_seconds: float | None = None


def prediction_error(preds, refs) -> ErrorReport:
    """Relative trajectory error between matched (d, n) prediction/reference pairs."""
    preds = np.asarray(preds, dtype=float)
    refs = np.asarray(refs, dtype=float)
    if preds.shape != refs.shape or preds.ndim != 3:
        raise DataError(f"prediction/reference stacks must share a (N, d, n) shape, got {preds.shape} vs {refs.shape}")
    norms = np.linalg.norm(refs, axis=2)
    if np.any(norms == 0):
        sample, comp = map(int, np.argwhere(norms == 0)[0])
        raise DataError(f"reference compartment row is identically zero (sample {sample}, compartment {comp})")
    rel = np.linalg.norm(preds - refs, axis=2) / norms
    per_sample = rel.sum(axis=1)
    return ErrorReport(
        per_sample=per_sample,
        per_compartment=rel.mean(axis=0),
        aggregate=float(per_sample.mean()),
    )


@dataclass(frozen=True)
class BoxplotStats:
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: np.ndarray


def boxplot(values) -> BoxplotStats:
    """Five-number boxplot summary with 1.5-IQR whiskers."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ConfigError("boxplot requires at least one value")
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = values[(values >= lo_fence) & (values <= hi_fence)]
    whisker_low = float(inside.min())
    whisker_high = float(inside.max())
    outliers = np.sort(values[(values < whisker_low) | (values > whisker_high)])
    return BoxplotStats(float(med), float(q1), float(q3), whisker_low, whisker_high, outliers)


@dataclass(frozen=True)
class BenchmarkEntry:
    kernel_name: str
    mode: str
    batch_aggregates: list[float]
    pooled_errors: np.ndarray  # per-sample errors across all batches
    stats: BoxplotStats
    fit_seconds: float


def _evaluate_model(model: kol.KolModel, test: datagen.Dataset) -> tuple[ErrorReport, float]:
    t0 = time.perf_counter()
    preds = np.stack([kol.predict_samples(model, u).values for u in test.controls])
    dt_pred = time.perf_counter() - t0
    report = prediction_error(preds, test.trajectories)
    return report, dt_pred


def kernel_benchmark(
    scenario: datagen.ScenarioConfig,
    kernel_specs: dict[str, KernelSpec],
    batches: int,
    batch_size: int,
    modes: tuple[str, ...] = (kol.MODE_MAP, kol.MODE_PARTIAL),
    ridge: float = kol.DEFAULT_RIDGE,
) -> dict[tuple[str, str], BenchmarkEntry]:
    """Repeatedly refit each kernel/mode pair on fresh training batches.

    Batch b trains on the scenario's plan with seed train_seed + b and is
    scored on the shared test split; the entry pools per-sample errors
    over all batches.  Deterministic given the scenario seeds.
    """
    test = datagen.generate(scenario, split="test")
    results: dict[tuple[str, str], dict] = {
        (name, mode): {"aggregates": [], "errors": [], "fit": 0.0}
        for name in kernel_specs for mode in modes
    }
    for b in range(batches):
        cfg = datagen.ScenarioConfig(
            model=scenario.model, params=scenario.params, x0=scenario.x0, grid=scenario.grid,
            plan=scenario.plan, train_size=batch_size, test_size=scenario.test_size,
            train_seed=scenario.train_seed + b, test_seed=scenario.test_seed,
            substeps=scenario.substeps,
        )
        train = datagen.generate(cfg, split="train")
        for mode in modes:
            ts = datagen.to_training_set(train, mode)
            for name, spec in kernel_specs.items():
                t0 = time.perf_counter()
                model = kol.fit(ts, spec, ridge=ridge)
                fit_s = time.perf_counter() - t0
                report, _ = _evaluate_model(model, test)
                slot = results[(name, mode)]
                slot["aggregates"].append(report.aggregate)
                slot["errors"].append(report.per_sample)
                slot["fit"] += fit_s
    out = {}
    for key, slot in results.items():
        pooled = np.concatenate(slot["errors"])
        out[key] = BenchmarkEntry(
            kernel_name=key[0], mode=key[1], batch_aggregates=slot["aggregates"],
            pooled_errors=pooled, stats=boxplot(pooled), fit_seconds=slot["fit"],
        )
    return out


@dataclass(frozen=True)
class ScalingRow:
    model: str
    mode: str
    size: int
    error: float
    fit_seconds: float
    predict_seconds: float
    datagen_seconds: float


def scaling_benchmark(
    scenarios: list[datagen.ScenarioConfig],
    sizes: list[int],
    kernel_by_mode: dict[str, KernelSpec],
    ridge: float = kol.DEFAULT_RIDGE,
) -> list[ScalingRow]:
    """Error/wall-clock ladder over training sizes for each scenario.

    Fit time covers Gram assembly, factorization, and the coefficient
    solves; dataset generation is timed separately.
    """
    if sorted(sizes) != list(sizes):
        raise ConfigError("sizes must be ascending")
    rows = []
    for scenario in scenarios:
        test = datagen.generate(scenario, split="test")
        for size in sizes:
            cfg = datagen.ScenarioConfig(
                model=scenario.model, params=scenario.params, x0=scenario.x0, grid=scenario.grid,
                plan=scenario.plan, train_size=size, test_size=scenario.test_size,
                train_seed=scenario.train_seed, test_seed=scenario.test_seed,
                substeps=scenario.substeps,
            )
            t0 = time.perf_counter()
            train = datagen.generate(cfg, split="train")
            gen_s = time.perf_counter() - t0
            for mode, spec in kernel_by_mode.items():
                ts = datagen.to_training_set(train, mode)
                t0 = time.perf_counter()
                model = kol.fit(ts, spec, ridge=ridge)
                fit_s = time.perf_counter() - t0
                report, pred_s = _evaluate_model(model, test)
                rows.append(ScalingRow(
                    model=scenario.model.value, mode=mode, size=size, error=report.aggregate,
                    fit_seconds=fit_s, predict_seconds=pred_s, datagen_seconds=gen_s,
                ))
    return rows


def errors_non_increasing(errors: list[float], noise: float = 0.2) -> bool:
    """Monotone-trend check: each step may exceed its predecessor by at
    most the noise fraction."""
    return all(b <= a * (1.0 + noise) for a, b in zip(errors, errors[1:]))
