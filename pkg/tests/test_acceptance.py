"""Acceptance gate: every criterion at its stated tolerance.

Each test prints one PASS/FAIL line (run pytest with -s or -rA to see
them all).  Heavy shared artifacts are built once per session.
"""

import json
import time

import numpy as np
import pytest

from kolepi import datagen, evaluation, kol, optcontrol
from kolepi import epimodels as epi
from kolepi import kernels as ker
from kolepi.cli import main as cli_main

SEIRD_PARAMS = epi.EpiParams(r0=2.0, gamma=0.05, delta=0.4, epsilon=0.05, phi=0.05)
TABLE1_GRID = epi.TimeGrid(t_star=5.0, dt=0.05)
KERNEL_M = ker.Ntk(depth=1, activation="erf", w_var=0.5, b_var=2.0)
KERNEL_PARTIAL = ker.Ntk(depth=1, activation="relu", w_var=2.0, b_var=0.1)


def record(name: str, passed: bool, detail: str):
    print(f"\nACCEPTANCE {name}: {'PASS' if passed else 'FAIL'} ({detail})")
    assert passed, f"{name}: {detail}"


def table1_scenario(model: epi.ModelKind, size: int) -> datagen.ScenarioConfig:
    x0 = [0.0] * model.dim
    x0[0], x0[1] = 0.99, 0.01
    return datagen.ScenarioConfig(
        model=model, params=SEIRD_PARAMS, x0=tuple(x0), grid=TABLE1_GRID,
        plan=datagen.MixedPlan(), train_size=size, test_size=100,
        train_seed=1000, test_seed=9000,
    )


def test_table1_desk_scale_reproduction():
    rows = evaluation.scaling_benchmark(
        [table1_scenario(epi.ModelKind.SEIRD, 500), table1_scenario(epi.ModelKind.SIR, 500)],
        [25, 100, 500],
        {"m": KERNEL_M, "partial": KERNEL_PARTIAL},
    )
    seird_m = [r for r in rows if r.model == "seird" and r.mode == "m"]
    sir_p = [r for r in rows if r.model == "sir" and r.mode == "partial"]
    err_m = {r.size: r.error for r in seird_m}
    err_p = {r.size: r.error for r in sir_p}
    fit500 = [r.fit_seconds for r in seird_m if r.size == 500][0]
    ok = (
        err_m[500] <= 1e-3
        and err_p[500] <= 8e-3
        and fit500 <= 60.0
        and evaluation.errors_non_increasing([err_m[s] for s in (25, 100, 500)])
        and evaluation.errors_non_increasing([err_p[s] for s in (25, 100, 500)])
    )
    record(
        "table1-desk-scale", ok,
        f"SEIRD KOL-m @500 p_err={err_m[500]:.2e} (<=1e-3), SIR KOL-d @500 "
        f"p_err={err_p[500]:.2e} (<=8e-3), fit500={fit500:.2f}s, "
        f"ladders m={[f'{err_m[s]:.1e}' for s in (25, 100, 500)]} "
        f"d={[f'{err_p[s]:.1e}' for s in (25, 100, 500)]}",
    )


def test_kernel_benchmark_sis_reduced():
    t0 = time.perf_counter()
    scenario = datagen.ScenarioConfig(
        model=epi.ModelKind.SIS,
        params=epi.EpiParams(r0=4.0, gamma=0.05),
        x0=(0.99, 0.01),
        grid=epi.TimeGrid(t_star=100.0, dt=1.0),
        plan=datagen.MixedPlan(),
        train_size=200, test_size=100, train_seed=1000, test_seed=9000,
    )
    kernels = {
        "linear": ker.Linear(),
        "ntk-relu": ker.Ntk(depth=4, activation="relu", w_var=2.0, b_var=10.0),
    }
    results = evaluation.kernel_benchmark(scenario, kernels, batches=5, batch_size=200)
    ntk_d = results[("ntk-relu", "partial")].stats.median
    linear_best = min(results[("linear", "m")].stats.median,
                      results[("linear", "partial")].stats.median)
    elapsed = time.perf_counter() - t0
    ok = ntk_d < 0.05 and ntk_d < linear_best and elapsed <= 15 * 60
    record(
        "kernel-benchmark-sis", ok,
        f"NTK-ReLU KOL-d median={ntk_d:.4f} (<0.05), best linear median={linear_best:.3f}, "
        f"runtime={elapsed:.1f}s (<=900s)",
    )


def test_near_interpolation():
    # every fitted model reproduces its own training targets: trajectory
    # samples for mode m, derivative samples for mode partial
    worst = 0.0
    for model_kind, size in [(epi.ModelKind.SEIRD, 100), (epi.ModelKind.SIR, 500)]:
        train = datagen.generate(table1_scenario(model_kind, size), split="train")
        for mode, spec in (("m", KERNEL_M), ("partial", KERNEL_PARTIAL)):
            model = kol.fit(datagen.to_training_set(train, mode), spec, ridge=1e-10)
            preds = [kol.predict_samples(model, u) for u in train.controls]
            if mode == "m":
                stack = np.stack([p.values for p in preds])
                refs = train.trajectories
            else:
                stack = np.stack([p.raw_derivative for p in preds])
                refs = train.derivatives
            report = evaluation.prediction_error(stack, refs)
            worst = max(worst, report.aggregate)
    ok = worst <= 1e-4
    record("near-interpolation", ok, f"worst training p_err={worst:.2e} (<=1e-4)")


def test_positivity_exact():
    train = datagen.generate(table1_scenario(epi.ModelKind.SIR, 100), split="train")
    model = kol.fit(datagen.to_training_set(train, "m"), KERNEL_M, positivity=True)
    rng = np.random.default_rng(77)
    controls = rng.uniform(0.0, 1.0, (10_000, TABLE1_GRID.n))
    lowest = min(kol.predict_samples(model, u).values.min() for u in controls)
    ok = lowest >= 0.0
    record("positivity", ok, f"min prediction over 10000 random controls = {lowest:.3e} (>=0)")


def test_conservation():
    worst = 0.0
    scenarios = [
        table1_scenario(epi.ModelKind.SEIRD, 200),
        table1_scenario(epi.ModelKind.SIRD, 200),
        datagen.ScenarioConfig(
            model=epi.ModelKind.SIS, params=epi.EpiParams(r0=4.0, gamma=0.05),
            x0=(0.99, 0.01), grid=epi.TimeGrid(t_star=100.0, dt=1.0),
            plan=datagen.MixedPlan(), train_size=200, test_size=50,
            train_seed=1, test_seed=2,
        ),
    ]
    for scenario in scenarios:
        for split in ("train", "test"):
            ds = datagen.generate(scenario, split=split)
            worst = max(worst, float(np.max(np.abs(ds.trajectories.sum(axis=1) - 1.0))))
    ok = worst <= 1e-12
    record("conservation", ok, f"max |sum - 1| = {worst:.2e} (<=1e-12)")


def test_ntk_finite_width_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {"relu": 0.0, "erf": 0.0}
    for activation in ("relu", "erf"):
        spec = ker.Ntk(depth=1, activation=activation)
        for _ in range(50):
            a, b = rng.uniform(0.0, 1.0, (2, 16))
            closed = ker.evaluate(spec, a, b)
            mc = ker.finite_width_ntk_mc(1, activation, 4096, 10, a, b,
                                         w_var=spec.w_var, b_var=spec.b_var)
            worst[activation] = max(worst[activation], abs(mc - closed) / abs(closed))
    elapsed = time.perf_counter() - t0
    ok = worst["relu"] <= 0.05 and worst["erf"] <= 0.05 and elapsed <= 300
    record(
        "ntk-correctness", ok,
        f"worst rel dev relu={worst['relu']:.3f}, erf={worst['erf']:.3f} (<=0.05), "
        f"runtime={elapsed:.1f}s (<=300s)",
    )


@pytest.fixture(scope="module")
def eradication_setup():
    scenario = datagen.ScenarioConfig(
        model=epi.ModelKind.SIR,
        params=epi.EpiParams(r0=2.0, gamma=5.0),
        x0=(2000 / 2001, 1 / 2001, 0.0),
        grid=epi.TimeGrid(t_star=5.0, dt=0.01),
        plan=datagen.StepHeightsPlan(level_range=(0.0, 0.8)),
        train_size=2000, test_size=100, train_seed=2024, test_seed=2025,
    )
    truth = optcontrol.TrueOdeProvider(
        scenario.model, scenario.params, np.asarray(scenario.x0), scenario.grid,
        scenario.resolved_substeps())
    train = datagen.generate(scenario, split="train")
    providers = {"ode": truth}
    for mode, spec in (("m", ker.Ntk(depth=1, activation="erf", w_var=1.0, b_var=0.1)),
                       ("partial", KERNEL_PARTIAL)):
        model = kol.fit(datagen.to_training_set(train, mode), spec)
        providers[f"kol-{mode}"] = optcontrol.SurrogateProvider(model, infectious_index=1)
    return providers


def test_eradication_benchmark(eradication_setup):
    providers = eradication_setup
    eta = 0.05
    lines, ok = [], True
    for u_max in (0.55, 0.6, 0.65, 0.7):
        cfg = optcontrol.EradicationConfig(u_max=u_max, eta=eta, tau_step=0.01)
        sweeps = {name: optcontrol.min_eradication(p, cfg) for name, p in providers.items()}
        ode = sweeps["ode"]
        # the always-on strategy either has no eradication event (no threshold
        # exceedance) or a strictly worse eradication time
        ode_ok = ode.tau_star > 0.0 and (ode.te_at_zero is None or ode.te_star < ode.te_at_zero)
        ok &= ode_ok
        line = f"u_max={u_max}: ode tau*={ode.tau_star:.2f} te*={ode.te_star:.3f}"
        for name in ("kol-m", "kol-partial"):
            sw = sweeps[name]
            rel = abs(sw.te_star - ode.te_star) / ode.te_star
            ok &= rel <= 0.05 and abs(sw.tau_star - ode.tau_star) <= 2.0
            # delayed activation beats the always-on strategy under the
            # surrogates as well, not just under the true dynamics
            ok &= sw.tau_star > 0.0 and (sw.te_at_zero is None or sw.te_star <= sw.te_at_zero)
            line += f" | {name} te* {rel:.2%} dtau {abs(sw.tau_star - ode.tau_star):.2f}"
        lines.append(line)
    record("eradication-benchmark", ok, "; ".join(lines))


@pytest.fixture(scope="module")
def quad_setup():
    def build(n_phases: int):
        scenario = datagen.ScenarioConfig(
            model=epi.ModelKind.SIR,
            params=epi.EpiParams(r0=4.0, gamma=0.05),
            x0=(0.99, 0.01, 0.0),
            grid=epi.TimeGrid(t_star=5.0, dt=0.05),
            plan=datagen.PiecewisePlan(n_phases=n_phases, level_range=(0.0, 0.8)),
            train_size=800, test_size=100, train_seed=3024, test_seed=3025,
        )
        truth = optcontrol.TrueOdeProvider(
            scenario.model, scenario.params, np.asarray(scenario.x0), scenario.grid,
            scenario.resolved_substeps())
        train = datagen.generate(scenario, split="train")
        providers = {"ode": truth}
        for mode, spec in (("m", ker.Ntk(depth=1, activation="erf", w_var=1.0, b_var=2.0)),
                           ("partial", KERNEL_PARTIAL)):
            model = kol.fit(datagen.to_training_set(train, mode), spec)
            providers[f"kol-{mode}"] = optcontrol.SurrogateProvider(model, infectious_index=1)
        return providers, truth

    return {n: build(n) for n in (5, 10)}


def test_quadratic_oc_benchmark(quad_setup):
    ok = True
    lines = []
    for n_phases in (5, 10):
        providers, truth = quad_setup[n_phases]
        for c_i, c_u in ((1.0, 0.1), (1.0, 0.01), (0.1, 0.1)):
            cfg = optcontrol.QuadConfig(c_i=c_i, c_u=c_u, n_phases=n_phases, u_ub=0.7, multistart=5)
            true_costs = {}
            for name, provider in providers.items():
                res = optcontrol.optimize_quadratic(provider, cfg, seed=2026)
                true_costs[name] = optcontrol.cross_evaluate(res.levels, truth, cfg)
            base = true_costs["ode"]
            rel_m = abs(true_costs["kol-m"] - base) / base
            rel_p = abs(true_costs["kol-partial"] - base) / base
            ok &= rel_m <= 0.10 and rel_p <= 0.10
            lines.append(f"N={n_phases} C_I={c_i} C_u={c_u}: m {rel_m:.2%} d {rel_p:.2%}")
    record("quadratic-oc-benchmark", ok, "; ".join(lines))


def test_quadratic_oc_grid_search_oracle(quad_setup):
    providers, truth = quad_setup[5]
    cfg = optcontrol.QuadConfig(c_i=1.0, c_u=0.1, n_phases=1, u_ub=0.7, multistart=3)
    res = optcontrol.optimize_quadratic(truth, cfg, seed=0)
    levels = np.arange(0.0, cfg.u_ub + 1e-12, 1e-3)
    costs = []
    for lv in levels:
        samples = np.full(truth.grid.n, lv)
        costs.append(optcontrol.quad_cost(truth.trajectory(samples), samples, 1.0, 0.1, truth.grid))
    best = levels[int(np.argmin(costs))]
    dev = abs(res.levels[0] - best)
    ok = dev <= 1e-3
    record("quadratic-oc-grid-oracle", ok, f"|SLSQP - grid| = {dev:.2e} (<=1e-3)")


def test_small_instance_algebra_oracle():
    rng = np.random.default_rng(99)
    worst = 0.0
    for n_train, n in [(2, 2), (3, 4), (5, 3)]:
        grid = epi.TimeGrid(t_star=float(n - 1), dt=1.0)
        inputs = rng.uniform(0.0, 1.0, (n_train, n))
        targets = rng.uniform(0.1, 0.9, (n_train, 2 * n))
        ts = kol.TrainingSet(mode="m", grid=grid, inputs=inputs, targets=targets,
                             x0=np.array([0.9, 0.1]), d=2)
        for spec in (ker.RBF(sigma=0.7), ker.Ntk(depth=1, activation="relu")):
            model = kol.fit(ts, spec, ridge=1e-10, positivity=False)
            gram = ker.gram(spec, inputs).matrix
            dense = np.linalg.solve(gram + 1e-10 * np.eye(n_train), targets)
            worst = max(worst, float(np.max(np.abs(model.coeff - dense))))
    ok = worst <= 1e-10
    record("small-instance-algebra", ok, f"max |chol - dense inverse| = {worst:.2e} (<=1e-10)")


def test_cli_determinism(tmp_path):
    scenario = {
        "model": "sir",
        "params": {"r0": 2.0, "gamma": 5.0, "delta": 0.0, "epsilon": 0.0, "phi": 0.0},
        "x0": [2000 / 2001, 1 / 2001, 0.0],
        "grid": {"t_star": 4.0, "dt": 0.05},
        "plan": {"kind": "step_heights", "level_range": [0.0, 0.8]},
        "train_size": 60, "test_size": 10, "train_seed": 5, "test_seed": 6,
        "substeps": None,
    }
    (tmp_path / "scenario.json").write_text(json.dumps(scenario))
    fig7 = {
        "protocol": "fig7", "scenario": scenario, "eta": 0.05, "tau_step": 0.05,
        "umax_sweep": [0.7],
        "kernels": {"m": {"kind": "ntk", "depth": 1, "activation": "erf", "w_var": 1.0, "b_var": 0.1},
                    "partial": {"kind": "ntk", "depth": 1, "activation": "relu",
                                "w_var": 2.0, "b_var": 0.1}},
    }
    (tmp_path / "fig7.json").write_text(json.dumps(fig7))
    ocquad = {
        "protocol": "ocquad",
        "scenario": {**scenario, "plan": {"kind": "piecewise", "n_phases": 5,
                                          "level_range": [0.0, 0.8]},
                     "params": {"r0": 4.0, "gamma": 0.05, "delta": 0.0, "epsilon": 0.0, "phi": 0.0},
                     "x0": [0.99, 0.01, 0.0], "grid": {"t_star": 5.0, "dt": 0.25}},
        "u_ub": 0.7, "multistart": 2, "seed": 11,
        "kernels": fig7["kernels"],
        "weight_pairs": [{"c_i": 1.0, "c_u": 0.1}],
    }
    (tmp_path / "ocquad.json").write_text(json.dumps(ocquad))

    def collect(root):
        # run-manifest.json embeds the per-run output paths (provenance, not
        # numeric output); timings.json is wall-clock by design
        return {str(p.relative_to(root)): p.read_bytes()
                for p in sorted(root.rglob("*"))
                if p.is_file() and p.suffix in (".json", ".csv", ".bin", ".kol")
                and p.name not in ("timings.json", "run-manifest.json")}

    outcomes = []
    for run in ("r1", "r2"):
        base = tmp_path / run
        assert cli_main(["gen", "--config", str(tmp_path / "scenario.json"),
                         "--out", str(base / "ds")]) == 0
        assert cli_main(["fit", "--data", str(base / "ds" / "train"), "--mode", "m",
                         "--kernel", json.dumps(fig7["kernels"]["m"]),
                         "--out", str(base / "model.kol")]) == 0
        assert cli_main(["eval", "--model", str(base / "model.kol"),
                         "--test", str(base / "ds" / "test"), "--out", str(base / "rep")]) == 0
        assert cli_main(["erad", "--config", str(tmp_path / "fig7.json"), "--provider", "ode",
                         "--out", str(base / "erad")]) == 0
        assert cli_main(["ocquad", "--config", str(tmp_path / "ocquad.json"), "--provider", "ode",
                         "--out", str(base / "oc")]) == 0
        outcomes.append(collect(base))
    same = outcomes[0] == outcomes[1]
    files = len(outcomes[0])
    record("cli-determinism", same, f"{files} numeric output files byte-identical across reruns")
