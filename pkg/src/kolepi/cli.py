"""Command-line entry point: dataset generation, training, evaluation,
benchmark protocols, optimal-control runs, and the HTTP server.

Every command resolves its configuration (a named preset or a JSON file),
writes a run-manifest.json with the resolved settings, and emits
deterministic numeric outputs (CSV/JSON/binary) given fixed seeds;
wall-clock measurements go to separate timing files.  Report paths also
render PNG figures next to the delimited data.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, datagen, evaluation, kol, optcontrol, plotting
from . import epimodels as epi
from . import kernels as ker
from .errors import ConfigError, KolepiError

PRESETS = ("figs", "table1", "fig7", "ocquad")


def _load_protocol_config(name_or_path: str) -> dict:
    if name_or_path in PRESETS:
        text = resources.files("kolepi.presets").joinpath(f"{name_or_path}.json").read_text()
    else:
        try:
            text = Path(name_or_path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {name_or_path!r}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {name_or_path!r} is not valid JSON: {exc}") from exc


_PROTOCOL_KEYS = {
    "figs": {"protocol", "models", "batches", "batch_size", "test_size", "train_seed",
             "test_seed", "grid", "params", "initial_infected", "kernels"},
    "table1": {"protocol", "models", "sizes", "test_size", "train_seed", "test_seed",
               "grid", "params", "initial_infected", "kernels"},
    "fig7": {"protocol", "scenario", "eta", "tau_step", "umax_sweep", "kernels"},
    "ocquad": {"protocol", "scenario", "u_ub", "multistart", "seed", "kernels",
               "weight_pairs"},
}


def _validate_protocol(doc: dict, expected: str) -> dict:
    """Strict schema check for a protocol config: exactly the known keys."""
    if not isinstance(doc, dict) or doc.get("protocol") != expected:
        raise ConfigError(f"expected a {expected!r} protocol config, got "
                          f"{doc.get('protocol') if isinstance(doc, dict) else type(doc).__name__!r}")
    allowed = _PROTOCOL_KEYS[expected]
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {expected} config: {unknown}")
    missing = sorted(allowed - set(doc))
    if missing:
        raise ConfigError(f"{expected} config is missing: {missing}")
    return doc


def _initial_state(model: epi.ModelKind, infected: float) -> tuple[float, ...]:
    """1% seeding convention: the seed goes to E when the model has one."""
    x0 = [0.0] * model.dim
    x0[0] = 1.0 - infected
    x0[1] = infected  # E for SEIRD, I otherwise
    return tuple(x0)


def _scenario_for_model(doc: dict, model_name: str, train_size: int, train_seed: int) -> datagen.ScenarioConfig:
    model = epi.ModelKind(model_name)
    return datagen.ScenarioConfig(
        model=model,
        params=epi.EpiParams(**doc["params"]),
        x0=_initial_state(model, doc["initial_infected"]),
        grid=epi.TimeGrid(**doc["grid"]),
        plan=datagen.MixedPlan(),
        train_size=train_size,
        test_size=doc["test_size"],
        train_seed=train_seed,
        test_seed=doc["test_seed"],
    )


def _write_manifest(outdir: Path, command: str, resolved: dict):
    outdir.mkdir(parents=True, exist_ok=True)
    doc = {"command": command, "package_version": __version__, "config": resolved}
    (outdir / "run-manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[list]):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _fmt(x: float) -> str:
    return f"{x:.3e}" if x == x else "nan"


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    doc = _load_protocol_config(args.config)
    if "scenario" in doc:
        doc = doc["scenario"]
    scenario = datagen.scenario_from_json(doc)
    out = Path(args.out)
    _write_manifest(out, "gen", datagen.scenario_to_json(scenario))
    for split in ("train", "test"):
        ds = datagen.generate(scenario, split=split)
        datagen.write(ds, out / split)
        print(f"{split}: {ds.size} controls, model={scenario.model.value}, "
              f"n={scenario.grid.n}, d={scenario.model.dim} -> {out / split}")
    return 0


def _parse_kernel(text: str) -> ker.KernelSpec:
    if text.strip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"kernel is not valid JSON: {exc}") from exc
    else:
        doc = json.loads(Path(text).read_text())
    return ker.spec_from_json(doc)


def cmd_fit(args) -> int:
    kernel = _parse_kernel(args.kernel)
    ds = datagen.read(args.data)
    ts = datagen.to_training_set(ds, args.mode)
    model = kol.fit(ts, kernel, ridge=args.ridge, positivity=args.positivity)
    kol.save(model, args.out)
    print(f"fitted KOL-{args.mode} (N={model.n_train}, kernel={ker.spec_to_json(kernel)}, "
          f"ridge={args.ridge:g}) -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    import time as _time

    model = kol.load(args.model)
    test = datagen.read(args.test)
    t0 = _time.perf_counter()
    preds = np.stack([kol.predict_samples(model, u).values for u in test.controls])
    predict_seconds = _time.perf_counter() - t0
    report = evaluation.prediction_error(preds, test.trajectories)
    out = Path(args.out)
    _write_manifest(out, "eval", {"model": str(args.model), "test": str(args.test)})
    names = test.config.model.compartments
    doc = {
        "aggregate": report.aggregate,
        "per_compartment": {name: float(v) for name, v in zip(names, report.per_compartment)},
        "per_sample": report.per_sample.tolist(),
    }
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n")
    rows = [["aggregate", float(report.aggregate)]]
    rows += [[f"compartment_{name}", float(v)] for name, v in zip(names, report.per_compartment)]
    rows += [[f"sample_{i}", float(v)] for i, v in enumerate(report.per_sample)]
    _write_csv(out / "report.csv", ["quantity", "p_err"], rows)
    (out / "timings.json").write_text(json.dumps({"predict_seconds": predict_seconds}) + "\n")
    print(f"p_err={report.aggregate:.6e} over {test.size} samples -> {out}")
    return 0


def _bench_figs(doc: dict, args, out: Path) -> int:
    models = args.models.split(",") if args.models else doc["models"]
    batches = args.batches or doc["batches"]
    batch_size = args.batch_size or doc["batch_size"]
    kernels = {name: ker.spec_from_json(k) for name, k in doc["kernels"].items()}
    summary_rows, error_rows = [], []
    for model_name in models:
        scenario = _scenario_for_model(doc, model_name, batch_size, doc["train_seed"])
        results = evaluation.kernel_benchmark(scenario, kernels, batches, batch_size)
        entries = list(results.values())
        plotting.render_benchmark_boxplots(entries, model_name, out / f"figs_{model_name}.png")
        for (kname, mode), entry in results.items():
            st = entry.stats
            summary_rows.append([model_name, kname, mode, st.median, st.q1, st.q3,
                                 st.whisker_low, st.whisker_high, len(st.outliers),
                                 float(np.mean(entry.pooled_errors))])
            for idx, v in enumerate(entry.pooled_errors):
                error_rows.append([model_name, kname, mode, idx, float(v)])
        print(f"{model_name}: " + "  ".join(
            f"{kname}/{mode}={results[(kname, mode)].stats.median:.3e}"
            for kname in kernels for mode in ("m", "partial")))
    _write_csv(out / "summary.csv",
               ["model", "kernel", "mode", "median", "q1", "q3", "whisker_low",
                "whisker_high", "n_outliers", "mean"], summary_rows)
    _write_csv(out / "errors.csv", ["model", "kernel", "mode", "index", "p_err"], error_rows)
    return 0


def _bench_table1(doc: dict, args, out: Path) -> int:
    models = args.models.split(",") if args.models else doc["models"]
    sizes = [int(s) for s in args.sizes.split(",")] if args.sizes else doc["sizes"]
    kernel_by_mode = {mode: ker.spec_from_json(k) for mode, k in doc["kernels"].items()}
    scenarios = [_scenario_for_model(doc, m, max(sizes), doc["train_seed"]) for m in models]
    rows = evaluation.scaling_benchmark(scenarios, sizes, kernel_by_mode)
    _write_csv(out / "table1.csv",
               ["model", "mode", "size", "error", "fit_seconds", "predict_seconds", "datagen_seconds"],
               [[r.model, r.mode, r.size, r.error, r.fit_seconds, r.predict_seconds, r.datagen_seconds]
                for r in rows])
    for model_name in models:
        plotting.render_scaling(rows, model_name, out / f"scaling_{model_name}.png")
    print(f"{'model':<8}{'mode':<10}{'size':>6}  {'error':>10}  {'fit [s]':>9}")
    for r in rows:
        print(f"{r.model:<8}{r.mode:<10}{r.size:>6}  {_fmt(r.error):>10}  {r.fit_seconds:>9.3f}")
    return 0


def cmd_bench(args) -> int:
    doc = _load_protocol_config(args.protocol)
    protocol = doc.get("protocol") if isinstance(doc, dict) else None
    if protocol not in ("figs", "table1"):
        raise ConfigError(f"bench expects a 'figs' or 'table1' protocol config, got {protocol!r}")
    _validate_protocol(doc, protocol)
    out = Path(args.out)
    _write_manifest(out, "bench", doc)
    if protocol == "figs":
        return _bench_figs(doc, args, out)
    return _bench_table1(doc, args, out)


def _fit_surrogates(scenario: datagen.ScenarioConfig, kernel_docs: dict) -> dict[str, kol.KolModel]:
    train = datagen.generate(scenario, split="train")
    out = {}
    for mode in (kol.MODE_MAP, kol.MODE_PARTIAL):
        ts = datagen.to_training_set(train, mode)
        out[mode] = kol.fit(ts, ker.spec_from_json(kernel_docs[mode]))
    return out


def _providers_for(args_provider: str, scenario: datagen.ScenarioConfig, kernel_docs: dict) -> dict:
    truth = optcontrol.TrueOdeProvider(
        scenario.model, scenario.params, np.asarray(scenario.x0), scenario.grid,
        scenario.resolved_substeps())
    providers = {}
    if args_provider == "kol-d":  # spec'd short alias for the derivative mode
        args_provider = "kol-partial"
    wanted = ("ode", "kol-m", "kol-partial") if args_provider == "all" else (args_provider,)
    if any(p.startswith("kol-") for p in wanted):
        surrogates = _fit_surrogates(scenario, kernel_docs)
    for name in wanted:
        if name == "ode":
            providers[name] = truth
        elif name == "kol-m":
            providers[name] = optcontrol.SurrogateProvider(
                surrogates[kol.MODE_MAP], scenario.model.infectious_index)
        elif name == "kol-partial":
            providers[name] = optcontrol.SurrogateProvider(
                surrogates[kol.MODE_PARTIAL], scenario.model.infectious_index)
        else:
            raise ConfigError(f"unknown provider {name!r}")
    return providers


def cmd_erad(args) -> int:
    doc = _validate_protocol(_load_protocol_config(args.config), "fig7")
    scenario = datagen.scenario_from_json(doc["scenario"])
    umaxes = ([float(u) for u in args.umax_sweep.split(",")] if args.umax_sweep
              else doc["umax_sweep"])
    out = Path(args.out)
    _write_manifest(out, "erad", {**doc, "umax_sweep": umaxes, "provider": args.provider})
    providers = _providers_for(args.provider, scenario, doc["kernels"])
    beta = epi.beta_from_r0(scenario.model, scenario.params)
    summary_rows = []
    summaries: dict[str, list[dict]] = {name: [] for name in providers}
    for name, provider in providers.items():
        for u_max in umaxes:
            cfg = optcontrol.EradicationConfig(u_max=u_max, eta=doc["eta"], tau_step=doc["tau_step"])
            try:
                sweep = optcontrol.min_eradication(provider, cfg)
            except KolepiError as exc:
                print(f"{name} u_max={u_max}: {exc}")
                continue
            _write_csv(out / f"sweep_{name}_umax{u_max:g}.csv", ["tau", "t_e", "s_at_te"],
                       [[float(t), float(te), float(s)]
                        for t, te, s in zip(sweep.taus, sweep.te, sweep.s_at_te)])
            row = {"u_max": u_max, "r_umax": optcontrol.r_umax(beta, scenario.params.gamma, u_max),
                   "tau_star": sweep.tau_star, "te_star": sweep.te_star, "s_star": sweep.s_star,
                   "te_at_zero": sweep.te_at_zero}
            summaries[name].append(row)
            summary_rows.append([name, u_max, row["r_umax"], sweep.tau_star, sweep.te_star,
                                 sweep.s_star, "" if sweep.te_at_zero is None else sweep.te_at_zero])
            print(f"{name} u_max={u_max:g}: tau*={sweep.tau_star:g} te*={sweep.te_star:.4f} "
                  f"S(te*)={sweep.s_star:.4f}")
    _write_csv(out / "summary.csv",
               ["provider", "u_max", "r_umax", "tau_star", "te_star", "s_at_te", "te_at_zero"],
               summary_rows)
    plotting.render_eradication(summaries, out / "fig7.png")
    return 0


def cmd_ocquad(args) -> int:
    doc = _validate_protocol(_load_protocol_config(args.config), "ocquad")
    scenario = datagen.scenario_from_json(doc["scenario"])
    if not isinstance(scenario.plan, datagen.PiecewisePlan):
        raise ConfigError("ocquad requires a piecewise sampling plan in the scenario")
    phases = args.phases or scenario.plan.n_phases
    if phases != scenario.plan.n_phases:
        scenario = datagen.ScenarioConfig(
            model=scenario.model, params=scenario.params, x0=scenario.x0, grid=scenario.grid,
            plan=datagen.PiecewisePlan(n_phases=phases, level_range=scenario.plan.level_range),
            train_size=scenario.train_size, test_size=scenario.test_size,
            train_seed=scenario.train_seed, test_seed=scenario.test_seed,
            substeps=scenario.substeps,
        )
    if args.ci is not None or args.cu is not None:
        if args.ci is None or args.cu is None:
            raise ConfigError("--ci and --cu must be given together")
        pairs = [{"c_i": args.ci, "c_u": args.cu}]
    else:
        pairs = doc["weight_pairs"]
    out = Path(args.out)
    _write_manifest(out, "ocquad", {**doc, "phases": phases, "weight_pairs": pairs,
                                    "provider": args.provider})
    providers = _providers_for(args.provider, scenario, doc["kernels"])
    truth = optcontrol.TrueOdeProvider(
        scenario.model, scenario.params, np.asarray(scenario.x0), scenario.grid,
        scenario.resolved_substeps())
    rows, records = [], []
    for pair in pairs:
        cfg = optcontrol.QuadConfig(c_i=pair["c_i"], c_u=pair["c_u"], n_phases=phases,
                                    u_ub=doc["u_ub"], multistart=doc["multistart"])
        rec = {"c_i": pair["c_i"], "c_u": pair["c_u"], "levels": {}, "true_cost": {}}
        for name, provider in providers.items():
            res = optcontrol.optimize_quadratic(provider, cfg, seed=doc["seed"])
            true_cost = optcontrol.cross_evaluate(res.levels, truth, cfg)
            rec["levels"][name] = res.levels.tolist()
            rec["true_cost"][name] = true_cost
            rows.append([name, pair["c_i"], pair["c_u"], phases, res.objective, true_cost,
                         res.converged, res.iterations] + [float(v) for v in res.levels])
            print(f"{name} C_I={pair['c_i']:g} C_u={pair['c_u']:g}: "
                  f"objective={res.objective:.6e} true={true_cost:.6e} converged={res.converged}")
        records.append(rec)
    _write_csv(out / "results.csv",
               ["provider", "c_i", "c_u", "phases", "objective", "objective_true",
                "converged", "iterations"] + [f"level_{i}" for i in range(phases)],
               rows)
    plotting.render_schedules(records, scenario.grid.t_star, out / "schedules.png")
    plotting.render_cost_bars(records, out / "costs.png")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, _, port = args.bind.rpartition(":")
    app = create_app(size_cap=args.size_cap, assets_dir=args.assets)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kolepi", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset (train + test splits)")
    p.add_argument("--config", required=True, help="scenario JSON path or preset name")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="fit a KOL surrogate on a dataset directory")
    p.add_argument("--data", required=True, help="dataset split directory (from gen)")
    p.add_argument("--mode", required=True, choices=[kol.MODE_MAP, kol.MODE_PARTIAL])
    p.add_argument("--kernel", required=True, help="kernel spec JSON literal or file")
    p.add_argument("--ridge", type=float, default=kol.DEFAULT_RIDGE)
    p.add_argument("--positivity", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="evaluate a model file on a test dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="run a benchmark protocol (figs or table1)")
    p.add_argument("--protocol", required=True, help="preset name or config path")
    p.add_argument("--models", help="comma list overriding the preset models")
    p.add_argument("--batches", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--sizes", help="comma list of training sizes (table1)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("erad", help="minimum-eradication-time sweep")
    p.add_argument("--config", default="fig7")
    p.add_argument("--provider", default="all",
                   choices=["all", "ode", "kol-m", "kol-d", "kol-partial"])
    p.add_argument("--umax-sweep", dest="umax_sweep", help="comma list of u_max values")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_erad)

    p = sub.add_parser("ocquad", help="quadratic-cost optimal control")
    p.add_argument("--config", default="ocquad")
    p.add_argument("--provider", default="all",
                   choices=["all", "ode", "kol-m", "kol-d", "kol-partial"])
    p.add_argument("--phases", type=int)
    p.add_argument("--ci", type=float)
    p.add_argument("--cu", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ocquad)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--bind", default="127.0.0.1:8000")
    p.add_argument("--assets", default=None, help="static UI bundle directory")
    p.add_argument("--size-cap", dest="size_cap", type=int, default=2000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except KolepiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
