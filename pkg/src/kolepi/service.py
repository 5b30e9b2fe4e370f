"""HTTP/JSON facade over training, prediction, simulation, and optimization.

The registry is in-memory: every successful training publishes an
immutable model under a fresh id.  All endpoints are deterministic
functions of (registry, request body); randomness only enters through
seeds carried in the bodies themselves.  Training runs are serialized so
reported fit times stay meaningful under concurrent clients.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import controls as ctl
from . import datagen, evaluation, kol, optcontrol
from . import kernels as ker
from .errors import ConditioningError, KolepiError

DEFAULT_SIZE_CAP = 2000


@dataclass
class ModelRecord:
    model: kol.KolModel
    scenario: datagen.ScenarioConfig
    created: float
    fit_seconds: float
    training_p_err: float


@dataclass
class ModelRegistry:
    """Id-keyed store of published (immutable) models."""

    _records: dict[str, ModelRecord] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)
    _counter: int = 0

    def publish(self, record: ModelRecord) -> str:
        with self._lock:
            self._counter += 1
            model_id = f"m-{self._counter:04d}"
            self._records[model_id] = record
            return model_id

    def get(self, model_id: str) -> ModelRecord | None:
        with self._lock:
            return self._records.get(model_id)

    def ids(self) -> list[str]:
        with self._lock:
            return sorted(self._records)


def _error(status: int, code: str, message: str, context: dict | None = None) -> JSONResponse:
    body = {"code": code, "message": message}
    if context:
        body["context"] = context
    return JSONResponse(status_code=status, content=body)


def _grid_doc(grid) -> dict:
    return {"t_star": grid.t_star, "dt": grid.dt, "n": grid.n}


def _model_meta(model_id: str, rec: ModelRecord) -> dict:
    return {
        "id": model_id,
        "mode": rec.model.mode,
        "kernel": ker.spec_to_json(rec.model.kernel),
        "ridge": rec.model.ridge,
        "positivity": rec.model.positivity,
        "grid": _grid_doc(rec.model.grid),
        "compartments": list(rec.scenario.model.compartments),
        "infectious_index": rec.scenario.model.infectious_index,
        "scenario": datagen.scenario_to_json(rec.scenario),
        "train_size": rec.model.n_train,
        "u_train_range": [float(rec.model.u_train.min()), float(rec.model.u_train.max())],
        "created": rec.created,
        "fit_seconds": rec.fit_seconds,
        "training_p_err": rec.training_p_err,
    }


def _resolve_samples(body: dict, grid) -> np.ndarray:
    if "samples" in body and "control" in body:
        raise KolepiError("provide either 'samples' or 'control', not both")
    if "samples" in body:
        try:
            samples = np.asarray(body["samples"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise KolepiError(f"'samples' must be a numeric array: {exc}") from exc
        if samples.shape != (grid.n,):
            raise KolepiError(f"'samples' must have length {grid.n}, got {samples.shape}")
        return samples
    if "control" in body:
        spec = ctl.spec_from_json(body["control"])
        return ctl.discretize(spec, grid).samples
    raise KolepiError("request body must carry 'samples' or 'control'")


def create_app(size_cap: int = DEFAULT_SIZE_CAP, assets_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="kolepi", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )
    registry = ModelRegistry()
    train_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def _on_validation(request: Request, exc: RequestValidationError):
        return _error(400, "invalid_body", "request body failed validation", {"detail": str(exc)})

    @app.exception_handler(ConditioningError)
    async def _on_conditioning(request: Request, exc: ConditioningError):
        return _error(422, "conditioning", str(exc))

    @app.exception_handler(KolepiError)
    async def _on_kolepi(request: Request, exc: KolepiError):
        return _error(400, "invalid_request", str(exc))

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/models")
    def list_models():
        out = []
        for model_id in registry.ids():
            rec = registry.get(model_id)
            out.append(_model_meta(model_id, rec))
        return {"models": out}

    @app.get("/models/{model_id}")
    def get_model(model_id: str):
        rec = registry.get(model_id)
        if rec is None:
            return _error(404, "unknown_model", f"no model with id {model_id!r}")
        return _model_meta(model_id, rec)

    @app.post("/models")
    def train_model(body: dict):
        for key in ("scenario", "kernel", "mode"):
            if key not in body:
                raise KolepiError(f"training request is missing {key!r}")
        unknown = set(body) - {"scenario", "kernel", "mode", "ridge", "positivity"}
        if unknown:
            raise KolepiError(f"unknown keys in training request: {sorted(unknown)}")
        scenario = datagen.scenario_from_json(body["scenario"])
        if scenario.train_size > size_cap:
            return _error(413, "too_large",
                          f"train_size {scenario.train_size} exceeds the synchronous cap {size_cap}")
        kernel = ker.spec_from_json(body["kernel"])
        mode = body["mode"]
        ridge = body.get("ridge", kol.DEFAULT_RIDGE)
        with train_lock:
            t0 = time.perf_counter()
            train = datagen.generate(scenario, split="train")
            ts = datagen.to_training_set(train, mode)
            model = kol.fit(ts, kernel, ridge=ridge, positivity=body.get("positivity"))
            fit_seconds = time.perf_counter() - t0
        preds = np.stack([kol.predict_samples(model, u).values for u in train.controls])
        report = evaluation.prediction_error(preds, train.trajectories)
        rec = ModelRecord(model=model, scenario=scenario, created=time.time(),
                          fit_seconds=fit_seconds, training_p_err=report.aggregate)
        model_id = registry.publish(rec)
        return {"id": model_id, "fit_seconds": fit_seconds, "training_p_err": report.aggregate,
                "grid": _grid_doc(model.grid)}

    @app.post("/models/{model_id}/predict")
    def predict(model_id: str, body: dict):
        rec = registry.get(model_id)
        if rec is None:
            return _error(404, "unknown_model", f"no model with id {model_id!r}")
        samples = _resolve_samples(body, rec.model.grid)
        pred = kol.predict_samples(rec.model, samples)
        return {
            "grid": _grid_doc(rec.model.grid),
            "times": rec.model.grid.points.tolist(),
            "compartments": list(rec.scenario.model.compartments),
            "values": pred.values.tolist(),
            "derivative": pred.raw_derivative.tolist() if pred.raw_derivative is not None else None,
        }

    @app.post("/simulate")
    def simulate(body: dict):
        if "scenario" not in body:
            raise KolepiError("simulate request is missing 'scenario'")
        unknown = set(body) - {"scenario", "samples", "control"}
        if unknown:
            raise KolepiError(f"unknown keys in simulate request: {sorted(unknown)}")
        scenario = datagen.scenario_from_json(body["scenario"])
        provider = optcontrol.TrueOdeProvider(
            scenario.model, scenario.params, np.asarray(scenario.x0), scenario.grid,
            scenario.resolved_substeps(),
        )
        samples = _resolve_samples(body, scenario.grid)
        traj = provider.trajectory(samples)
        return {
            "grid": _grid_doc(scenario.grid),
            "times": scenario.grid.points.tolist(),
            "compartments": list(scenario.model.compartments),
            "values": traj.tolist(),
            "derivative": None,
        }

    @app.post("/models/{model_id}/optimize")
    def optimize(model_id: str, body: dict):
        rec = registry.get(model_id)
        if rec is None:
            return _error(404, "unknown_model", f"no model with id {model_id!r}")
        if ("quad" in body) == ("eradication" in body):
            raise KolepiError("provide exactly one of 'quad' or 'eradication'")
        unknown = set(body) - {"quad", "eradication", "cross_evaluate"}
        if unknown:
            raise KolepiError(f"unknown keys in optimize request: {sorted(unknown)}")
        provider = optcontrol.SurrogateProvider(
            rec.model, infectious_index=rec.scenario.model.infectious_index)
        truth = optcontrol.TrueOdeProvider(
            rec.scenario.model, rec.scenario.params, np.asarray(rec.scenario.x0),
            rec.scenario.grid, rec.scenario.resolved_substeps())

        if "eradication" in body:
            spec = dict(body["eradication"])
            unknown = set(spec) - {"u_max", "eta", "tau_step"}
            if unknown:
                raise KolepiError(f"unknown keys in eradication config: {sorted(unknown)}")
            cfg = optcontrol.EradicationConfig(**spec)
            sweep = optcontrol.min_eradication(provider, cfg)
            return {
                "u_max": cfg.u_max, "eta": cfg.eta,
                "tau_star": sweep.tau_star, "te_star": sweep.te_star, "s_star": sweep.s_star,
                "te_at_zero": sweep.te_at_zero,
                "provider": sweep.provider,
            }

        spec = dict(body["quad"])
        seed = spec.pop("seed", 0)
        unknown = set(spec) - {"c_i", "c_u", "n_phases", "u_ub", "multistart", "maxiter", "ftol"}
        if unknown:
            raise KolepiError(f"unknown keys in quad config: {sorted(unknown)}")
        cfg = optcontrol.QuadConfig(**spec)
        result = optcontrol.optimize_quadratic(provider, cfg, seed=seed)
        payload = {
            "levels": result.levels.tolist(),
            "objective": result.objective,
            "iterations": result.iterations,
            "n_evals": result.n_evals,
            "provider": result.provider,
            "converged": result.converged,
            "objective_true": None,
        }
        if body.get("cross_evaluate"):
            payload["objective_true"] = optcontrol.cross_evaluate(result.levels, truth, cfg)
        if not result.converged:
            return JSONResponse(status_code=409, content=payload)
        return payload

    if assets_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=assets_dir, html=True), name="ui")

    return app
