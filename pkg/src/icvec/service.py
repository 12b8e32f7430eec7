"""HTTP front end: the experiment runners behind a FastAPI service.

One POST endpoint per experiment takes a scenario document and returns the
CSV bodies plus the JSON summary.  Results are deterministic in the
scenario, so clients may cache on the request body.
"""

from __future__ import annotations

import time

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel

from . import __version__
from .experiments import run_experiment
from .scenarios import ScenarioError, list_presets, load_preset, scenario_to_dict

__all__ = ["create_app", "app", "RunResponse"]


class RunResponse(BaseModel):
    experiment: str
    runtime_s: float
    summary: dict
    files: dict[str, str]


class HealthResponse(BaseModel):
    status: str
    version: str


def create_app() -> FastAPI:
    app = FastAPI(title="icvec simulation service", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.get("/presets")
    def presets():
        return {name: scenario_to_dict(load_preset(name)) for name in list_presets()}

    @app.get("/presets/{name}")
    def preset(name: str):
        try:
            return scenario_to_dict(load_preset(name))
        except ScenarioError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.post("/run/{experiment}", response_model=RunResponse)
    def run(experiment: str, scenario: dict,
            threads: int = Query(default=1, ge=1, le=64)):
        if experiment not in ("chanest", "mud", "throughput", "convergence"):
            raise HTTPException(status_code=404,
                                detail=f"unknown experiment {experiment!r}")
        declared = scenario.get("experiment")
        if declared is not None and declared != experiment:
            raise HTTPException(
                status_code=422,
                detail=f"scenario declares {declared!r} but was posted to "
                       f"/run/{experiment}")
        scenario = {**scenario, "experiment": experiment}
        start = time.monotonic()
        try:
            result = run_experiment(scenario, threads=threads)
        except ScenarioError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except Exception as exc:
            raise HTTPException(status_code=500,
                                detail=f"simulation failed: {exc}") from exc
        return RunResponse(experiment=result.experiment,
                           runtime_s=time.monotonic() - start,
                           summary=result.summary, files=result.files)

    return app


app = create_app()
