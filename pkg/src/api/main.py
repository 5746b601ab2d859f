"""
FastAPI app serving the wire protocols over HTTP.

POST /execute runs a simulator (echo mode without one), POST /intervene is a
template-backed intervention engine, POST /similarity scores two texts, and
/api/runs exposes the run ledger.
"""

import json
import logging
import os
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from src.analysis.influence import get_metric
from src.analysis.intervene import InterventionEngine, TemplateEngine
from src.analysis.model import Problem
from src.db.ledger import RunLedger
from src.errors import NoDistinctCandidate
from src.pipeline.simulator import SimulatedPipeline, build_sim, load_sim_spec
from src.pipeline.stdio_server import handle

logger = logging.getLogger(__name__)


class ExecuteRequest(BaseModel):
    problem_id: str
    interventions: dict[str, str] = Field(default_factory=dict)
    run_seed: int = 0
    disabled: list[str] = Field(default_factory=list)
    pinned: list[str] = Field(default_factory=list)


class InterveneRequest(BaseModel):
    feature: str
    original: str
    problem: str = ""
    seed: int = 0
    prompt: Optional[str] = None


class SimilarityRequest(BaseModel):
    a: str
    b: str


def create_app(
    sim: Optional[SimulatedPipeline] = None,
    problems: Optional[dict[str, Problem]] = None,
    ledger: Optional[RunLedger] = None,
    ledger_path: Optional[str] = None,
    engine: Optional[InterventionEngine] = None,
    similarity: str = "jaccard",
) -> FastAPI:
    app = FastAPI(
        title="causescope",
        description="Reference HTTP endpoints for causal importance analysis",
        version="0.1.0",
    )
    app.state.sim = sim
    app.state.problems = problems or {}
    app.state.ledger = ledger
    app.state.engine = engine or TemplateEngine()
    app.state.metric = get_metric(similarity)

    @app.on_event("startup")
    def startup():
        if app.state.ledger is None and ledger_path:
            app.state.ledger = RunLedger(path=ledger_path)
        if app.state.ledger is not None:
            stale = app.state.ledger.interrupt_stale()
            if stale:
                logger.info(f"Marked {stale} stale runs as interrupted")

    @app.get("/api/health")
    def health():
        return {"status": "ok", "mode": "simulator" if app.state.sim else "echo"}

    @app.post("/execute")
    def execute(request: ExecuteRequest):
        return handle(request.model_dump(), app.state.sim, app.state.problems)

    @app.post("/intervene")
    def intervene(request: InterveneRequest):
        problem = Problem(id="remote", specification=request.problem)
        try:
            replacement = app.state.engine.generate(problem, request.feature, request.original, request.seed)
        except NoDistinctCandidate as e:
            raise HTTPException(status_code=422, detail=str(e))
        return {"replacement": replacement}

    @app.post("/similarity")
    def similarity_score(request: SimilarityRequest):
        return {"score": app.state.metric(request.a, request.b)}

    def _ledger() -> RunLedger:
        if app.state.ledger is None:
            raise HTTPException(status_code=503, detail="No run ledger configured")
        return app.state.ledger

    @app.get("/api/runs")
    def list_runs(limit: int = 20):
        return _ledger().list_runs(limit=limit)

    @app.get("/api/runs/{run_id}")
    def get_run(run_id: int):
        run = _ledger().get_run(run_id)
        if run is None:
            raise HTTPException(status_code=404, detail="Run not found")
        return run

    return app


def create_app_from_env() -> FastAPI:
    """App configured from CAUSESCOPE_SIM_SPEC, CAUSESCOPE_PROBLEMS and DATABASE_PATH."""
    sim = None
    problems = {}
    spec_path = os.environ.get("CAUSESCOPE_SIM_SPEC")
    if spec_path:
        sim = build_sim(load_sim_spec(spec_path))
        logger.info(f"Serving simulator from {spec_path}")
    problems_path = os.environ.get("CAUSESCOPE_PROBLEMS")
    if problems_path:
        with open(problems_path, encoding="utf-8") as fh:
            problems = {p.id: p for p in (Problem.from_dict(d) for d in json.load(fh))}
    return create_app(
        sim=sim,
        problems=problems,
        ledger_path=os.environ.get("DATABASE_PATH", "data/causescope.db"),
        similarity=os.environ.get("CAUSESCOPE_SIMILARITY", "jaccard"),
    )


app = create_app_from_env()
