"""HTTP service exposing the design pipeline stages."""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict

from . import __version__
from .errors import MomentDesignError
from .pipeline import (
    StageError,
    dump_sdp,
    exit_code,
    run_pipeline,
    stage_certify,
    stage_levelset,
    stage_recover,
    stage_solve,
)
from .presets import PRESET_DEFAULTS, PRESET_NAMES
from .schemas import SCHEMA_VERSION, LevelsetResponse, Payload, Problem, Result

app = FastAPI(title="momentdesign", version=__version__)


class RecoverRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    payload: Payload
    check: bool = False


class LevelsetRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    payload: Payload
    resolution: int | None = None


@app.exception_handler(StageError)
async def _stage_error(request, exc: StageError):
    return JSONResponse(
        status_code=422,
        content={"error": {"type": type(exc).__name__, "message": str(exc), "location": exc.location}},
    )


@app.exception_handler(MomentDesignError)
async def _design_error(request, exc: MomentDesignError):
    return JSONResponse(
        status_code=422,
        content={"error": {"type": type(exc).__name__, "message": str(exc), "location": None}},
    )


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__, "schema_version": SCHEMA_VERSION}


@app.get("/presets")
def presets():
    return {name: PRESET_DEFAULTS.get(name, {}) for name in PRESET_NAMES}


@app.post("/solve", response_model=Result)
def solve(payload: Payload):
    return stage_solve(payload)


@app.post("/recover", response_model=Result)
def recover(req: RecoverRequest):
    return stage_recover(req.payload, check=req.check)


@app.post("/certify", response_model=Result)
def certify(payload: Payload):
    out = stage_certify(payload)
    out.exit_code = exit_code(out)
    return out


@app.post("/levelset", response_model=LevelsetResponse)
def levelset(req: LevelsetRequest):
    out, csv = stage_levelset(req.payload, req.resolution)
    return LevelsetResponse(result=out, csv=csv)


@app.post("/pipeline", response_model=Result)
def pipeline(req: RecoverRequest):
    return run_pipeline(req.payload, check=req.check)


@app.post("/sdp")
def sdp(problem: Problem):
    return {"format": "sdpa-sparse", "text": dump_sdp(problem)}
