# api/server.py (HTTP surface over the cbtest library)

import logging
from typing import Any, Dict

import numpy as np
import pendulum
from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.concurrency import run_in_threadpool

from cbtest import __version__
from cbtest.cli import parse_model, resolve_direction, run_test, snr_summary
from cbtest.config import configure_logging, get_settings
from cbtest.errors import CbtestError, NumericalError
from cbtest.montecarlo import SimConfig, simulate

logger = logging.getLogger("cbtest.api")

# --- Initialize FastAPI App ---
app = FastAPI(title="cbtest", version=__version__)


def _cors_origins() -> list:
    try:
        return list(get_settings().cors_origins)
    except CbtestError as e:
        logger.error("Falling back to no CORS origins: %s", e)
        return []


app.add_middleware(
    CORSMiddleware,
    allow_origins=_cors_origins(),
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


def _http_error(e: CbtestError) -> HTTPException:
    status = 422 if isinstance(e, NumericalError) else 400
    return HTTPException(status_code=status, detail=str(e))


async def _read_body(request: Request, required: tuple) -> Dict[str, Any]:
    try:
        data = await request.json()
    except Exception:
        raise HTTPException(status_code=400, detail="Invalid JSON in request body.")
    if not isinstance(data, dict):
        raise HTTPException(status_code=400, detail="Request body must be a JSON object.")
    missing = [key for key in required if data.get(key) is None]
    if missing:
        raise HTTPException(status_code=400, detail=f"Missing fields: {', '.join(missing)}")
    return data


def _int_field(data: Dict[str, Any], key: str) -> int:
    try:
        return int(data[key])
    except (TypeError, ValueError):
        raise HTTPException(status_code=400, detail=f"{key} must be an integer")


async def _run(fn, *args, **kwargs):
    """Run a blocking library call off the event loop with error mapping."""
    try:
        return await run_in_threadpool(fn, *args, **kwargs)
    except HTTPException:
        raise
    except CbtestError as e:
        raise _http_error(e)
    except (TypeError, ValueError) as e:
        raise HTTPException(status_code=400, detail=f"Invalid request: {str(e)}")
    except Exception as e:
        logger.exception("Unexpected failure in %s", getattr(fn, "__name__", fn))
        raise HTTPException(status_code=500, detail=f"Internal error: {str(e)}")


@app.on_event("startup")
async def _startup():
    try:
        configure_logging()
    except CbtestError as e:
        logger.error("Settings are invalid: %s", e)


@app.get("/")
async def root():
    return {"name": "cbtest", "version": __version__}


# --- Health check endpoint ---
@app.get("/api/health")
async def health_check():
    """Status plus the settings the service runs with"""
    try:
        settings = get_settings()
    except CbtestError as e:
        raise HTTPException(status_code=500, detail=f"Health check failed: {str(e)}")
    return {
        "status": "healthy",
        "timestamp": pendulum.now("UTC").to_iso8601_string(),
        "threads": settings.threads,
        "replications": settings.replications,
        "seed": settings.seed,
    }


@app.post("/api/test")
async def handle_test(request: Request):
    """
    Test colour-blind pairs.

    Request body:
    - pairs: list of [a, b] measurements (order within a pair is irrelevant)
    - statistic: ks-sym, linear, maxima or cross-prob
    - alt, kernel, model, reps, seed: as for the CLI
    """
    data = await _read_body(request, ("pairs", "statistic"))
    try:
        pairs = np.asarray(data["pairs"], dtype=float)
    except (TypeError, ValueError):
        raise HTTPException(status_code=400, detail="pairs must be a list of numeric [a, b] pairs")
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise HTTPException(status_code=400, detail="pairs must be a list of numeric [a, b] pairs")

    report = await _run(
        run_test, pairs[:, 0], pairs[:, 1], data["statistic"],
        alt=data.get("alt"), kernel=data.get("kernel"), model=data.get("model"),
        reps=data.get("reps"), seed=data.get("seed"), tail=data.get("tail"),
    )
    return report.to_dict()


@app.post("/api/snr")
async def handle_snr(request: Request):
    data = await _read_body(request, ("alt", "n", "variant"))
    return await _run(
        snr_summary, data["alt"], _int_field(data, "n"), data["variant"],
        epsilon=data.get("epsilon"), kernel=data.get("kernel"),
        reps=_int_field(data, "reps") if "reps" in data else None,
        seed=_int_field(data, "seed") if "seed" in data else None,
    )


@app.post("/api/simulate")
async def handle_simulate(request: Request):
    data = await _read_body(request, ("statistic", "model", "n", "reps", "seed"))
    n, reps, seed = (_int_field(data, key) for key in ("n", "reps", "seed"))

    def run():
        model = parse_model(data["model"], data.get("epsilon"))
        direction = resolve_direction(data["statistic"], data.get("alt"), data.get("kernel"), model)
        config = SimConfig(data["statistic"], n, reps, seed,
                           model, direction, tail=data.get("tail"))
        return simulate(config)

    table = await _run(run)
    return {
        "config": table.config.to_dict(),
        "values": table.values.tolist(),
        "probabilities": table.probabilities.tolist(),
    }
