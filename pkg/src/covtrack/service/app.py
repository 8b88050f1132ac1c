"""HTTP face of the simulator.

The endpoints run synchronously in the request handler; a long scenario
holds its request open until done. Configuration problems come back as
400, anything unexpected during a run as 500.
"""

from __future__ import annotations

import logging

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import (ConfigError, apply_overrides, config_from_dict,
                      scenario_preset)
from ..engine import Simulation
from ..runner import (capacity_table, partition_demo, run_batch, summarize,
                      write_artifacts)
from ..sensors import available_catalogs
from .schemas import (BatchRequest, BatchResponse, CapacityTableResponse,
                      HealthResponse, PartitionDemoRequest,
                      PartitionDemoResponse, RunRequest, RunResponse)

log = logging.getLogger(__name__)


def create_app() -> FastAPI:
    app = FastAPI(title="covtrack", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__,
                              catalogs=available_catalogs())

    @app.post("/runs", response_model=RunResponse)
    def runs(req: RunRequest) -> RunResponse:
        try:
            data = scenario_preset(req.preset) if req.preset else {}
            data = _merge(data, req.config)
            if req.overrides:
                data = apply_overrides(data, req.overrides)
            config = config_from_dict(data)
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        try:
            result = Simulation(config).run()
            if req.out_dir:
                summary = write_artifacts(result, req.out_dir)
            else:
                summary = summarize(result)
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except Exception as exc:  # simulation failure, not a client error
            log.exception("run failed")
            raise HTTPException(status_code=500, detail=str(exc))
        return RunResponse(summary=summary, out_dir=req.out_dir)

    @app.post("/batches", response_model=BatchResponse)
    def batches(req: BatchRequest) -> BatchResponse:
        try:
            report = run_batch({"base": req.base, "sweep": req.sweep},
                               req.out_dir)
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except Exception as exc:
            log.exception("batch failed")
            raise HTTPException(status_code=500, detail=str(exc))
        return BatchResponse(report=report, out_dir=req.out_dir)

    @app.get("/capacity-table", response_model=CapacityTableResponse)
    def capacity(catalog: str = "longrange") -> CapacityTableResponse:
        try:
            return CapacityTableResponse(**capacity_table(catalog))
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.post("/partition-demo", response_model=PartitionDemoResponse)
    def demo(req: PartitionDemoRequest) -> PartitionDemoResponse:
        try:
            out = partition_demo(req.method, n_sites=req.n_sites,
                                 seed=req.seed, grid=req.grid, size=req.size,
                                 include_owner=req.include_owner)
        except (ConfigError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return PartitionDemoResponse(**out)

    return app


def _merge(base: dict, extra: dict) -> dict:
    """Recursive dict merge, ``extra`` wins."""
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out
