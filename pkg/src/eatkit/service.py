"""Local HTTP service exposing the pipeline for the companion web UI.

Endpoints mirror the library operations one-to-one; every computation the
UI can reach is also reachable from the CLI with identical results.  Long
SDP jobs run on a bounded worker pool and are addressed by the hash of
their request body, so resubmitting a request never recomputes.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor

from fastapi import FastAPI, HTTPException
from fastapi.responses import HTMLResponse, PlainTextResponse
from pydantic import BaseModel, Field

from .eat import DEFAULT_BETA_EXPONENTS
from .ingest import (IngestError, counts_to_behavior, expression_value_with_error,
                     parse_data_config, parse_data_files)
from .bell import BellParseError, parse_expression
from .persistence import (EdqDocument, SchemaError, counts_from_payload,
                          counts_to_payload, sweep_from_payload,
                          sweep_to_payload)
from .pipeline import MinTradeoffInfo, calculate_min_tradeoff
from .relaxations import InfeasibleTargets, RelaxationError

__all__ = ["create_app", "serve"]


class DataConfigRequest(BaseModel):
    config: dict


class ParseDataRequest(BaseModel):
    config: dict
    directory: str | None = None


class CertificateRequest(BaseModel):
    expressions: list[str]
    A_config: list[int]
    B_config: list[int]
    eber_data: dict | None = None
    confidence: float = 0.99
    derate_by_error_bar: bool = True


class MinTradeoffRequest(BaseModel):
    expressions: list[str]
    values: list[float]
    A_config: list[int]
    B_config: list[int]
    spot_setting: tuple[int, int]
    relaxation_level: int = 2
    m_radau: int = 8
    entropy_type: str = "min-entropy"
    use_case: str = "Randomness Generation"
    hab: dict = Field(default_factory=dict)
    setup_nickname: str = ""
    guess: str = "pair"


class RatesRequest(BaseModel):
    min_tradeoff: dict
    chunk_time_list: list[float]
    events_per_second_list: list[float]
    eps_s_list: list[float]
    p_omega_list: list[float]
    gamma_list: list[float]
    switch_delay: float = 0.0
    subtract_consumption: bool = False
    beta_exponent_max: int = DEFAULT_BETA_EXPONENTS[-1]


def _request_hash(kind: str, payload: dict) -> str:
    text = json.dumps({"kind": kind, "payload": payload}, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


class JobTable:
    """At-most-once execution per request hash; polling is side-effect free."""

    def __init__(self, workers: int):
        self._pool = ThreadPoolExecutor(max_workers=workers)
        self._lock = threading.Lock()
        self._jobs: dict[str, dict] = {}

    def submit(self, job_id: str, fn):
        with self._lock:
            if job_id in self._jobs:
                return self._jobs[job_id]["status"]
            self._jobs[job_id] = {"status": "running", "result": None,
                                  "error": None, "progress": ""}

        def run():
            try:
                result = fn(lambda s: self._progress(job_id, s))
                with self._lock:
                    self._jobs[job_id].update(status="done", result=result)
            except (InfeasibleTargets, RelaxationError, ValueError) as e:
                with self._lock:
                    self._jobs[job_id].update(
                        status="failed",
                        error={"code": type(e).__name__, "message": str(e)})

        self._pool.submit(run)
        return "running"

    def _progress(self, job_id: str, stage: str):
        with self._lock:
            if job_id in self._jobs:
                self._jobs[job_id]["progress"] = stage

    def get(self, job_id: str):
        with self._lock:
            return self._jobs.get(job_id)


def create_app(state_directory: str | None = None,
               workers: int | None = None) -> FastAPI:
    app = FastAPI(title="eatkit service")
    jobs = JobTable(workers or os.cpu_count() or 1)
    app.state.jobs = jobs
    app.state.state_directory = state_directory

    def fail(status: int, code: str, message: str):
        raise HTTPException(status_code=status,
                            detail={"code": code, "message": message})

    @app.post("/data-config")
    def post_data_config(req: DataConfigRequest):
        try:
            cfg = parse_data_config(json.dumps(req.config))
        except IngestError as e:
            fail(422, "invalid-data-config", str(e))
        return {"config": cfg.to_dict()}

    @app.post("/parse-data")
    def post_parse_data(req: ParseDataRequest):
        try:
            cfg = parse_data_config(json.dumps(req.config))
            counts = parse_data_files(cfg, directory=req.directory)
            behavior, events = counts_to_behavior(counts)
        except IngestError as e:
            fail(422, "ingest-error", str(e))
        return {
            "eber_data": counts_to_payload(counts),
            "events_per_second": events,
            "no_signaling_max_discrepancy": behavior.no_signaling.max_discrepancy,
        }

    @app.post("/certificate")
    def post_certificate(req: CertificateRequest):
        from .scenario import Scenario
        scenario = Scenario(tuple(req.A_config), tuple(req.B_config))
        out = []
        counts = None
        if req.eber_data is not None:
            try:
                counts = counts_from_payload(req.eber_data)
            except SchemaError as e:
                fail(422, "bad-eber-data", str(e))
        for text in req.expressions:
            try:
                expr = parse_expression(text, scenario)
            except BellParseError as e:
                fail(422, "bad-expression", f"{text!r}: {e}")
            if counts is None:
                out.append({"expression": str(expr), "value": None,
                            "half_width": None})
                continue
            value, half = expression_value_with_error(expr, counts,
                                                      req.confidence)
            target = value - half if req.derate_by_error_bar else value
            out.append({"expression": str(expr), "value": value,
                        "half_width": half, "target": target})
        return {"certificates": out}

    @app.post("/min-tradeoff")
    def post_min_tradeoff(req: MinTradeoffRequest):
        payload = req.model_dump()
        job_id = _request_hash("min-tradeoff", payload)

        def work(progress):
            info = calculate_min_tradeoff(
                req.expressions, req.values, req.A_config, req.B_config,
                tuple(req.spot_setting), relaxation_level=req.relaxation_level,
                m_radau=req.m_radau, entropy_type_str=req.entropy_type,
                use_case_str=req.use_case,
                hab_dict={tuple(int(v) for v in k.split(",")): float(v2)
                          for k, v2 in req.hab.items()},
                setup_nickname=req.setup_nickname, guess=req.guess,
                progress=progress)
            return {"min_tradeoff": json.loads(info.to_str())}

        status = jobs.submit(job_id, work)
        return {"job_id": job_id, "status": status}

    @app.post("/rates")
    def post_rates(req: RatesRequest):
        payload = req.model_dump()
        job_id = _request_hash("rates", payload)

        def work(progress):
            info = MinTradeoffInfo.from_str(json.dumps(req.min_tradeoff))
            result = info.calculate_eat_rates(
                req.chunk_time_list, req.events_per_second_list,
                req.eps_s_list, req.p_omega_list, req.gamma_list,
                switch_delay=req.switch_delay,
                subtract_consumption_for_test_rounds=req.subtract_consumption,
                beta_exponents=range(1, req.beta_exponent_max + 1))
            return {"sweep": sweep_to_payload(result)}

        status = jobs.submit(job_id, work)
        return {"job_id": job_id, "status": status}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        rec = jobs.get(job_id)
        if rec is None:
            fail(404, "unknown-job", f"no job with id {job_id!r}")
        out = {"status": rec["status"], "progress": rec["progress"]}
        if rec["status"] == "done":
            out["result"] = rec["result"]
        if rec["status"] == "failed":
            out["error"] = rec["error"]
        return out

    @app.get("/rates/{job_id}/grid")
    def get_grid(job_id: str, format: str = "json"):
        rec = jobs.get(job_id)
        if rec is None or rec["status"] != "done" or "sweep" not in rec["result"]:
            fail(404, "unknown-job", f"no finished sweep with id {job_id!r}")
        sweep = sweep_from_payload(rec["result"]["sweep"])
        if format == "csv":
            return PlainTextResponse(sweep.to_csv(), media_type="text/csv")
        return json.loads(sweep.to_json())

    @app.get("/", response_class=HTMLResponse)
    def index():
        ui = os.path.join(os.path.dirname(__file__), "ui", "index.html")
        if os.path.exists(ui):
            with open(ui, "r", encoding="utf-8") as fh:
                return fh.read()
        return "<html><body>eatkit service is running.</body></html>"

    @app.get("/ui/app.js")
    def ui_js():
        path = os.path.join(os.path.dirname(__file__), "ui", "app.js")
        if not os.path.exists(path):
            fail(404, "no-ui", "web UI assets not built")
        with open(path, "r", encoding="utf-8") as fh:
            return PlainTextResponse(fh.read(),
                                     media_type="application/javascript")

    return app


def serve(bind_address: str = "127.0.0.1", port: int = 8741,
          state_directory: str | None = None):
    """Run the service until interrupted."""
    import uvicorn
    uvicorn.run(create_app(state_directory), host=bind_address, port=port)
