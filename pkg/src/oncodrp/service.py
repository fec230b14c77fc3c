"""HTTP service: validate a mutation profile, score the drug catalog and
return the top recommendations with cohort and dispersion evidence.

Everything heavy is loaded once at startup into an immutable snapshot
(model, catalog, cohort caches); request handlers only read it, so
identical requests produce identical payloads and nothing a request does
can mutate model state.

Endpoints: POST /api/v1/recommend, GET /api/v1/drugs, GET /api/v1/health,
GET /api/v1/model.
"""

from __future__ import annotations

import itertools
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, field_validator

from . import __version__
from .checkpoint import load_checkpoint
from .dataio import DrugCatalog, load_catalog, load_cohort_profiles
from .recommender import (DEFAULT_TOP_K, DISPERSION_IQR_THRESHOLD, CohortCache, ModelBundle,
                          ReferenceCohort, assemble_evidence, build_cohort_cache)
from .tokenizer import ANNOTATION_DIM, MutationEntry, MutationProfile, TokenizerError, load_panel

log = logging.getLogger("oncodrp.service")

ENV_PREFIX = "ONCODRP_"
ENV_KEYS = {
    "HOST": "host", "PORT": "port", "CHECKPOINT": "checkpoint_path",
    "CATALOG": "catalog_path", "PANEL": "panel_path",
    "MAX_MUTATIONS": "max_mutations", "LOG_LEVEL": "log_level",
}


class ServiceConfigError(ValueError):
    """Configuration invalid or referenced files missing at startup."""


@dataclass
class ServiceConfig:
    checkpoint_path: str
    catalog_path: str
    panel_path: str
    cohort_paths: dict[str, str] = field(default_factory=dict)  # cancer type -> TSV
    host: str = "127.0.0.1"
    port: int = 8000
    max_mutations: int = 512
    log_level: str = "INFO"


def load_config(path, env: dict | None = None) -> ServiceConfig:
    """JSON config file; ONCODRP_* environment variables override fields."""
    env = os.environ if env is None else env
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ServiceConfigError(f"cannot read service config {path}: {exc}") from exc
    known = {f for f in ServiceConfig.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ServiceConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    for env_key, field_name in ENV_KEYS.items():
        val = env.get(ENV_PREFIX + env_key)
        if val is not None:
            raw[field_name] = int(val) if field_name in ("port", "max_mutations") else val
    missing = [k for k in ("checkpoint_path", "catalog_path", "panel_path") if not raw.get(k)]
    if missing:
        raise ServiceConfigError(f"{path}: missing required keys {missing}")
    return ServiceConfig(**raw)


@dataclass
class ServiceState:
    """Read-only snapshot shared by all request handlers."""

    config: ServiceConfig
    bundle: ModelBundle
    catalog: DrugCatalog
    cohort_caches: dict[str, CohortCache]


def build_state(config: ServiceConfig) -> ServiceState:
    """Load and cross-validate everything; any failure aborts startup."""
    for label, p in [("checkpoint", config.checkpoint_path), ("catalog", config.catalog_path),
                     ("panel", config.panel_path)]:
        if not Path(p).exists():
            raise ServiceConfigError(f"{label} path does not exist: {p}")
    for tag, p in config.cohort_paths.items():
        if not Path(p).exists():
            raise ServiceConfigError(f"cohort path for {tag!r} does not exist: {p}")

    ckpt = load_checkpoint(config.checkpoint_path)
    bundle = ModelBundle.from_checkpoint(ckpt)
    catalog = load_catalog(config.catalog_path)
    panel = load_panel(config.panel_path)
    if tuple(panel) != bundle.gene_vocab.genes:
        raise ServiceConfigError(
            "panel file does not match the checkpoint vocabulary "
            f"({len(panel)} genes vs {len(bundle.gene_vocab.genes)})")

    caches = {}
    for tag, p in config.cohort_paths.items():
        profiles = load_cohort_profiles(p)
        cohort = ReferenceCohort(cohort_id=tag, cancer_type=tag, profiles=profiles)
        caches[tag] = build_cohort_cache(cohort, catalog, bundle)
        log.info("cohort %s cached: %d members", tag, len(profiles))
    return ServiceState(config, bundle, catalog, caches)


# --- wire schemas ---------------------------------------------------------------


class MutationIn(BaseModel):
    gene: str = Field(min_length=1)
    mutation: str = Field(min_length=1)
    annotations: list[int] | None = None

    @field_validator("annotations")
    @classmethod
    def _check_annotations(cls, v):
        if v is None:
            return v
        if len(v) != ANNOTATION_DIM:
            raise ValueError(f"annotation vector must have length {ANNOTATION_DIM}, got {len(v)}")
        if any(b not in (0, 1) for b in v):
            raise ValueError("annotation values must be 0 or 1")
        return v


class RecommendRequest(BaseModel):
    mutations: list[MutationIn]
    cancer_type: str | None = None
    cohort: str | None = None  # explicit cohort override


class CohortSummaryOut(BaseModel):
    min: float
    q1: float
    median: float
    q3: float
    max: float


class RecommendationOut(BaseModel):
    drug_id: str
    name: str
    probability: float
    rank: int
    robust_z: float | None
    degenerate_iqr: bool
    cohort_summary: CohortSummaryOut | None
    aux_link: str


class DispersionOut(BaseModel):
    iqr: float
    median: float
    low_confidence: bool
    threshold: float
    per_drug_z: dict[str, float | None]


class RecommendResponse(BaseModel):
    recommendations: list[RecommendationOut]
    dispersion: DispersionOut
    swarm: dict[str, float]
    model_version: str
    model_hash: str
    cohort_id: str | None
    flags: list[str]


def profile_from_document(doc) -> MutationProfile:
    """Validated profile from the JSON document shape used by the API."""
    req = RecommendRequest.model_validate(doc)
    return profile_from_request(req)


def profile_from_request(req: RecommendRequest) -> MutationProfile:
    entries = []
    for m in req.mutations:
        ann = tuple(m.annotations) if m.annotations is not None else None
        entries.append(MutationEntry(m.gene, m.mutation, ann))
    return MutationProfile(tuple(entries))


# --- application ------------------------------------------------------------------


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="drug response ranking service", version=__version__)
    app.state.snapshot = state
    request_counter = itertools.count(1)

    @app.middleware("http")
    async def _log_requests(request: Request, call_next):
        rid = next(request_counter)
        started = time.perf_counter()
        response = await call_next(request)
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        log.info("request %d: %s %s -> %d in %.1fms", rid, request.method,
                 request.url.path, response.status_code, elapsed_ms)
        return response

    @app.exception_handler(Exception)
    async def _internal(request: Request, exc: Exception):
        log.exception("request failed: %s %s", request.method, request.url.path)
        return JSONResponse(status_code=500, content={"detail": "internal error"})

    @app.get("/api/v1/health")
    def health():
        return {"status": "ok", "model_hash": state.bundle.checkpoint_hash,
                "cohorts": sorted(state.cohort_caches)}

    @app.get("/api/v1/model")
    def model_info():
        return {"version": __version__, "hash": state.bundle.checkpoint_hash,
                "encoder": state.bundle.model.config.to_dict(),
                "n_intervals": state.bundle.model.n_intervals,
                "n_drugs": len(state.catalog)}

    @app.get("/api/v1/drugs")
    def drugs():
        return [{"drug_id": d.drug_id, "name": d.name} for d in state.catalog]

    @app.post("/api/v1/recommend", response_model=RecommendResponse)
    def recommend(req: RecommendRequest):
        if not req.mutations:
            raise HTTPException(status_code=400, detail="no usable mutations in request")
        if len(req.mutations) > state.config.max_mutations:
            raise HTTPException(status_code=413,
                                detail=f"too many mutations (limit {state.config.max_mutations})")
        try:
            profile = profile_from_request(req)
        except TokenizerError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

        flags: list[str] = []
        cache = None
        wanted = req.cohort or req.cancer_type
        if wanted is not None:
            cache = state.cohort_caches.get(wanted)
        if cache is None:
            flags.append("no_reference_cohort")
        payload = assemble_evidence(profile, state.bundle, state.catalog, cache,
                                    k=DEFAULT_TOP_K,
                                    dispersion_threshold=DISPERSION_IQR_THRESHOLD)
        if payload.dispersion.low_confidence:
            flags.append("low_patient_dispersion")

        recs = [RecommendationOut(
            drug_id=r.drug_id, name=r.name, probability=r.probability, rank=r.rank,
            robust_z=r.robust_z, degenerate_iqr=r.degenerate_iqr,
            cohort_summary=CohortSummaryOut(**r.cohort_summary.to_dict())
            if r.cohort_summary else None,
            aux_link=r.aux_link) for r in payload.recommendations]
        return RecommendResponse(
            recommendations=recs,
            dispersion=DispersionOut(iqr=payload.dispersion.iqr, median=payload.dispersion.median,
                                     low_confidence=payload.dispersion.low_confidence,
                                     threshold=payload.dispersion.threshold,
                                     per_drug_z=payload.dispersion.per_drug_z),
            swarm=payload.all_scores,
            model_version=__version__,
            model_hash=state.bundle.checkpoint_hash,
            cohort_id=payload.cohort_id,
            flags=flags,
        )

    return app


def run_service(config: ServiceConfig) -> None:
    """Blocking single-process server; proxying and TLS live in front of it."""
    import uvicorn

    logging.basicConfig(level=config.log_level.upper())
    state = build_state(config)
    app = create_app(state)
    uvicorn.run(app, host=config.host, port=config.port, log_level=config.log_level.lower())
