"""HTTP segmentation service for the interactive weight-tuning UI.

All endpoints live under /v1. Payload volumes/masks travel as base64-
encoded RVOL documents inside JSON. The service is stateless: the
dataset is loaded read-only at startup and every /segment request runs
an independent solver instance.
"""

from __future__ import annotations

import base64
import binascii
import time
from contextlib import asynccontextmanager
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from . import rvol
from .core import GridMismatchError, check_paired
from .evaluation import dice as dice_score
from .rimseg import LevelSetParams, rimseg
from .rvol import RvolFormatError
from .simulator import DatasetManifest, LesionPatch, load_patch
from .version import __version__


class ParamOverrides(BaseModel):
    mu: float | None = None
    v: float | None = None
    epsilon: float | None = None
    dt: float | None = None
    max_iters: int | None = None
    tol: float | None = None
    fidelity_exponent: int | None = None


class SegmentRequest(BaseModel):
    lesion_id: str | None = None
    volume_b64: str | None = None
    mask_b64: str | None = None
    w: float = Field(default=1.0, ge=0.0)
    params: ParamOverrides | None = None


class SegmentResponse(BaseModel):
    dims: list[int]
    high_mask_b64: str
    low_mask_b64: str
    c1: float
    c2: float
    c1_ppb: float
    c2_ppb: float
    iterations: int
    converged: bool
    degenerate: bool
    dice: float | None
    solver_ms: float


def _error(status: int, code: str, message: str, **extra):
    return HTTPException(status_code=status,
                         detail={"code": code, "message": message, **extra})


def create_app(dataset_dir: Path | str) -> FastAPI:
    dataset_dir = Path(dataset_dir)
    manifest = DatasetManifest.load(dataset_dir / "manifest.json")
    by_id = {e.lesion_id: e for e in manifest.entries}

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        # first solver call pays numba JIT cost; warm it so request
        # latency reflects steady state
        if manifest.entries:
            patch = get_patch(manifest.entries[0].lesion_id)
            rimseg(patch, params=LevelSetParams(max_iters=1, w=1.0))
        yield

    app = FastAPI(title="rimlab", version=__version__, lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])

    def get_patch(lesion_id: str) -> LesionPatch:
        entry = by_id.get(lesion_id)
        if entry is None:
            raise _error(404, "unknown_lesion", f"no lesion with id {lesion_id!r}",
                         lesion_id=lesion_id)
        return load_patch(manifest, entry, dataset_dir)

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "version": __version__}

    # all patches in a dataset share dims; read them once from the first
    patch_dims: list[int] | None = None
    if manifest.entries:
        patch_dims = list(
            load_patch(manifest, manifest.entries[0], dataset_dir).volume.dims)

    @app.get("/v1/lesions")
    def lesions():
        return [
            {
                "id": e.lesion_id,
                "label": e.label,
                "has_ground_truth": e.label == "rim+",
                "dims": patch_dims,
            }
            for e in manifest.entries
        ]

    @app.get("/v1/lesions/{lesion_id}")
    def lesion_detail(lesion_id: str):
        patch = get_patch(lesion_id)
        body = {
            "id": lesion_id,
            "label": patch.label,
            "dims": list(patch.volume.dims),
            "spacing": list(patch.volume.spacing),
            "has_ground_truth": patch.gt_rim_mask is not None,
            "volume_b64": base64.b64encode(rvol.volume_to_bytes(patch.volume)).decode(),
            "mask_b64": base64.b64encode(rvol.mask_to_bytes(patch.lesion_mask)).decode(),
        }
        if patch.gt_rim_mask is not None:
            body["gt_rim_b64"] = base64.b64encode(
                rvol.mask_to_bytes(patch.gt_rim_mask)).decode()
        return body

    def _decode_b64(field: str, text: str) -> bytes:
        try:
            return base64.b64decode(text, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise _error(422, "bad_payload", f"{field}: invalid base64: {exc}",
                         field=field)

    @app.post("/v1/segment", response_model=SegmentResponse)
    def segment(req: SegmentRequest):
        if req.lesion_id is not None:
            patch = get_patch(req.lesion_id)
        else:
            if not (req.volume_b64 and req.mask_b64):
                raise _error(422, "missing_input",
                             "provide lesion_id or volume_b64 + mask_b64")
            try:
                volume = rvol.volume_from_bytes(_decode_b64("volume_b64", req.volume_b64))
                mask = rvol.mask_from_bytes(_decode_b64("mask_b64", req.mask_b64))
                check_paired(volume, mask)
            except (RvolFormatError, GridMismatchError, ValueError) as exc:
                raise _error(422, "bad_payload", str(exc))
            patch = LesionPatch(volume=volume, lesion_mask=mask,
                                gt_rim_mask=None, label="unknown", spec=None)

        overrides = {k: v for k, v in (req.params.model_dump() if req.params else {}).items()
                     if v is not None}
        try:
            params = LevelSetParams(w=req.w, **overrides)
            params.validate()
        except (TypeError, ValueError) as exc:
            raise _error(422, "bad_params", str(exc))

        t0 = time.perf_counter()
        result = rimseg(patch, w=req.w, params=params)
        solver_ms = (time.perf_counter() - t0) * 1000.0

        d = None
        if patch.gt_rim_mask is not None:
            d = dice_score(result.high_mask, patch.gt_rim_mask)
        return SegmentResponse(
            dims=list(patch.volume.dims),
            high_mask_b64=base64.b64encode(rvol.mask_to_bytes(result.high_mask)).decode(),
            low_mask_b64=base64.b64encode(rvol.mask_to_bytes(result.low_mask)).decode(),
            c1=result.c1, c2=result.c2,
            c1_ppb=result.c1_ppb, c2_ppb=result.c2_ppb,
            iterations=result.iterations, converged=result.converged,
            degenerate=result.degenerate, dice=d, solver_ms=solver_ms,
        )

    return app
