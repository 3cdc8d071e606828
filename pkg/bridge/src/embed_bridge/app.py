"""The service: POST /embed and GET /healthz.

Wire contract: request `{"model": str, "input": [str]}`, response
`{"data": [{"index": int, "embedding": [float]}], "model": str, "dim": int}`
with indices covering 0..n-1 exactly and every vector unit-normalized
server-side. Oversized batches get 413; malformed bodies 400 with a message;
a model id other than the one loaded at startup is a 400 (switching models
requires a restart).
"""

from __future__ import annotations

import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from embed_bridge.encoders import Encoder

MAX_BATCH = 256


class EmbedRequest(BaseModel):
    model: str
    input: list[str]


def normalize_rows(raw: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = raw / safe
    for row in np.nonzero(norms.ravel() == 0.0)[0]:
        unit[row, 0] = 1.0
    return unit


def create_app(encoder: Encoder) -> FastAPI:
    app = FastAPI(title="scurank-embed-bridge")
    # inference is serialized: encoder backends are not assumed thread-safe,
    # and clients may not assume request ordering anyway
    lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors()[:1])})

    @app.get("/healthz")
    def healthz():
        return {"model": encoder.model_id, "dim": encoder.dim}

    @app.post("/embed")
    def embed(request: EmbedRequest):
        if len(request.input) > MAX_BATCH:
            return JSONResponse(
                status_code=413,
                content={"error": f"batch of {len(request.input)} exceeds {MAX_BATCH}"},
            )
        if request.model != encoder.model_id:
            return JSONResponse(
                status_code=400,
                content={
                    "error": f"model {request.model!r} not served; this bridge "
                    f"loaded {encoder.model_id!r}"
                },
            )
        if not request.input:
            return {"data": [], "model": encoder.model_id, "dim": encoder.dim}
        with lock:
            raw = encoder.encode(request.input)
        unit = normalize_rows(np.asarray(raw, dtype=np.float64))
        data = [
            {"index": i, "embedding": unit[i].tolist()} for i in range(len(request.input))
        ]
        return {"data": data, "model": encoder.model_id, "dim": encoder.dim}

    return app
