"""FastAPI application exposing the scorer wire protocol.

Configuration comes from the environment (overridable via
:func:`create_app` arguments):

* ``SCORER_MODE`` — ``mock`` (default) or ``model``
* ``SCORER_MODEL_PATH`` — checkpoint path or hub id for model mode
* ``SCORER_ENTAIL_INDEX`` — logit index of the entailment class (default 1)
* ``SCORER_MAX_BATCH`` — request size cap (default 256)
"""

from __future__ import annotations

import os

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ValidationError


class ScoreInput(BaseModel):
    premise: str
    hypothesis: str


class ScoreRequest(BaseModel):
    inputs: list[ScoreInput]
    return_tokens: bool = False


def create_app(
    mode: str | None = None,
    model_path: str | None = None,
    max_batch: int | None = None,
) -> FastAPI:
    mode = mode or os.environ.get("SCORER_MODE", "mock")
    model_path = model_path or os.environ.get("SCORER_MODEL_PATH", "")
    max_batch = max_batch or int(os.environ.get("SCORER_MAX_BATCH", "256"))

    app = FastAPI(title="scorer-service")
    app.state.backend = None
    app.state.load_error = ""

    if mode == "mock":
        from .backends import MockBackend

        app.state.backend = MockBackend()
    elif mode == "model":
        try:
            from .backends import TransformerBackend

            app.state.backend = TransformerBackend(
                model_path,
                entailment_index=int(os.environ.get("SCORER_ENTAIL_INDEX", "1")),
            )
        except Exception as exc:  # surface as 503, the service stays up
            app.state.load_error = str(exc)
    else:
        raise ValueError(f"unknown mode {mode!r}; expected 'mock' or 'model'")

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/health")
    def health():
        backend = app.state.backend
        if backend is None:
            return JSONResponse(
                status_code=503,
                content={"status": "unavailable", "model_id": "", "mode": "model",
                         "detail": app.state.load_error},
            )
        return {"status": "ok", "model_id": backend.model_id, "mode": backend.mode}

    @app.post("/score")
    async def score(request: Request):
        backend = app.state.backend
        if backend is None:
            return JSONResponse(status_code=503, content={"detail": "model not loaded"})
        try:
            parsed = ScoreRequest.model_validate_json(await request.body())
        except ValidationError as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        if len(parsed.inputs) > max_batch:
            return JSONResponse(
                status_code=400,
                content={"detail": f"batch of {len(parsed.inputs)} exceeds cap {max_batch}"},
            )
        pairs = [(item.premise, item.hypothesis) for item in parsed.inputs]
        body = {"probs": backend.score(pairs) if pairs else []}
        if parsed.return_tokens:
            body["tokens"] = [backend.tokenize(h) for _, h in pairs]
        return body

    return app


app = create_app()


def serve() -> None:
    import uvicorn

    uvicorn.run(
        "scorer_service.app:app",
        host=os.environ.get("SCORER_HOST", "127.0.0.1"),
        port=int(os.environ.get("SCORER_PORT", "8008")),
    )
