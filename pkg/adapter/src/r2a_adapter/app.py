"""FastAPI application exposing the engine's wire protocol.

Endpoints, JSON over HTTP:

    POST /v1/embed_text    {"texts": [..]}                      -> {"dim", "embeddings"}
    POST /v1/embed_frames  {"video_id", "frames_path", "num_frames"} -> {"dim", "embeddings"}
    POST /v1/score         {"prompt", "mask_count", "candidates"}    -> {"log_probs"}
    POST /v1/count_tokens  {"text"}                             -> {"count"}
    GET  /health                                                -> {"status", "backend"}

The service is stateless between requests; batches above ``max_batch``
are rejected with 413.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .backends import Backend, BackendError, make_backend
from .config import AdapterConfig


class EmbedTextRequest(BaseModel):
    texts: list[str]


class EmbedFramesRequest(BaseModel):
    video_id: str
    frames_path: str
    num_frames: int = Field(ge=1)


class ScoreRequest(BaseModel):
    prompt: str
    mask_count: int = Field(default=1, ge=1)
    candidates: list[str]


class CountTokensRequest(BaseModel):
    text: str


def _rows(matrix) -> list[list[float]]:
    return [[float(x) for x in row] for row in matrix]


def create_app(config: AdapterConfig | None = None, backend: Backend | None = None) -> FastAPI:
    config = config or AdapterConfig()
    if backend is None:
        backend = make_backend(config)

    app = FastAPI(title="r2a encoder adapter")
    app.state.backend = backend
    app.state.config = config

    @app.exception_handler(BackendError)
    async def backend_error_handler(request, exc):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=422, content={"error": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "backend": backend.name}

    @app.post("/v1/embed_text")
    def embed_text(request: EmbedTextRequest):
        if len(request.texts) > config.max_batch:
            raise HTTPException(
                status_code=413,
                detail=f"batch of {len(request.texts)} exceeds max_batch {config.max_batch}",
            )
        matrix = backend.embed_texts(request.texts)
        dim = int(matrix.shape[1]) if matrix.size else config.mock_dim
        return {"dim": dim, "embeddings": _rows(matrix)}

    @app.post("/v1/embed_frames")
    def embed_frames(request: EmbedFramesRequest):
        if request.num_frames > config.max_batch:
            raise HTTPException(
                status_code=413,
                detail=f"{request.num_frames} frames exceeds max_batch {config.max_batch}",
            )
        matrix = backend.embed_frames(
            request.video_id, request.frames_path, request.num_frames
        )
        return {"dim": int(matrix.shape[1]), "embeddings": _rows(matrix)}

    @app.post("/v1/score")
    def score(request: ScoreRequest):
        if not request.candidates:
            raise HTTPException(status_code=400, detail="candidates must be non-empty")
        if len(request.candidates) > config.max_batch:
            raise HTTPException(
                status_code=413,
                detail=f"batch of {len(request.candidates)} exceeds max_batch {config.max_batch}",
            )
        return {
            "log_probs": backend.score(
                request.prompt, request.mask_count, request.candidates
            )
        }

    @app.post("/v1/count_tokens")
    def count_tokens(request: CountTokensRequest):
        return {"count": backend.count_tokens(request.text)}

    return app


def serve(config: AdapterConfig) -> None:
    """Run the adapter; aborts with a diagnostic if models fail to load."""
    import sys

    import uvicorn

    try:
        app = create_app(config)
    except BackendError as exc:
        print(f"startup aborted: {exc}", file=sys.stderr)
        raise SystemExit(1)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
