"""FastAPI application exposing the embedding wire protocol."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

DEFAULT_BATCH_LIMIT = 256


class EmbedRequest(BaseModel):
    texts: list[str]
    normalize: bool = False


class EmbedResponse(BaseModel):
    model: str
    dim: int
    vectors: list[list[float]]


def create_app(encoder, batch_limit: int = DEFAULT_BATCH_LIMIT) -> FastAPI:
    app = FastAPI(title="embed-service", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc.errors()[:3])})

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "model": encoder.model_id, "dim": encoder.dim}

    @app.post("/v1/embed", response_model=EmbedResponse)
    def embed(request: EmbedRequest):
        if len(request.texts) > batch_limit:
            return JSONResponse(
                status_code=413,
                content={
                    "detail": f"batch of {len(request.texts)} exceeds limit {batch_limit}"
                },
            )
        try:
            vectors = encoder.encode(request.texts, normalize=request.normalize)
        except Exception as exc:  # surfaced as a 500 with the message
            return JSONResponse(
                status_code=500, content={"detail": f"inference failed: {exc}"}
            )
        return EmbedResponse(
            model=encoder.model_id,
            dim=encoder.dim,
            vectors=[[float(x) for x in row] for row in vectors],
        )

    return app
