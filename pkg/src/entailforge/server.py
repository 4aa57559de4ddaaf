"""FastAPI service exposing the model wire protocol over the mock models.

Serves the three roles the pipeline's http-kind backends talk to:

* ``POST /generate``  {"prompt", "temperature", "max_tokens", "seed"} -> {"text"}
* ``POST /classify``  {"premise", "hypothesis"} -> {"probs": {label: p}}
* ``POST /embed``     {"texts", "dim"} -> {"vectors": [[float]]}

Responses are pure functions of the request, so pipeline runs against this
service fingerprint identically to in-process mock runs. The mock generator
ignores decoding parameters (it is rule-based at temperature 0); a real
backend implementing the same contract may honor them.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import mockmodels
from .backends import DEFAULT_EMBED_DIM
from .errors import ConfigError
from .promptgen import parse_prompt_target


class GenerateRequest(BaseModel):
    prompt: str
    temperature: float = 0.0
    max_tokens: int = Field(default=64, ge=1)
    seed: int = 0


class GenerateResponse(BaseModel):
    text: str


class ClassifyRequest(BaseModel):
    premise: str
    hypothesis: str


class ClassifyResponse(BaseModel):
    probs: dict[str, float]


class EmbedRequest(BaseModel):
    texts: list[str]
    dim: int = Field(default=DEFAULT_EMBED_DIM, ge=1)


class EmbedResponse(BaseModel):
    vectors: list[list[float]]


def create_app() -> FastAPI:
    app = FastAPI(title="entailforge mock model service", version="0.1.0")

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/generate", response_model=GenerateResponse)
    def generate(req: GenerateRequest) -> GenerateResponse:
        try:
            premise, label = parse_prompt_target(req.prompt)
        except ConfigError as e:
            raise HTTPException(status_code=400, detail=str(e)) from None
        return GenerateResponse(text=mockmodels.generate_hypothesis(premise, label))

    @app.post("/classify", response_model=ClassifyResponse)
    def classify(req: ClassifyRequest) -> ClassifyResponse:
        if not req.premise.strip() or not req.hypothesis.strip():
            raise HTTPException(status_code=400, detail="empty premise or hypothesis")
        probs = mockmodels.classify_probs(req.premise, req.hypothesis)
        return ClassifyResponse(
            probs={
                "entailment": probs[0],
                "contradiction": probs[1],
                "neutral": probs[2],
            }
        )

    @app.post("/embed", response_model=EmbedResponse)
    def embed(req: EmbedRequest) -> EmbedResponse:
        if any(not t.strip() for t in req.texts):
            raise HTTPException(status_code=400, detail="empty text in batch")
        vectors = [mockmodels.embed_text(t, req.dim).tolist() for t in req.texts]
        return EmbedResponse(vectors=vectors)

    return app


app = create_app()
