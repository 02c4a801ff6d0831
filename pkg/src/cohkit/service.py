"""FastAPI inference service over a trained checkpoint.

Structured endpoints expose each task prediction with pydantic models.
POST /generate additionally implements the text-generation wire contract
({"prompt", "max_new_tokens", "temperature"} -> {"text"}), routing rendered
prompts back to the builtin model, so the toolkit's own external backend can
point at this service. Prompt routing relies on the template keywords;
discourse-relation prompts are not routable (the two units have no
delimiter) and return 422 — use /predict/drr instead.
"""

from __future__ import annotations

import re
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .corpus import (
    NLI_LABELS,
    CorpusError,
    IsrInstance,
    Paragraph,
    ReasoningInstance,
    Scale,
    ScoringInstance,
    SroInstance,
)
from .evaluation import (
    predict_isr,
    predict_reasoning,
    predict_scoring,
    predict_sro,
)
from .model import CoherenceModel
from .prompts import NLI_TARGETS, TEMPLATES

_SRO_PREFIX = "reorder: what is the order of the sentences so that the paragraph is coherent? "
_ISR_PREFIX = "relevance: what is the irrelevant sentence in the text? "
_NLI_PREFIX = "mnli: does this hypothesis contradict, entail, or neutral with the premise? hypothesis: "
_NPE_PREFIX = "coreference text: what are the preposition relations between "
_SCORE3_PREFIX = "GCDC coherence: what is the coherence score of the text (3 - high, 1 - low)? text: "
_SCORE5_PREFIX = "CoheSentia coherence: what is the coherence score of the text (5 - high, 1 - low)? title: "
_REASONING_RE = re.compile(
    r"^(Cohesion|Consistency|Relevance) reasoning: previous data: (.*) new sentence: (.*)\. "
    r"Task: is the new sentence (cohesive|consistent|relevant) in regard to the previous data\?"
)
_REASONING_CONDITION = {"Cohesion": "cohesive", "Consistency": "consistent", "Relevance": "relevant"}


class ServiceError(ValueError):
    pass


def _split_numbered(body: str, spaced: bool) -> list[str]:
    marker = r"sentence \d+: " if spaced else r"sentence\d+: "
    parts = re.split(marker, body)
    sentences = [p.strip() for p in parts if p.strip()]
    if not sentences:
        raise ServiceError("no sentences found in prompt")
    return sentences


def generate_text(model: CoherenceModel, prompt: str) -> str:
    """Answer a rendered prompt with the builtin model's prediction, in the
    task's target output format."""
    if prompt.startswith(_SRO_PREFIX):
        sentences = _split_numbered(prompt[len(_SRO_PREFIX) :], spaced=True)
        inst = SroInstance(
            shuffled=tuple(sentences), gold_positions=tuple(range(len(sentences)))
        )
        order = predict_sro(model, inst)
        return "[" + ", ".join(str(p + 1) for p in order) + "]"
    if prompt.startswith(_ISR_PREFIX):
        sentences = _split_numbered(prompt[len(_ISR_PREFIX) :], spaced=False)
        if len(sentences) < 2:
            raise ServiceError("irrelevant-sentence prompts need at least two sentences")
        inst = IsrInstance(sentences=tuple(sentences), irrelevant_index=0)
        return str(predict_isr(model, inst) + 1)
    if prompt.startswith(_NLI_PREFIX):
        rest = prompt[len(_NLI_PREFIX) :]
        hypothesis, sep, premise = rest.rpartition(" premise: ")
        if not sep:
            raise ServiceError("missing 'premise:' field")
        label = NLI_LABELS[model.predict("nli", (premise.strip(), hypothesis.strip()))]
        return NLI_TARGETS[label]
    if prompt.startswith(_NPE_PREFIX):
        rest = prompt[len(_NPE_PREFIX) :]
        pair_part, sep, _text = rest.partition("? text: ")
        if not sep:
            raise ServiceError("missing 'text:' field")
        np1, sep, np2 = pair_part.partition(" and ")
        if not sep:
            raise ServiceError("missing 'and' between NP mentions")
        idx = model.predict("npe", (np1.strip(), np2.strip()))
        return model.labels["npe"][idx]
    if prompt.startswith(_SCORE3_PREFIX):
        text = prompt[len(_SCORE3_PREFIX) :].strip()
        return str(model.predict("scoring_3", (text,)) + 1)
    if prompt.startswith(_SCORE5_PREFIX):
        rest = prompt[len(_SCORE5_PREFIX) :]
        _title, sep, text = rest.partition(" text: ")
        if not sep:
            raise ServiceError("missing 'text:' field")
        return str(model.predict("scoring_5", (text.strip(),)) + 1)
    match = _REASONING_RE.match(prompt)
    if match:
        condition = _REASONING_CONDITION[match.group(1)]
        previous, sentence = match.group(2), match.group(3)
        flag = bool(model.predict(f"reasoning_{condition}", (previous.strip(), sentence.strip())))
        return "Yes" if flag else "No"
    raise ServiceError(
        "prompt not routable; discourse-relation prompts need the structured /predict/drr endpoint"
    )


# -- request/response models -------------------------------------------------


class GenerateRequest(BaseModel):
    prompt: str
    max_new_tokens: int = Field(default=64, gt=0)
    temperature: float = Field(default=0.0, ge=0.0)


class GenerateResponse(BaseModel):
    text: str


class SroRequest(BaseModel):
    sentences: list[str] = Field(min_length=1)


class SroResponse(BaseModel):
    positions: list[int]  # 1-based position markers of the restored order


class IsrRequest(BaseModel):
    sentences: list[str] = Field(min_length=2)


class IsrResponse(BaseModel):
    index: int  # 0-based index of the sentence deemed irrelevant


class DrrRequest(BaseModel):
    du1: str
    du2: str


class DrrResponse(BaseModel):
    relation: str


class NliRequest(BaseModel):
    premise: str
    hypothesis: str


class NliResponse(BaseModel):
    label: str


class NpePairRequest(BaseModel):
    anchor: str
    complement: str


class NpePairResponse(BaseModel):
    preposition: str


class ScoreRequest(BaseModel):
    sentences: list[str] = Field(min_length=1)
    scale: Scale
    title: str | None = None


class ScoreResponse(BaseModel):
    score: int


class ReasonRequest(BaseModel):
    prefix: list[str] = Field(min_length=1)
    new_sentence: str


class ReasonResponse(BaseModel):
    cohesive: bool
    consistent: bool
    relevant: bool


class HealthResponse(BaseModel):
    status: str
    vocab_size: int
    heads: list[str]


def create_app(model: CoherenceModel | str | Path) -> FastAPI:
    if not isinstance(model, CoherenceModel):
        model = CoherenceModel.load(model)
    app = FastAPI(title="cohkit", version="0.1.0")
    app.state.model = model

    @app.exception_handler(CorpusError)
    def corpus_error(request, exc: CorpusError):
        # domain-invalid payloads (e.g. blank sentences) are client errors
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(
            status="ok", vocab_size=len(model.vocab), heads=sorted(model.head_specs)
        )

    @app.get("/templates")
    def templates() -> dict:
        return {"version": 1, "templates": TEMPLATES}

    @app.post("/generate", response_model=GenerateResponse)
    def generate(req: GenerateRequest) -> GenerateResponse:
        try:
            return GenerateResponse(text=generate_text(model, req.prompt))
        except ServiceError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/predict/sro", response_model=SroResponse)
    def sro(req: SroRequest) -> SroResponse:
        inst = SroInstance(
            shuffled=tuple(req.sentences), gold_positions=tuple(range(len(req.sentences)))
        )
        return SroResponse(positions=[p + 1 for p in predict_sro(model, inst)])

    @app.post("/predict/isr", response_model=IsrResponse)
    def isr(req: IsrRequest) -> IsrResponse:
        inst = IsrInstance(sentences=tuple(req.sentences), irrelevant_index=0)
        return IsrResponse(index=predict_isr(model, inst))

    @app.post("/predict/drr", response_model=DrrResponse)
    def drr(req: DrrRequest) -> DrrResponse:
        idx = model.predict("drr", (req.du1, req.du2))
        return DrrResponse(relation=model.labels["drr"][idx])

    @app.post("/predict/nli", response_model=NliResponse)
    def nli(req: NliRequest) -> NliResponse:
        return NliResponse(label=NLI_LABELS[model.predict("nli", (req.premise, req.hypothesis))])

    @app.post("/predict/npe", response_model=NpePairResponse)
    def npe(req: NpePairRequest) -> NpePairResponse:
        idx = model.predict("npe", (req.anchor, req.complement))
        return NpePairResponse(preposition=model.labels["npe"][idx])

    @app.post("/score", response_model=ScoreResponse)
    def score(req: ScoreRequest) -> ScoreResponse:
        paragraph = Paragraph(
            id="request", sentences=tuple(req.sentences), title=req.title
        )
        inst = ScoringInstance(paragraph=paragraph, scale=req.scale, gold_score=1)
        return ScoreResponse(score=predict_scoring(model, inst))

    @app.post("/reason", response_model=ReasonResponse)
    def reason(req: ReasonRequest) -> ReasonResponse:
        inst = ReasoningInstance(
            prefix=tuple(req.prefix), new_sentence=req.new_sentence, gold=(True, True, True)
        )
        flags = predict_reasoning(model, inst)
        return ReasonResponse(
            cohesive=flags[0], consistent=flags[1], relevant=flags[2]
        )

    return app
