"""Turning candidate summaries into content units.

The online path sends the versioned splitting prompt to a chat endpoint and
parses the '#'-separated reply; results are cached per (prompt version,
model, text) so reruns never hit the network twice. The offline path is a
deterministic rule-based splitter used by tests and reproducibility checks.
Duplicate segments within one candidate are kept on purpose: the summary
score sums over every extracted unit.
"""

from __future__ import annotations

import importlib.resources
import json
import logging
import re
from dataclasses import dataclass
from typing import Sequence

from scurank.cache import CacheKey, FileCache
from scurank.chat import ChatClient, ChatError, ChatRequest, messages
from scurank.corpus import CandidateSummary, SCURecord

logger = logging.getLogger(__name__)

PROMPT_VERSION = "v1"
SCU_SEPARATOR = "#"
GENERATION_PROMPT_KINDS = ("cnndm", "xsum")


class ExtractionError(RuntimeError):
    def __init__(self, message: str, doc_id: str = "", candidate_id: str = ""):
        self.doc_id = doc_id
        self.candidate_id = candidate_id
        super().__init__(message)


@dataclass(frozen=True)
class ExtractorConfig:
    model_id: str = "gpt-4o-mini"
    temperature: float = 0.0
    shots: int = 1
    prompt_version: str = PROMPT_VERSION
    max_attempts: int = 5
    backoff_base: float = 0.5

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.shots not in (0, 1, 3):
            raise ValueError("shots must be one of 0, 1, 3")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    @property
    def effective_prompt_version(self) -> str:
        return f"{self.prompt_version}/shots{self.shots}"


def load_prompt(name: str) -> str:
    return (
        importlib.resources.files("scurank.prompts").joinpath(f"{name}.txt").read_text("utf-8")
    )


def scu_prompt(shots: int = 1, prompt_version: str = PROMPT_VERSION) -> str:
    return load_prompt(f"scu_extract_{shots}shot_{prompt_version}")


def generation_prompt(kind: str, prompt_version: str = PROMPT_VERSION) -> str:
    if kind not in GENERATION_PROMPT_KINDS:
        raise ValueError(f"unknown generation prompt kind {kind!r}")
    return load_prompt(f"generate_{kind}_{prompt_version}")


def parse_scu_reply(reply: str) -> list[str]:
    """Split a model reply on '#', trim, drop empty segments, keep order."""
    return [segment.strip() for segment in reply.split(SCU_SEPARATOR) if segment.strip()]


def extract_scus(
    candidate: CandidateSummary,
    cfg: ExtractorConfig,
    cache: FileCache | None = None,
    client: ChatClient | None = None,
    doc_id: str = "",
) -> list[SCURecord]:
    """Content units of one candidate via the chat endpoint, cache-first."""
    key = CacheKey.for_text("scu", cfg.model_id, cfg.effective_prompt_version, candidate.text)
    segments: list[str] | None = None
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            segments = json.loads(hit.decode("utf-8"))
    if segments is None:
        if client is None:
            raise ExtractionError(
                "no chat client configured and no cache hit",
                doc_id=doc_id,
                candidate_id=candidate.candidate_id,
            )
        request = ChatRequest(
            model_id=cfg.model_id,
            messages=messages(
                ("system", scu_prompt(cfg.shots, cfg.prompt_version)),
                ("user", candidate.text),
            ),
            temperature=cfg.temperature,
        )
        try:
            reply = client.complete(request)
        except ChatError as exc:
            raise ExtractionError(
                f"extraction failed for candidate {candidate.candidate_id!r}"
                f" of document {doc_id!r}: {exc}",
                doc_id=doc_id,
                candidate_id=candidate.candidate_id,
            ) from exc
        segments = parse_scu_reply(reply.content)
        if cache is not None:
            cache.put(key, json.dumps(segments, ensure_ascii=False).encode("utf-8"))
    if not segments:
        logger.warning(
            "candidate %r of document %r produced no content units", candidate.candidate_id, doc_id
        )
        return []
    return [
        SCURecord(doc_id=doc_id, candidate_id=candidate.candidate_id, index=i, text=text)
        for i, text in enumerate(segments)
    ]


_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_CLAUSE_SPLIT = re.compile(r"\s*;\s*|,\s+(?=(?:and|but|or|nor|so|yet|for)\b)", re.IGNORECASE)


def split_offline(text: str) -> list[str]:
    """Rule-based decomposition: sentences at terminal punctuation, clauses at
    ';' and at commas introducing a coordinating conjunction."""
    segments = []
    for sentence in _SENTENCE_SPLIT.split(text):
        for clause in _CLAUSE_SPLIT.split(sentence):
            clause = clause.strip()
            if clause:
                segments.append(clause)
    return segments


def extract_scus_offline(candidate: CandidateSummary, doc_id: str = "") -> list[SCURecord]:
    """Deterministic extractor: byte-identical input gives byte-identical output."""
    return [
        SCURecord(doc_id=doc_id, candidate_id=candidate.candidate_id, index=i, text=text)
        for i, text in enumerate(split_offline(candidate.text))
    ]


@dataclass(frozen=True)
class GenerationFailure:
    model_id: str
    error: str


def generate_candidates(
    article: str,
    prompt_kind: str,
    models: Sequence[str],
    cfg: ExtractorConfig,
    client: ChatClient | None = None,
    cache: FileCache | None = None,
) -> tuple[list[CandidateSummary], list[GenerationFailure]]:
    """One candidate per model; per-model failures are reported, not fatal."""
    prompt = generation_prompt(prompt_kind, cfg.prompt_version)
    candidates: list[CandidateSummary] = []
    failures: list[GenerationFailure] = []
    used_ids: set[str] = set()
    for model in models:
        candidate_id = model
        suffix = 2
        while candidate_id in used_ids:
            candidate_id = f"{model}#{suffix}"
            suffix += 1
        used_ids.add(candidate_id)
        payload = f"{prompt}\n\n{article}"
        key = CacheKey.for_text(
            "generation", model, f"{cfg.prompt_version}/{prompt_kind}", payload
        )
        text: str | None = None
        if cache is not None:
            hit = cache.get(key)
            if hit is not None:
                text = hit.decode("utf-8")
        if text is None:
            if client is None:
                failures.append(GenerationFailure(model, "no chat client configured"))
                continue
            request = ChatRequest(
                model_id=model,
                messages=messages(("user", payload)),
                temperature=cfg.temperature,
            )
            try:
                text = client.complete(request).content
            except ChatError as exc:
                failures.append(GenerationFailure(model, str(exc)))
                continue
            if cache is not None:
                cache.put(key, text.encode("utf-8"))
        try:
            candidates.append(
                CandidateSummary(candidate_id=candidate_id, generator_id=model, text=text)
            )
        except ValueError as exc:
            failures.append(GenerationFailure(model, str(exc)))
    return candidates, failures


def extractor_for(
    kind: str,
    cfg: ExtractorConfig | None = None,
    cache: FileCache | None = None,
    client: ChatClient | None = None,
):
    """Build a ``(candidate, doc_id) -> [SCURecord]`` callable for a backend."""
    if kind == "offline":
        return extract_scus_offline
    if kind == "llm":
        llm_cfg = cfg or ExtractorConfig()

        def _extract(candidate: CandidateSummary, doc_id: str = "") -> list[SCURecord]:
            return extract_scus(candidate, llm_cfg, cache=cache, client=client, doc_id=doc_id)

        return _extract
    raise ValueError(f"unknown extractor kind {kind!r}")
