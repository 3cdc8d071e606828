"""From cluster assignment to per-candidate scores and a total order.

Each unit scores the size of its cluster (consensus count); a candidate's
raw score aggregates its unit scores, then a length penalty divides by a
function of the whitespace token count. Defaults — plain sum with a sqrt
penalty — are the headline configuration; the other transform/penalty
combinations exist for the length-bias scan.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

from scurank.cache import FileCache
from scurank.clustering import ClusterAssignment, HdbscanParams, cluster_scus
from scurank.corpus import CandidateSummary, Document, SCURecord
from scurank.embedding import EncoderConfig

logger = logging.getLogger(__name__)

SCORE_TRANSFORMS = ("sum", "sqrt_sum", "log_sum")
LENGTH_PENALTIES = ("none", "linear", "sqrt", "log")

ExtractFn = Callable[..., list[SCURecord]]


@dataclass(frozen=True)
class ScoringConfig:
    score_transform: str = "sum"
    length_penalty: str = "sqrt"
    tokenizer: str = "whitespace"

    def __post_init__(self):
        if self.score_transform not in SCORE_TRANSFORMS:
            raise ValueError(f"unknown score transform {self.score_transform!r}")
        if self.length_penalty not in LENGTH_PENALTIES:
            raise ValueError(f"unknown length penalty {self.length_penalty!r}")
        if self.tokenizer != "whitespace":
            raise ValueError(f"unknown tokenizer {self.tokenizer!r}")


@dataclass(frozen=True)
class ScoredSummary:
    candidate_id: str
    phi_values: tuple[int, ...]
    raw_score: float
    adjusted_score: float
    token_count: int


@dataclass(frozen=True)
class RankedSet:
    doc_id: str
    order: tuple[str, ...]
    scores: Mapping[str, float]
    rank_of: Mapping[str, int]


def phi(scu: SCURecord, assignment: ClusterAssignment) -> int:
    """Size of the cluster the unit landed in (>= 1 after promotion)."""
    if assignment.index_of is None:
        raise ValueError("assignment does not carry unit provenance")
    position = assignment.index_of.get(scu.key)
    if position is None:
        raise KeyError(f"unit {scu.key} not present in assignment")
    return assignment.cluster_sizes[assignment.labels[position]]


def transform_score(phi_sum: int, kind: str) -> float:
    if kind == "sum":
        return float(phi_sum)
    if kind == "sqrt_sum":
        return math.sqrt(phi_sum)
    if kind == "log_sum":
        return math.log(phi_sum + 1)
    raise ValueError(f"unknown score transform {kind!r}")


def length_penalty_divisor(token_count: int, kind: str) -> float:
    if kind == "none":
        return 1.0
    if kind == "linear":
        return float(token_count)
    if kind == "sqrt":
        return math.sqrt(token_count)
    if kind == "log":
        return math.log(token_count + 1)
    raise ValueError(f"unknown length penalty {kind!r}")


def score_summary(
    candidate: CandidateSummary,
    scus: Sequence[SCURecord],
    assignment: ClusterAssignment,
    cfg: ScoringConfig = ScoringConfig(),
) -> ScoredSummary:
    tokens = candidate.token_count
    if tokens < 1:
        raise ValueError(f"candidate {candidate.candidate_id!r} has zero tokens")
    if not scus:
        logger.warning(
            "candidate %r has no content units; scoring 0", candidate.candidate_id
        )
        return ScoredSummary(candidate.candidate_id, (), 0.0, 0.0, tokens)
    values = tuple(phi(s, assignment) for s in scus)
    raw = transform_score(sum(values), cfg.score_transform)
    adjusted = raw / length_penalty_divisor(tokens, cfg.length_penalty)
    return ScoredSummary(candidate.candidate_id, values, raw, adjusted, tokens)


def rank(scored: Sequence[ScoredSummary], doc_id: str = "") -> RankedSet:
    """Descending adjusted score; ties keep the input (candidate) order."""
    if not scored:
        raise ValueError("nothing to rank")
    ids = [s.candidate_id for s in scored]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate candidate ids in {doc_id!r}")
    if any(math.isnan(s.adjusted_score) for s in scored):
        raise ValueError("NaN adjusted score")
    order = tuple(
        s.candidate_id
        for s in sorted(
            scored, key=lambda s: (-s.adjusted_score, ids.index(s.candidate_id))
        )
    )
    return RankedSet(
        doc_id=doc_id,
        order=order,
        scores={s.candidate_id: s.adjusted_score for s in scored},
        rank_of={cid: i + 1 for i, cid in enumerate(order)},
    )


_EMPTY_ASSIGNMENT = ClusterAssignment(
    labels=(), cluster_sizes={}, raw_noise=frozenset(), index_of={}
)


def score_document(
    document: Document,
    scus_by_candidate: Mapping[str, Sequence[SCURecord]],
    assignment: ClusterAssignment | None,
    cfg: ScoringConfig = ScoringConfig(),
) -> list[ScoredSummary]:
    """Score every candidate against one shared assignment (None only when the
    whole document produced zero units)."""
    scored = []
    for candidate in document.candidates:
        scus = scus_by_candidate.get(candidate.candidate_id, ())
        if scus and assignment is None:
            raise ValueError("units present but no assignment given")
        scored.append(
            score_summary(
                candidate,
                scus,
                assignment if scus else _EMPTY_ASSIGNMENT,
                cfg,
            )
        )
    return scored


def extract_document(document: Document, extract: ExtractFn) -> dict[str, list[SCURecord]]:
    return {
        candidate.candidate_id: extract(candidate, doc_id=document.doc_id)
        for candidate in document.candidates
    }


def cluster_document(
    document: Document,
    scus_by_candidate: Mapping[str, Sequence[SCURecord]],
    encoder: EncoderConfig,
    params: HdbscanParams,
    cache: FileCache | None = None,
) -> ClusterAssignment | None:
    all_scus = [
        scu
        for candidate in document.candidates
        for scu in scus_by_candidate.get(candidate.candidate_id, ())
    ]
    if not all_scus:
        logger.warning("document %r produced no content units at all", document.doc_id)
        return None
    return cluster_scus(all_scus, encoder, params, cache)


def rank_document(
    document: Document,
    extract: ExtractFn,
    encoder: EncoderConfig = EncoderConfig(),
    params: HdbscanParams = HdbscanParams(),
    cfg: ScoringConfig = ScoringConfig(),
    cache: FileCache | None = None,
) -> RankedSet:
    """Full pipeline for one document; a pure function of the document when
    the extractor and encoder are deterministic."""
    if not document.candidates:
        raise ValueError(f"document {document.doc_id!r} has no candidates")
    scus_by_candidate = extract_document(document, extract)
    assignment = cluster_document(document, scus_by_candidate, encoder, params, cache)
    scored = score_document(document, scus_by_candidate, assignment, cfg)
    return rank(scored, doc_id=document.doc_id)


def ranked_record(ranked: RankedSet) -> dict[str, Any]:
    return {
        "doc_id": ranked.doc_id,
        "order": list(ranked.order),
        "scores": {cid: ranked.scores[cid] for cid in ranked.order},
    }


def brio_record(document: Document, ranked: RankedSet) -> dict[str, Any]:
    """Training-export shape: candidates ordered best to worst is the contract."""
    return {
        "article": document.article,
        "abstract": document.references[0] if document.references else "",
        "candidates": [document.candidate(cid).text for cid in ranked.order],
    }
