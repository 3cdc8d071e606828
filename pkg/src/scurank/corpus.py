"""Domain types and line-delimited corpus I/O.

One document per line. Candidate order is preserved exactly as read; unknown
fields on document and candidate records survive a load/emit round trip but
are otherwise ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence


class CorpusFormatError(ValueError):
    """Malformed or inconsistent corpus input, pointing at the offending line."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


def word_count(text: str) -> int:
    """Whitespace-delimited word count, shared by stats and scoring."""
    return len(text.split())


@dataclass(frozen=True)
class CandidateSummary:
    """One candidate summary, tagged with the model that produced it."""

    candidate_id: str
    generator_id: str
    text: str
    extra: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"candidate {self.candidate_id!r} has empty text")

    @property
    def token_count(self) -> int:
        return word_count(self.text)


@dataclass(frozen=True)
class Document:
    """A source article with its candidate summaries and optional references."""

    doc_id: str
    article: str
    candidates: tuple[CandidateSummary, ...]
    references: tuple[str, ...] = ()
    extra: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be nonempty")
        if len(self.references) > 3:
            raise ValueError(
                f"document {self.doc_id!r} carries {len(self.references)} references; at most 3"
            )
        seen = set()
        for cand in self.candidates:
            if cand.candidate_id in seen:
                raise ValueError(
                    f"duplicate candidate_id {cand.candidate_id!r} in document {self.doc_id!r}"
                )
            seen.add(cand.candidate_id)

    def candidate(self, candidate_id: str) -> CandidateSummary:
        for cand in self.candidates:
            if cand.candidate_id == candidate_id:
                return cand
        raise KeyError(candidate_id)


@dataclass(frozen=True)
class SCURecord:
    """One atomic content unit extracted from a candidate summary."""

    doc_id: str
    candidate_id: str
    index: int
    text: str

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("index must be nonnegative")
        if not self.text.strip():
            raise ValueError("SCU text must be nonempty after trimming")

    @property
    def key(self) -> tuple[str, int]:
        return (self.candidate_id, self.index)


@dataclass(frozen=True)
class CorpusStats:
    documents: int
    candidates: int
    references: int
    avg_article_words: float
    avg_summary_words: float


_DOC_KEYS = {"doc_id", "article", "references", "candidates"}
_CAND_KEYS = {"candidate_id", "generator_id", "text"}


def _parse_document(obj: dict[str, Any], line_no: int) -> Document:
    if not isinstance(obj, dict):
        raise CorpusFormatError("record is not a JSON object", line_no)
    for key in ("doc_id", "article", "candidates"):
        if key not in obj:
            raise CorpusFormatError(f"missing required field {key!r}", line_no)
    if not isinstance(obj["candidates"], list):
        raise CorpusFormatError('"candidates" must be a list', line_no)
    candidates = []
    for i, cand in enumerate(obj["candidates"]):
        if not isinstance(cand, dict):
            raise CorpusFormatError(f"candidate #{i} is not a JSON object", line_no)
        for key in _CAND_KEYS:
            if key not in cand:
                raise CorpusFormatError(f"candidate #{i} missing field {key!r}", line_no)
        try:
            candidates.append(
                CandidateSummary(
                    candidate_id=str(cand["candidate_id"]),
                    generator_id=str(cand["generator_id"]),
                    text=str(cand["text"]),
                    extra={k: v for k, v in cand.items() if k not in _CAND_KEYS},
                )
            )
        except ValueError as exc:
            raise CorpusFormatError(str(exc), line_no) from exc
    references = obj.get("references", [])
    if not isinstance(references, list) or not all(isinstance(r, str) for r in references):
        raise CorpusFormatError('"references" must be a list of strings', line_no)
    try:
        return Document(
            doc_id=str(obj["doc_id"]),
            article=str(obj["article"]),
            candidates=tuple(candidates),
            references=tuple(references),
            extra={k: v for k, v in obj.items() if k not in _DOC_KEYS},
        )
    except ValueError as exc:
        raise CorpusFormatError(str(exc), line_no) from exc


def load_corpus(path: str | Path, format: str = "candidates_jsonl") -> list[Document]:
    """Read documents in file order; candidate order is kept exactly as read."""
    if format != "candidates_jsonl":
        raise ValueError(f"unknown corpus format {format!r}")
    docs: list[Document] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON ({exc.msg})", line_no) from exc
            doc = _parse_document(obj, line_no)
            if doc.doc_id in seen_ids:
                raise CorpusFormatError(f"duplicate doc_id {doc.doc_id!r}", line_no)
            seen_ids.add(doc.doc_id)
            docs.append(doc)
    return docs


def document_to_record(doc: Document) -> dict[str, Any]:
    record: dict[str, Any] = {"doc_id": doc.doc_id, "article": doc.article}
    if doc.references:
        record["references"] = list(doc.references)
    record["candidates"] = [
        {
            "candidate_id": c.candidate_id,
            "generator_id": c.generator_id,
            "text": c.text,
            **c.extra,
        }
        for c in doc.candidates
    ]
    record.update(doc.extra)
    return record


def dump_jsonl_line(record: dict[str, Any]) -> str:
    """Canonical serialization: sorted keys, compact separators, raw unicode."""
    return json.dumps(record, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def emit_corpus(docs: Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for doc in docs:
            handle.write(dump_jsonl_line(document_to_record(doc)) + "\n")


def corpus_stats(corpus: Sequence[Document]) -> CorpusStats:
    """Counts and mean word lengths; means are 0 for the empty corpus."""
    n_docs = len(corpus)
    n_cands = sum(len(d.candidates) for d in corpus)
    n_refs = sum(len(d.references) for d in corpus)
    article_words = sum(word_count(d.article) for d in corpus)
    summary_words = sum(c.token_count for d in corpus for c in d.candidates)
    return CorpusStats(
        documents=n_docs,
        candidates=n_cands,
        references=n_refs,
        avg_article_words=article_words / n_docs if n_docs else 0.0,
        avg_summary_words=summary_words / n_cands if n_cands else 0.0,
    )


def load_scus(path: str | Path) -> dict[tuple[str, str], list[SCURecord]]:
    """Read `scus` records into a (doc_id, candidate_id) -> SCURecord list map."""
    out: dict[tuple[str, str], list[SCURecord]] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON ({exc.msg})", line_no) from exc
            for key in ("doc_id", "candidate_id", "scus"):
                if key not in obj:
                    raise CorpusFormatError(f"missing required field {key!r}", line_no)
            key = (str(obj["doc_id"]), str(obj["candidate_id"]))
            if key in out:
                raise CorpusFormatError(f"duplicate scus record for {key}", line_no)
            out[key] = [
                SCURecord(doc_id=key[0], candidate_id=key[1], index=i, text=str(t))
                for i, t in enumerate(obj["scus"])
            ]
    return out


def scus_to_record(doc_id: str, candidate_id: str, scus: Sequence[SCURecord]) -> dict[str, Any]:
    return {"doc_id": doc_id, "candidate_id": candidate_id, "scus": [s.text for s in scus]}
