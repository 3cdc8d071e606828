"""Shared fixtures: deterministic synthetic corpora with known structure."""

from __future__ import annotations

import random

import pytest

from scurank.corpus import CandidateSummary, Document
from scurank.embedding import EncoderConfig
from scurank.extraction import extract_scus_offline
from scurank.scoring import rank_document

WORDS = (
    "river harbor granite meadow lantern orchard timber sparrow cobalt ember "
    "willow summit quarry parcel anchor beacon canyon drifting estuary fjord "
    "glacier hollow inlet juniper kestrel lagoon marsh nectar osprey prairie"
).split()


def _sentence(rng: random.Random, n_words: int) -> str:
    body = " ".join(rng.choice(WORDS) for _ in range(n_words))
    return body[0].upper() + body[1:] + "."


def build_synthetic_corpus(n_docs: int = 20, seed: int = 7) -> list[Document]:
    """Documents whose candidates share sentence-level facts.

    Facts shared verbatim by 3+ candidates embed identically and cluster;
    per-candidate filler sentences stay singletons. Candidate lengths and
    fact mixes are varied until every document has strictly distinct
    adjusted scores, so rankings are tie-free by construction.
    """
    rng = random.Random(seed)
    docs = []
    for d in range(n_docs):
        for attempt in range(50):
            facts = [_sentence(rng, 6 + rng.randrange(4)) for _ in range(5)]
            article = " ".join(facts) + " " + _sentence(rng, 12)
            candidates = []
            n_cands = 4 + rng.randrange(3)
            for c in range(n_cands):
                shared = rng.sample(facts, 2 + rng.randrange(3))
                filler = [_sentence(rng, 3 + rng.randrange(9)) for _ in range(rng.randrange(3))]
                sentences = shared + filler
                rng.shuffle(sentences)
                candidates.append(
                    CandidateSummary(
                        candidate_id=f"c{c}",
                        generator_id=f"model-{c}",
                        text=" ".join(sentences),
                    )
                )
            doc = Document(doc_id=f"doc-{d}", article=article, candidates=tuple(candidates))
            ranked = rank_document(doc, extract_scus_offline, offline_encoder())
            scores = sorted(ranked.scores.values())
            if all(b - a > 1e-9 for a, b in zip(scores, scores[1:])):
                docs.append(doc)
                break
        else:
            raise AssertionError(f"could not build a tie-free document for seed {seed}/{d}")
    return docs


def offline_encoder(dimension: int = 256, seed: int = 0) -> EncoderConfig:
    """Matches the CLI's offline backend settings (dimension capped at 256)."""
    return EncoderConfig(backend="offline_hash", dimension=dimension, seed=seed)


@pytest.fixture(scope="session")
def synthetic_corpus() -> list[Document]:
    return build_synthetic_corpus(n_docs=20, seed=7)


@pytest.fixture()
def tiny_doc() -> Document:
    return Document(
        doc_id="tiny",
        article="The mayor opened the new bridge on Monday. Residents cheered.",
        candidates=(
            CandidateSummary("a", "m1", "The mayor opened the new bridge."),
            CandidateSummary("b", "m2", "Residents cheered at the opening."),
        ),
        references=("The mayor opened a bridge.",),
    )
