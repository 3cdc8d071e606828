#!/usr/bin/env python3
"""Generate a synthetic candidates corpus for offline experiments.

Documents get a pool of "fact" sentences; each candidate copies a few facts
verbatim and pads with filler, so facts shared by three or more candidates
form consensus clusters under the offline encoder. Useful for exercising
rank/stability/penalty-scan without any model endpoints.
"""

from __future__ import annotations

import argparse
import random

from scurank.corpus import CandidateSummary, Document, emit_corpus
from scurank.embedding import EncoderConfig
from scurank.extraction import extract_scus_offline
from scurank.scoring import rank_document

WORDS = (
    "river harbor granite meadow lantern orchard timber sparrow cobalt ember "
    "willow summit quarry parcel anchor beacon canyon drifting estuary fjord "
    "glacier hollow inlet juniper kestrel lagoon marsh nectar osprey prairie"
).split()


def sentence(rng: random.Random, n_words: int) -> str:
    body = " ".join(rng.choice(WORDS) for _ in range(n_words))
    return body[0].upper() + body[1:] + "."


def build(n_docs: int, seed: int, n_facts: int = 5) -> list[Document]:
    rng = random.Random(seed)
    encoder = EncoderConfig(backend="offline_hash", dimension=256)
    docs = []
    for d in range(n_docs):
        # retry until adjusted scores are strictly distinct: score ties break
        # on presentation order, which would blur shuffle-invariance demos
        for _ in range(50):
            facts = [sentence(rng, 6 + rng.randrange(4)) for _ in range(n_facts)]
            article = " ".join(facts) + " " + sentence(rng, 12)
            candidates = []
            for c in range(4 + rng.randrange(3)):
                shared = rng.sample(facts, 2 + rng.randrange(3))
                filler = [sentence(rng, 3 + rng.randrange(9)) for _ in range(rng.randrange(3))]
                mixed = shared + filler
                rng.shuffle(mixed)
                candidates.append(
                    CandidateSummary(
                        candidate_id=f"c{c}",
                        generator_id=f"model-{c}",
                        text=" ".join(mixed),
                    )
                )
            doc = Document(
                doc_id=f"doc-{d}",
                article=article,
                candidates=tuple(candidates),
                references=(facts[0] + " " + facts[1],),
            )
            scores = sorted(
                rank_document(doc, extract_scus_offline, encoder).scores.values()
            )
            if all(b - a > 1e-9 for a, b in zip(scores, scores[1:])):
                docs.append(doc)
                break
        else:
            raise RuntimeError(f"no tie-free document found for seed {seed}/{d}")
    return docs


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--docs", type=int, default=20)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--out", default="synthetic.jsonl")
    args = parser.parse_args()
    docs = build(args.docs, args.seed)
    emit_corpus(docs, args.out)
    print(f"wrote {len(docs)} documents to {args.out}")


if __name__ == "__main__":
    main()
