#!/usr/bin/env python3
"""End-to-end offline walkthrough: build a corpus, rank it, run the analyses.

Everything uses the offline extractor and hash encoder, so the run is fully
deterministic and needs no endpoints. Outputs land in --workdir.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from make_synthetic_corpus import build
from scurank.cli import main as scurank_main
from scurank.corpus import emit_corpus


def run(workdir: Path, n_docs: int, seed: int) -> None:
    workdir.mkdir(parents=True, exist_ok=True)
    docs_path = workdir / "docs.jsonl"
    emit_corpus(build(n_docs, seed), docs_path)
    offline = ["--extractor", "offline", "--encoder", "offline"]

    steps = [
        ["stats", "--in", str(docs_path)],
        ["extract", "--in", str(docs_path), "--out", str(workdir / "scus.jsonl"), *offline],
        [
            "rank",
            "--in", str(docs_path),
            "--scus", str(workdir / "scus.jsonl"),
            "--out", str(workdir / "ranked.jsonl"),
            "--debug-clusters", str(workdir / "clusters.jsonl"),
            *offline,
        ],
        [
            "stability",
            "--in", str(docs_path),
            "--runs", "5",
            "--shuffle",
            "--out", str(workdir / "stability.jsonl"),
            *offline,
        ],
        [
            "penalty-scan",
            "--in", str(docs_path),
            "--scus", str(workdir / "scus.jsonl"),
            "--out", str(workdir / "penalty_scan.jsonl"),
            *offline,
        ],
        [
            "abstractiveness",
            "--in", str(docs_path),
            "--source", "candidates",
            "--out", str(workdir / "abstractiveness.jsonl"),
        ],
        [
            "export-brio",
            "--in", str(docs_path),
            "--ranked", str(workdir / "ranked.jsonl"),
            "--out", str(workdir / "brio.jsonl"),
        ],
    ]
    for argv in steps:
        print(f"$ scurank {' '.join(argv)}")
        code = scurank_main(argv)
        if code != 0:
            raise SystemExit(code)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", type=Path, default=Path("demo-run"))
    parser.add_argument("--docs", type=int, default=20)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    run(args.workdir, args.docs, args.seed)


if __name__ == "__main__":
    main()
