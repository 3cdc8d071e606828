"""Consensus-importance ranking of candidate summaries from their content units.

The pipeline: split each candidate summary into atomic content units, embed
them, cluster the embeddings per document with HDBSCAN (noise promoted to
singletons), score each candidate by the sizes of the clusters its units land
in, normalise by sqrt(token count), and sort. Everything downstream of the
unit extractor is deterministic, which is the point: the ranking does not
depend on the order candidates are presented in.
"""

__version__ = "0.1.0"

from scurank.corpus import CandidateSummary, Document, SCURecord, load_corpus
from scurank.scoring import RankedSet, ScoringConfig, rank_document

__all__ = [
    "CandidateSummary",
    "Document",
    "SCURecord",
    "RankedSet",
    "ScoringConfig",
    "load_corpus",
    "rank_document",
    "__version__",
]
