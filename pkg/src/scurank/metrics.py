"""Rank statistics and text metrics.

Everything here is definition-based and pure: tie-corrected Kendall tau,
Spearman rho over midranks, Pearson r, Krippendorff's alpha via the
coincidence-matrix procedure, ROUGE-1/2/L, the bidirectional content-unit
quality score, and greedy extractive-fragment coverage/density.

Text metrics tokenize by lowercasing and splitting on runs of non-alphanumeric
characters; no stemming, no stopword removal.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence


@dataclass(frozen=True)
class Ranking:
    """A 1-based ranking over candidate ids; equal ranks express ties."""

    items: tuple[str, ...]
    ranks: Mapping[str, int]

    def __post_init__(self):
        if set(self.items) != set(self.ranks):
            raise ValueError("ranks must cover exactly the item set")
        if self.items and min(self.ranks.values()) < 1:
            raise ValueError("ranks are 1-based")

    @classmethod
    def from_order(cls, order: Sequence[str]) -> Ranking:
        return cls(items=tuple(order), ranks={cid: i + 1 for i, cid in enumerate(order)})

    def vector(self, items: Sequence[str]) -> list[float]:
        return [float(self.ranks[i]) for i in items]


def _common_items(a: Ranking, b: Ranking) -> tuple[str, ...]:
    if set(a.items) != set(b.items):
        raise ValueError("rankings cover different item sets")
    return a.items


def kendall_tau_values(x: Sequence[float], y: Sequence[float]) -> float:
    """Tie-corrected (tau-b) correlation between two paired value sequences.

    Pairs tied in both sequences count toward neither denominator factor.
    Raises on a zero denominator (one sequence entirely tied).
    """
    if len(x) != len(y):
        raise ValueError("sequences must have equal length")
    n = len(x)
    concordant = discordant = ties_x_only = ties_y_only = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0 and dy == 0:
                continue
            if dx == 0:
                ties_x_only += 1
            elif dy == 0:
                ties_y_only += 1
            elif (dx > 0) == (dy > 0):
                concordant += 1
            else:
                discordant += 1
    denom = math.sqrt(
        (concordant + discordant + ties_x_only) * (concordant + discordant + ties_y_only)
    )
    if denom == 0:
        raise ValueError("kendall tau undefined: a sequence is entirely tied")
    return (concordant - discordant) / denom


def kendall_tau(a: Ranking, b: Ranking) -> float:
    items = _common_items(a, b)
    return kendall_tau_values(a.vector(items), b.vector(items))


def pearson_r(x: Sequence[float], y: Sequence[float]) -> float:
    if len(x) != len(y):
        raise ValueError("sequences must have equal length")
    n = len(x)
    if n == 0:
        raise ValueError("empty sequences")
    mean_x = sum(x) / n
    mean_y = sum(y) / n
    cov = sum((xi - mean_x) * (yi - mean_y) for xi, yi in zip(x, y))
    var_x = sum((xi - mean_x) ** 2 for xi in x)
    var_y = sum((yi - mean_y) ** 2 for yi in y)
    if var_x == 0 or var_y == 0:
        raise ValueError("pearson r undefined: zero variance")
    return cov / math.sqrt(var_x * var_y)


def midranks(values: Sequence[float]) -> list[float]:
    """Fractional ranks: tied values share the average of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman_rho(a: Ranking, b: Ranking) -> float:
    items = _common_items(a, b)
    return pearson_r(midranks(a.vector(items)), midranks(b.vector(items)))


def krippendorff_alpha(
    matrix: Sequence[Sequence[float | None]], level: str = "ordinal"
) -> float:
    """Inter-rater reliability over a raters x items matrix; None marks missing.

    alpha = 1 - D_o/D_e computed from the coincidence matrix. Ordinal distance
    uses the cumulative-frequency form; interval uses squared difference.
    """
    if level not in ("ordinal", "interval"):
        raise ValueError(f"unknown level {level!r}")
    if len(matrix) < 2:
        raise ValueError("need at least 2 raters")
    n_items = len(matrix[0])
    if n_items < 2:
        raise ValueError("need at least 2 items")
    if any(len(row) != n_items for row in matrix):
        raise ValueError("raters must rate the same item set")

    units = []
    for item in range(n_items):
        values = [row[item] for row in matrix if row[item] is not None]
        if len(values) > 1:
            units.append(values)
    if not units:
        raise ValueError("no item has two or more ratings")

    coincidence: dict[tuple[float, float], float] = {}
    for values in units:
        weight = 1.0 / (len(values) - 1)
        for i, c in enumerate(values):
            for j, k in enumerate(values):
                if i != j:
                    coincidence[(c, k)] = coincidence.get((c, k), 0.0) + weight

    categories = sorted({c for c, _ in coincidence})
    marginal = {c: sum(coincidence.get((c, k), 0.0) for k in categories) for c in categories}
    total = sum(marginal.values())

    def delta_sq(c: float, k: float) -> float:
        if level == "interval":
            return (c - k) ** 2
        lo, hi = min(c, k), max(c, k)
        cum = sum(marginal[g] for g in categories if lo <= g <= hi)
        return (cum - (marginal[c] + marginal[k]) / 2) ** 2

    observed = sum(w * delta_sq(c, k) for (c, k), w in coincidence.items())
    expected = sum(
        marginal[c] * marginal[k] * delta_sq(c, k) for c in categories for k in categories
    )
    if expected == 0:
        raise ValueError("krippendorff alpha undefined: zero expected disagreement")
    return 1.0 - (total - 1) * observed / expected


# ---------------------------------------------------------------------------
# Text metrics


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float
    order: str


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int) -> RougeScore:
    """Clipped n-gram multiset overlap; empty inputs give an all-zero score."""
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    cand = _ngrams(tokenize(candidate), n)
    ref = _ngrams(tokenize(reference), n)
    overlap = sum(min(count, ref[gram]) for gram, count in cand.items())
    total_cand = sum(cand.values())
    total_ref = sum(ref.values())
    precision = overlap / total_cand if total_cand else 0.0
    recall = overlap / total_ref if total_ref else 0.0
    return RougeScore(precision, recall, _f1(precision, recall), f"r{n}")


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for token in a:
        cur = [0]
        for j, other in enumerate(b, start=1):
            if token == other:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> RougeScore:
    cand = tokenize(candidate)
    ref = tokenize(reference)
    lcs = _lcs_length(cand, ref)
    precision = lcs / len(cand) if cand else 0.0
    recall = lcs / len(ref) if ref else 0.0
    return RougeScore(precision, recall, _f1(precision, recall), "rl")


def intrinsic_scu_eval(
    extracted: Sequence[str], human: Sequence[str]
) -> tuple[float, float]:
    """Bidirectional max ROUGE-1-F1 between extracted and human content units.

    Returns (R, P): R averages, over human units, the best F1 against any
    extracted unit; P averages the reverse direction.
    """
    if not extracted or not human:
        raise ValueError("both unit lists must be nonempty")
    recall_side = sum(
        max(rouge_n(e, h, 1).f1 for e in extracted) for h in human
    ) / len(human)
    precision_side = sum(
        max(rouge_n(e, h, 1).f1 for h in human) for e in extracted
    ) / len(extracted)
    return recall_side, precision_side


def coverage_density(summary: str, article: str) -> tuple[float, float]:
    """Greedy extractive-fragment statistics of a summary against its source.

    Scanning summary tokens left to right, each position takes the longest
    contiguous fragment also present in the article. coverage is the matched
    token fraction; density the mean squared fragment length per token.
    """
    s_tokens = tokenize(summary)
    if not s_tokens:
        raise ValueError("summary must be nonempty")
    a_tokens = tokenize(article)
    positions: dict[str, list[int]] = {}
    for idx, token in enumerate(a_tokens):
        positions.setdefault(token, []).append(idx)

    fragments: list[int] = []
    i = 0
    while i < len(s_tokens):
        best = 0
        for start in positions.get(s_tokens[i], ()):
            length = 0
            while (
                i + length < len(s_tokens)
                and start + length < len(a_tokens)
                and s_tokens[i + length] == a_tokens[start + length]
            ):
                length += 1
            best = max(best, length)
        if best > 0:
            fragments.append(best)
            i += best
        else:
            i += 1
    coverage = sum(fragments) / len(s_tokens)
    density = sum(f * f for f in fragments) / len(s_tokens)
    return coverage, density
