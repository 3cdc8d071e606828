"""Hierarchical density clustering of content-unit embeddings, per document.

The classic pipeline over a dense distance matrix: core distances from the
k-th nearest other point, mutual reachability, a Prim minimum spanning tree,
single-linkage condensation with a minimum cluster size, excess-of-mass
selection with lambda = 1/distance, a distance-threshold merge that folds
clusters born below ``cluster_selection_epsilon`` into their ancestors, and
finally promotion of every noise point to its own singleton cluster so each
unit participates in scoring.

Selection details worth knowing:

* The hierarchy root competes in excess-of-mass like any other cluster, so a
  uniformly dense document collapses to one cluster instead of all-noise.
* When the root ends up the *sole* selected cluster, a point belongs to it
  only if its departure lambda clears 1/epsilon (or, at epsilon = 0, the
  largest departure lambda from the root). Everything below that threshold is
  noise, which is what keeps mutually distant points from being glued into
  one fake consensus cluster.

Everything is deterministic: ties in edge ordering break on
(weight, smaller endpoint, larger endpoint).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from scurank.cache import FileCache
from scurank.corpus import SCURecord
from scurank.embedding import EncoderConfig, encode_batch, pairwise_distances

LAMBDA_GUARD = 1e-12

NOISE = -1


@dataclass(frozen=True)
class HdbscanParams:
    min_cluster_size: int = 2
    min_samples: int = 2
    cluster_selection_epsilon: float = 0.15
    selection_method: str = "eom"

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ValueError("min_cluster_size must be >= 2")
        if self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")
        if self.cluster_selection_epsilon < 0:
            raise ValueError("cluster_selection_epsilon must be >= 0")
        if self.selection_method != "eom":
            raise ValueError("only excess-of-mass selection is implemented")


@dataclass(frozen=True)
class CondensedEdge:
    """Child's membership interval inside parent: from the parent's birth
    lambda until the child's departure lambda."""

    parent: int
    child: int
    lambda_birth: float
    lambda_death: float
    child_size: int
    child_is_cluster: bool


@dataclass(frozen=True)
class CondensedTree:
    n_points: int
    edges: tuple[CondensedEdge, ...]
    stability: Mapping[int, float]
    birth_lambda: Mapping[int, float]
    root: int | None


@dataclass(frozen=True)
class ClusterAssignment:
    """Partition of one document's units; ``labels`` may contain -1 (noise)
    before promotion and is total afterwards."""

    labels: tuple[int, ...]
    cluster_sizes: Mapping[int, int]
    raw_noise: frozenset[int]
    doc_id: str | None = None
    index_of: Mapping[tuple[str, int], int] | None = field(default=None, compare=False)
    tree: CondensedTree | None = field(default=None, compare=False, repr=False)
    # when set, tree point ids refer to this reordering of the input units
    canonical_order: tuple[int, ...] | None = field(default=None, compare=False, repr=False)

    @property
    def n_points(self) -> int:
        return len(self.labels)

    def partition(self) -> frozenset[frozenset[int]]:
        """The labelling as a set of point-index sets (noise points singleton)."""
        groups: dict[int, set[int]] = defaultdict(set)
        singles = []
        for i, label in enumerate(self.labels):
            if label == NOISE:
                singles.append(frozenset([i]))
            else:
                groups[label].add(i)
        return frozenset([frozenset(g) for g in groups.values()] + singles)


def core_distances(dist: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance from each point to its min_samples-th nearest *other* point.

    When fewer than min_samples other points exist, falls back to the max
    distance from the point (0 for a lone point).
    """
    if min_samples < 1:
        raise ValueError("min_samples must be >= 1")
    n = dist.shape[0]
    core = np.zeros(n, dtype=np.float64)
    for i in range(n):
        others = np.sort(np.delete(dist[i], i))
        if others.size == 0:
            core[i] = 0.0
        elif others.size < min_samples:
            core[i] = float(others[-1])
        else:
            core[i] = float(others[min_samples - 1])
    return core


def mutual_reachability(dist: np.ndarray, core: np.ndarray) -> np.ndarray:
    """max(core(a), core(b), d(a, b)) off-diagonal, zero diagonal."""
    if dist.shape[0] != core.shape[0]:
        raise ValueError("distance matrix and core array disagree on size")
    reach = np.maximum(dist, np.maximum(core[:, None], core[None, :]))
    np.fill_diagonal(reach, 0.0)
    return reach


def mst(reach: np.ndarray) -> list[tuple[int, int, float]]:
    """Prim's minimum spanning tree over the dense matrix; n-1 edges."""
    n = reach.shape[0]
    if n <= 1:
        return []
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = reach[0].astype(np.float64).copy()
    best[0] = np.inf
    source = np.zeros(n, dtype=np.int64)
    edges: list[tuple[int, int, float]] = []
    for _ in range(n - 1):
        candidate = np.where(in_tree, np.inf, best)
        v = int(np.argmin(candidate))
        edges.append((int(source[v]), v, float(best[v])))
        in_tree[v] = True
        closer = (~in_tree) & (reach[v] < best)
        best[closer] = reach[v][closer]
        source[closer] = v
    return edges


def _single_linkage(
    edges: Sequence[tuple[int, int, float]], n_points: int
) -> list[tuple[int, int, float, int]]:
    """Merge tree from MST edges in ascending weight order.

    Returns one (left, right, weight, size) node per merge; node ids run from
    n_points upward, points are 0..n_points-1.
    """
    order = sorted(edges, key=lambda e: (e[2], min(e[0], e[1]), max(e[0], e[1])))
    parent = list(range(n_points))
    top = list(range(n_points))
    size = [1] * n_points

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    nodes: list[tuple[int, int, float, int]] = []
    for a, b, weight in order:
        ra, rb = find(a), find(b)
        if ra == rb:
            raise ValueError("input edges do not form a spanning tree")
        merged = n_points + len(nodes)
        nodes.append((top[ra], top[rb], weight, size[ra] + size[rb]))
        parent[rb] = ra
        top[ra] = merged
        size[ra] += size[rb]
    return nodes


def _leaf_points(
    linkage: Sequence[tuple[int, int, float, int]], n_points: int, node: int
) -> list[int]:
    stack, points = [node], []
    while stack:
        cur = stack.pop()
        if cur < n_points:
            points.append(cur)
        else:
            left, right, _, _ = linkage[cur - n_points]
            stack.append(right)
            stack.append(left)
    return points


def build_condensed_tree(
    linkage: Sequence[tuple[int, int, float, int]],
    n_points: int,
    min_cluster_size: int,
) -> CondensedTree:
    """Prune the merge tree: a split whose smaller side is below
    min_cluster_size sheds those points from the surviving cluster instead of
    spawning a new one. Stability of a cluster sums (lambda_leave -
    lambda_birth) over its members, lambda = 1/max(distance, guard)."""
    if n_points <= 1:
        return CondensedTree(n_points=n_points, edges=(), stability={}, birth_lambda={}, root=None)

    def node_size(node: int) -> int:
        return 1 if node < n_points else linkage[node - n_points][3]

    root = n_points
    birth: dict[int, float] = {root: 0.0}
    edges: list[CondensedEdge] = []
    next_id = root + 1
    stack = [(n_points + len(linkage) - 1, root)]
    while stack:
        node, cluster = stack.pop()
        left, right, weight, _ = linkage[node - n_points]
        lam = 1.0 / max(weight, LAMBDA_GUARD)
        sides = ((left, node_size(left)), (right, node_size(right)))
        if all(sz >= min_cluster_size for _, sz in sides):
            for child_node, child_size in sides:
                child_id = next_id
                next_id += 1
                birth[child_id] = lam
                edges.append(
                    CondensedEdge(cluster, child_id, birth[cluster], lam, child_size, True)
                )
                stack.append((child_node, child_id))
        else:
            for child_node, child_size in sides:
                if child_size >= min_cluster_size:
                    stack.append((child_node, cluster))
                else:
                    for point in _leaf_points(linkage, n_points, child_node):
                        edges.append(
                            CondensedEdge(cluster, point, birth[cluster], lam, 1, False)
                        )
    stability = {cid: 0.0 for cid in birth}
    for edge in edges:
        stability[edge.parent] += (edge.lambda_death - edge.lambda_birth) * edge.child_size
    return CondensedTree(
        n_points=n_points,
        edges=tuple(edges),
        stability=stability,
        birth_lambda=birth,
        root=root,
    )


def _cluster_children(tree: CondensedTree) -> dict[int, list[int]]:
    children: dict[int, list[int]] = defaultdict(list)
    for edge in tree.edges:
        if edge.child_is_cluster:
            children[edge.parent].append(edge.child)
    return children


def _descendants(children_of: Mapping[int, list[int]], cluster: int) -> set[int]:
    out: set[int] = set()
    stack = list(children_of.get(cluster, ()))
    while stack:
        cur = stack.pop()
        out.add(cur)
        stack.extend(children_of.get(cur, ()))
    return out


def _eom_select(tree: CondensedTree) -> set[int]:
    """Keep a cluster when its own stability is at least the total selected
    stability of its descendants; otherwise the descendants win."""
    children_of = _cluster_children(tree)
    selected_stability = dict(tree.stability)
    is_selected = {cid: True for cid in tree.stability}
    for cid in sorted(tree.stability, reverse=True):
        kids = children_of.get(cid, [])
        if not kids:
            continue
        subtree = sum(selected_stability[k] for k in kids)
        if subtree > selected_stability[cid]:
            is_selected[cid] = False
            selected_stability[cid] = subtree
        else:
            for descendant in _descendants(children_of, cid):
                is_selected[descendant] = False
    return {cid for cid, flag in is_selected.items() if flag}


def _birth_distance(tree: CondensedTree, cluster: int) -> float:
    return 1.0 / max(tree.birth_lambda[cluster], LAMBDA_GUARD)


def _epsilon_merge(selected: set[int], tree: CondensedTree, epsilon: float) -> set[int]:
    """Replace clusters born closer than epsilon by the first ancestor whose
    birth distance reaches epsilon (the root always qualifies)."""
    if epsilon <= 0:
        return set(selected)
    parent_of = {e.child: e.parent for e in tree.edges if e.child_is_cluster}
    children_of = _cluster_children(tree)
    merged: set[int] = set()
    absorbed: set[int] = set()
    for cid in sorted(selected):
        if _birth_distance(tree, cid) >= epsilon:
            merged.add(cid)
        elif cid not in absorbed:
            node = cid
            while node != tree.root and _birth_distance(tree, node) < epsilon:
                node = parent_of[node]
            merged.add(node)
            absorbed |= _descendants(children_of, node)
    return merged


def _label_points(tree: CondensedTree, selected: set[int], epsilon: float) -> list[int]:
    labels = [NOISE] * tree.n_points
    if not selected:
        return labels
    parent_of = {e.child: e.parent for e in tree.edges if e.child_is_cluster}
    root_is_sole = selected == {tree.root}
    gate = 0.0
    if root_is_sole:
        if epsilon > 0:
            gate = 1.0 / epsilon
        else:
            gate = max(e.lambda_death for e in tree.edges if e.parent == tree.root)
    for edge in tree.edges:
        if edge.child_is_cluster:
            continue
        node: int | None = edge.parent
        while node is not None and node not in selected:
            node = parent_of.get(node)
        if node is None:
            continue
        if node == tree.root and root_is_sole and edge.lambda_death < gate:
            continue
        labels[edge.child] = node
    return labels


def _densify(
    labels: Sequence[int],
    doc_id: str | None,
    index_of: Mapping[tuple[str, int], int] | None,
    tree: CondensedTree | None,
) -> ClusterAssignment:
    remap: dict[int, int] = {}
    dense: list[int] = []
    for label in labels:
        if label == NOISE:
            dense.append(NOISE)
            continue
        if label not in remap:
            remap[label] = len(remap)
        dense.append(remap[label])
    sizes: dict[int, int] = defaultdict(int)
    for label in dense:
        if label != NOISE:
            sizes[label] += 1
    return ClusterAssignment(
        labels=tuple(dense),
        cluster_sizes=dict(sizes),
        raw_noise=frozenset(i for i, label in enumerate(dense) if label == NOISE),
        doc_id=doc_id,
        index_of=index_of,
        tree=tree,
    )


def condense_and_select(
    mst_edges: Sequence[tuple[int, int, float]],
    params: HdbscanParams,
    n_points: int | None = None,
    doc_id: str | None = None,
    index_of: Mapping[tuple[str, int], int] | None = None,
) -> ClusterAssignment:
    """Pre-promotion assignment: labels with -1 for noise, dense cluster ids
    (first-appearance order) otherwise."""
    n = len(mst_edges) + 1 if n_points is None else n_points
    if n < 1:
        raise ValueError("need at least one point")
    linkage = _single_linkage(mst_edges, n)
    tree = build_condensed_tree(linkage, n, params.min_cluster_size)
    if tree.root is None:
        labels: list[int] = [NOISE] * n
    else:
        selected = _eom_select(tree)
        selected = _epsilon_merge(selected, tree, params.cluster_selection_epsilon)
        labels = _label_points(tree, selected, params.cluster_selection_epsilon)
    return _densify(labels, doc_id, index_of, tree)


def promote_noise(assignment: ClusterAssignment) -> ClusterAssignment:
    """Every noise point becomes its own fresh singleton cluster."""
    if not assignment.raw_noise:
        return assignment
    next_id = max(assignment.cluster_sizes, default=-1) + 1
    labels = list(assignment.labels)
    sizes = dict(assignment.cluster_sizes)
    for i in sorted(assignment.raw_noise):
        labels[i] = next_id
        sizes[next_id] = 1
        next_id += 1
    return ClusterAssignment(
        labels=tuple(labels),
        cluster_sizes=sizes,
        raw_noise=assignment.raw_noise,
        doc_id=assignment.doc_id,
        index_of=assignment.index_of,
        tree=assignment.tree,
    )


def cluster_distance_matrix(
    dist: np.ndarray,
    params: HdbscanParams,
    doc_id: str | None = None,
    index_of: Mapping[tuple[str, int], int] | None = None,
) -> ClusterAssignment:
    """Full pipeline from a precomputed distance matrix, promotion included."""
    core = core_distances(dist, params.min_samples)
    reach = mutual_reachability(dist, core)
    edges = mst(reach)
    pre = condense_and_select(edges, params, n_points=dist.shape[0], doc_id=doc_id, index_of=index_of)
    return promote_noise(pre)


def cluster_scus(
    scus: Sequence[SCURecord],
    encoder: EncoderConfig,
    params: HdbscanParams,
    cache: FileCache | None = None,
) -> ClusterAssignment:
    """Encode one document's units and cluster them; deterministic whenever the
    encoder is.

    Units are reordered internally by (text, candidate_id, index) before
    clustering, so tie-breaking between equidistant points (exact duplicate
    texts in particular) can never depend on candidate presentation order —
    the partition is a function of the unit *set*.
    """
    if not scus:
        raise ValueError("need at least one content unit to cluster")
    doc_ids = {s.doc_id for s in scus}
    if len(doc_ids) != 1:
        raise ValueError(f"units span multiple documents: {sorted(doc_ids)}")
    doc_id = scus[0].doc_id
    index_of = {s.key: i for i, s in enumerate(scus)}
    if len(index_of) != len(scus):
        raise ValueError(f"duplicate (candidate_id, index) among units of {doc_id!r}")
    canonical = sorted(range(len(scus)), key=lambda i: (scus[i].text, scus[i].key))
    try:
        vectors = encode_batch([scus[i].text for i in canonical], encoder, cache)
        dist = pairwise_distances(vectors, metric="euclidean")
        sorted_assignment = cluster_distance_matrix(dist, params, doc_id=doc_id)
    except Exception as exc:
        raise RuntimeError(f"clustering failed for document {doc_id!r}: {exc}") from exc
    labels = [NOISE] * len(scus)
    for sorted_pos, original_pos in enumerate(canonical):
        labels[original_pos] = sorted_assignment.labels[sorted_pos]
    noise = frozenset(canonical[i] for i in sorted_assignment.raw_noise)
    dense = _densify(labels, doc_id, index_of, sorted_assignment.tree)
    return ClusterAssignment(
        labels=dense.labels,
        cluster_sizes=dense.cluster_sizes,
        raw_noise=noise,
        doc_id=doc_id,
        index_of=index_of,
        tree=sorted_assignment.tree,
        canonical_order=tuple(canonical),
    )


def assignment_debug_record(assignment: ClusterAssignment) -> dict[str, Any]:
    """Line-delimited dump of the labels and condensed tree, for inspection."""
    record: dict[str, Any] = {
        "doc_id": assignment.doc_id,
        "labels": list(assignment.labels),
        "cluster_sizes": {str(k): v for k, v in sorted(assignment.cluster_sizes.items())},
        "raw_noise": sorted(assignment.raw_noise),
    }
    if assignment.tree is not None and assignment.tree.root is not None:
        record["condensed_tree"] = [
            [e.parent, e.child, e.lambda_birth, e.lambda_death, e.child_size, e.child_is_cluster]
            for e in assignment.tree.edges
        ]
        record["stability"] = {
            str(k): v for k, v in sorted(assignment.tree.stability.items())
        }
        if assignment.canonical_order is not None:
            # tree point ids index into this permutation of the input units
            record["canonical_order"] = list(assignment.canonical_order)
    return record
