from __future__ import annotations

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    min_spanning_weight_exhaustive,
    random_point_distances,
    random_spanning_weight,
)
from scurank.clustering import (
    ClusterAssignment,
    HdbscanParams,
    cluster_distance_matrix,
    cluster_scus,
    condense_and_select,
    core_distances,
    mst,
    mutual_reachability,
    promote_noise,
)
from scurank.corpus import SCURecord
from scurank.embedding import EncoderConfig


def _matrix(rows) -> np.ndarray:
    return np.array(rows, dtype=np.float64)


# --- core distances -----------------------------------------------------------


def test_core_two_points():
    dist = _matrix([[0.0, 0.4], [0.4, 0.0]])
    assert core_distances(dist, 1).tolist() == [0.4, 0.4]


def test_core_collinear():
    # points at 0, 1, 3 on a line; 2nd nearest other point
    dist = _matrix([[0, 1, 3], [1, 0, 2], [3, 2, 0]])
    assert core_distances(dist, 2).tolist() == [3.0, 2.0, 3.0]


def test_core_single_point_degenerate():
    assert core_distances(_matrix([[0.0]]), 2).tolist() == [0.0]


def test_core_fallback_to_max_when_too_few_neighbors():
    dist = _matrix([[0.0, 0.4], [0.4, 0.0]])
    assert core_distances(dist, 5).tolist() == [0.4, 0.4]


# --- mutual reachability --------------------------------------------------------


def test_mr_all_equal():
    dist = _matrix([[0.0, 0.4], [0.4, 0.0]])
    reach = mutual_reachability(dist, np.array([0.4, 0.4]))
    assert reach[0, 1] == 0.4
    assert reach[0, 0] == 0.0


def test_mr_max_rule():
    dist = _matrix([[0.0, 0.5], [0.5, 0.0]])
    reach = mutual_reachability(dist, np.array([1.0, 0.2]))
    assert reach[0, 1] == 1.0


def test_mr_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        mutual_reachability(_matrix([[0.0, 1.0], [1.0, 0.0]]), np.array([1.0]))


def test_core_invalid_min_samples_rejected():
    with pytest.raises(ValueError):
        core_distances(_matrix([[0.0]]), 0)


def test_mr_matches_bruteforce():
    dist = random_point_distances(4, seed=11)
    core = core_distances(dist, 2)
    reach = mutual_reachability(dist, core)
    for i in range(4):
        for j in range(4):
            expected = 0.0 if i == j else max(core[i], core[j], dist[i, j])
            assert reach[i, j] == expected


# --- minimum spanning tree ------------------------------------------------------


def test_mst_single_point():
    assert mst(_matrix([[0.0]])) == []


def test_mst_triangle():
    dist = _matrix([[0, 1, 3], [1, 0, 2], [3, 2, 0]])
    edges = mst(dist)
    assert len(edges) == 2
    assert sum(w for _, _, w in edges) == 3.0


def test_mst_equals_exhaustive_enumeration_n7():
    dist = random_point_distances(7, seed=3)
    total = sum(w for _, _, w in mst(dist))
    assert abs(total - min_spanning_weight_exhaustive(dist.tolist(), 7)) < 1e-9


def test_mst_at_most_random_search():
    rng = random.Random(5)
    for n in range(2, 9):
        dist = random_point_distances(n, seed=100 + n)
        total = sum(w for _, _, w in mst(dist))
        for _ in range(200):
            assert total <= random_spanning_weight(dist.tolist(), n, rng) + 1e-9


# --- condense and select --------------------------------------------------------


def _two_groups_matrix(intra=0.05, inter=10.0, sizes=(3, 3)) -> np.ndarray:
    n = sum(sizes)
    dist = np.full((n, n), inter)
    start = 0
    for size in sizes:
        block = slice(start, start + size)
        dist[block, block] = intra
        start += size
    np.fill_diagonal(dist, 0.0)
    return dist


def _cluster_pre(dist: np.ndarray, params: HdbscanParams) -> ClusterAssignment:
    core = core_distances(dist, params.min_samples)
    reach = mutual_reachability(dist, core)
    return condense_and_select(mst(reach), params, n_points=dist.shape[0])


def test_two_tight_groups_two_clusters_no_noise():
    pre = _cluster_pre(_two_groups_matrix(), HdbscanParams())
    assert len(pre.cluster_sizes) == 2
    assert sorted(pre.cluster_sizes.values()) == [3, 3]
    assert pre.raw_noise == frozenset()


def test_all_equal_mr_one_cluster():
    n = 5
    dist = np.full((n, n), 0.05)
    np.fill_diagonal(dist, 0.0)
    pre = _cluster_pre(dist, HdbscanParams())
    assert pre.cluster_sizes == {0: n}
    assert pre.raw_noise == frozenset()


def test_all_equal_mr_one_cluster_epsilon_zero():
    n = 5
    dist = np.full((n, n), 3.7)
    np.fill_diagonal(dist, 0.0)
    pre = _cluster_pre(dist, HdbscanParams(cluster_selection_epsilon=0.0))
    assert pre.cluster_sizes == {0: n}


def test_two_points_within_epsilon_one_cluster():
    dist = _matrix([[0.0, 0.1], [0.1, 0.0]])
    pre = _cluster_pre(dist, HdbscanParams())
    assert pre.cluster_sizes == {0: 2}
    assert pre.raw_noise == frozenset()


def test_two_points_beyond_epsilon_both_noise():
    dist = _matrix([[0.0, 5.0], [5.0, 0.0]])
    pre = _cluster_pre(dist, HdbscanParams())
    assert pre.raw_noise == frozenset({0, 1})
    promoted = promote_noise(pre)
    assert promoted.cluster_sizes == {0: 1, 1: 1}


def test_epsilon_merges_overfragmented_groups():
    # two 3-point subgroups (0.05) inside a 0.12-diameter blob, plus a distant
    # tight triple: epsilon 0.15 folds the blob back into one cluster, while
    # epsilon 0 keeps the fine-grained split
    n = 9
    dist = np.full((n, n), 10.0)
    dist[np.ix_(range(6), range(6))] = 0.12
    for group in (range(0, 3), range(3, 6), range(6, 9)):
        dist[np.ix_(group, group)] = 0.05
    np.fill_diagonal(dist, 0.0)
    merged = _cluster_pre(dist, HdbscanParams(cluster_selection_epsilon=0.15))
    assert len({merged.labels[i] for i in range(6)}) == 1
    assert merged.labels[6] != merged.labels[0]
    assert len({merged.labels[i] for i in range(6, 9)}) == 1
    assert merged.raw_noise == frozenset()
    fine = _cluster_pre(dist, HdbscanParams(cluster_selection_epsilon=0.0))
    assert len({fine.labels[i] for i in range(3)}) == 1
    assert len({fine.labels[i] for i in range(3, 6)}) == 1
    assert fine.labels[0] != fine.labels[3]


# --- promote noise ---------------------------------------------------------------


def test_promote_mechanical():
    pre = ClusterAssignment(
        labels=(0, 0, -1, -1), cluster_sizes={0: 2}, raw_noise=frozenset({2, 3})
    )
    promoted = promote_noise(pre)
    assert promoted.labels == (0, 0, 1, 2)
    assert promoted.cluster_sizes == {0: 2, 1: 1, 2: 1}
    assert promoted.raw_noise == frozenset({2, 3})


def test_promote_identity_when_no_noise():
    pre = ClusterAssignment(labels=(0, 0), cluster_sizes={0: 2}, raw_noise=frozenset())
    assert promote_noise(pre) is pre


def test_promote_all_noise():
    pre = ClusterAssignment(
        labels=(-1, -1, -1), cluster_sizes={}, raw_noise=frozenset({0, 1, 2})
    )
    promoted = promote_noise(pre)
    assert promoted.labels == (0, 1, 2)
    assert promoted.cluster_sizes == {0: 1, 1: 1, 2: 1}


# --- full pipeline ----------------------------------------------------------------


def _scu(i: int, text: str, cand: str = "c0") -> SCURecord:
    return SCURecord(doc_id="d", candidate_id=cand, index=i, text=text)


def _encoder() -> EncoderConfig:
    return EncoderConfig(backend="offline_hash", dimension=128)


def test_single_scu_singleton_cluster():
    assignment = cluster_scus([_scu(0, "Only one fact.")], _encoder(), HdbscanParams())
    assert assignment.labels == (0,)
    assert assignment.cluster_sizes == {0: 1}
    assert assignment.raw_noise == frozenset({0})


def test_nine_near_duplicates_one_cluster():
    base = (
        "The committee approved the harbor expansion plan after a long public "
        "hearing on Tuesday evening and set aside twelve million dollars for "
        "dredging the northern channel before the start of the shipping season"
    )
    scus = [_scu(0, f"{base} {i}.", cand=f"c{i}") for i in range(9)]
    from scurank.embedding import encode_batch, pairwise_distances

    dist = pairwise_distances(encode_batch([s.text for s in scus], _encoder()))
    off_diagonal = dist[~np.eye(9, dtype=bool)]
    assert off_diagonal.max() < 0.15  # genuinely a tight group for this encoder
    assignment = cluster_scus(scus, _encoder(), HdbscanParams())
    assert assignment.cluster_sizes == {0: 9}
    assert assignment.raw_noise == frozenset()


def test_two_topic_groups_two_clusters():
    topic_a = "The volcano erupted overnight and ash covered the nearby villages entirely"
    topic_b = "Parliament passed the updated trade agreement after months of negotiation"
    scus = [_scu(i, f"{topic_a} {i}.", cand=f"a{i}") for i in range(4)]
    scus += [_scu(i, f"{topic_b} {i}.", cand=f"b{i}") for i in range(4)]
    assignment = cluster_scus(scus, _encoder(), HdbscanParams())
    labels_a = {assignment.labels[i] for i in range(4)}
    labels_b = {assignment.labels[i] for i in range(4, 8)}
    assert len(labels_a) == 1 and len(labels_b) == 1
    assert labels_a != labels_b
    assert assignment.cluster_sizes[assignment.labels[0]] == 4
    assert assignment.raw_noise == frozenset()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_cluster_scus_invariant_to_unit_presentation_order(seed):
    # exact duplicate texts across candidates are the adversarial case:
    # identical embeddings create distance ties that raw index order would
    # otherwise resolve differently per presentation
    rng = random.Random(seed)
    pool = [f"Fact number {i} with some shared phrasing." for i in range(4)]
    scus = []
    for c in range(4):
        texts = [rng.choice(pool) for _ in range(rng.randint(1, 3))]
        texts += [f"Unique remark {c} {rng.random():.6f}."]
        for i, text in enumerate(texts):
            scus.append(SCURecord(doc_id="d", candidate_id=f"c{c}", index=i, text=text))
    base = cluster_scus(scus, _encoder(), HdbscanParams())
    shuffled = list(scus)
    rng.shuffle(shuffled)
    other = cluster_scus(shuffled, _encoder(), HdbscanParams())

    def groups(assignment, records):
        by_label = {}
        for record, label in zip(records, assignment.labels):
            by_label.setdefault(label, set()).add(record.key)
        return frozenset(frozenset(g) for g in by_label.values())

    assert groups(base, scus) == groups(other, shuffled)


def test_multiple_documents_rejected():
    records = [
        SCURecord(doc_id="d1", candidate_id="c", index=0, text="x y z"),
        SCURecord(doc_id="d2", candidate_id="c", index=0, text="x y z"),
    ]
    with pytest.raises(ValueError):
        cluster_scus(records, _encoder(), HdbscanParams())


# --- properties -------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 16), st.integers(0, 10_000))
def test_partition_totality(n, seed):
    dist = random_point_distances(n, seed=seed)
    assignment = cluster_distance_matrix(dist, HdbscanParams())
    assert len(assignment.labels) == n
    assert all(label >= 0 for label in assignment.labels)
    assert sum(assignment.cluster_sizes.values()) == n
    for label, size in assignment.cluster_sizes.items():
        assert list(assignment.labels).count(label) == size


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10_000))
def test_permutation_equivariance(n, seed):
    dist = random_point_distances(n, seed=seed)
    rng = random.Random(seed)
    perm = list(range(n))
    rng.shuffle(perm)
    permuted = dist[np.ix_(perm, perm)]
    base = cluster_distance_matrix(dist, HdbscanParams())
    other = cluster_distance_matrix(permuted, HdbscanParams())
    # map permuted indices back: point perm[i] in base corresponds to i in other
    remapped = frozenset(
        frozenset(perm[i] for i in group) for group in other.partition()
    )
    assert remapped == base.partition()


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10_000), st.sampled_from([0.1, 10.0]))
def test_scale_invariance_at_epsilon_zero(n, seed, scale):
    dist = random_point_distances(n, seed=seed)
    params = HdbscanParams(cluster_selection_epsilon=0.0)
    base = cluster_distance_matrix(dist, params)
    scaled = cluster_distance_matrix(dist * scale, params)
    assert scaled.partition() == base.partition()


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 14), st.integers(0, 10_000))
def test_monotone_noise_in_min_cluster_size(n, seed):
    dist = random_point_distances(n, seed=seed)
    previous = -1
    for mcs in (2, 3, 4, 5):
        pre = _cluster_pre(dist, HdbscanParams(min_cluster_size=mcs))
        noise = len(pre.raw_noise)
        assert noise >= previous
        previous = noise


def test_non_singleton_clusters_respect_min_size():
    for seed in range(20):
        dist = random_point_distances(10, seed=seed)
        pre = _cluster_pre(dist, HdbscanParams(min_cluster_size=3))
        for size in pre.cluster_sizes.values():
            assert size >= 3 or size == 1


def test_agrees_with_scikit_learn_on_tie_free_inputs():
    # Independent cross-check of the condense/stability/selection/labelling
    # stack. Feeding the distance matrix with min_samples=1 makes mutual
    # reachability the identity on both sides, so tie-breaking (the one
    # implementation-defined dimension) cannot interfere. Sklearn counts the
    # point itself in min_samples, hence ms=1 on both sides means "no core
    # smoothing" here.
    sklearn_cluster = pytest.importorskip("sklearn.cluster")
    if not hasattr(sklearn_cluster, "HDBSCAN"):
        pytest.skip("sklearn too old for HDBSCAN")
    rng = random.Random(7)
    checked = 0
    for trial in range(40):
        n = rng.randint(3, 24)
        dist = random_point_distances(n, seed=rng.randrange(1 << 30))
        dist = dist * rng.choice([1.0, 0.05, 0.01])
        values = dist[np.triu_indices(n, 1)]
        assert len(np.unique(values)) == len(values)
        for mcs in (2, 3):
            for eps in (0.0, 0.15):
                params = HdbscanParams(
                    min_cluster_size=mcs, min_samples=1, cluster_selection_epsilon=eps
                )
                pre = condense_and_select(mst(dist), params, n_points=n)
                sk = sklearn_cluster.HDBSCAN(
                    metric="precomputed",
                    min_cluster_size=mcs,
                    min_samples=1,
                    allow_single_cluster=True,
                    cluster_selection_epsilon=eps,
                ).fit(dist.copy())
                sk_partition = frozenset(
                    frozenset(np.nonzero(sk.labels_ == label)[0].tolist())
                    for label in set(sk.labels_)
                    if label != -1
                )
                sk_noise = frozenset(np.nonzero(sk.labels_ == -1)[0].tolist())
                mine_partition = frozenset(
                    frozenset(i for i, l in enumerate(pre.labels) if l == label)
                    for label in pre.cluster_sizes
                )
                assert mine_partition == sk_partition
                assert pre.raw_noise == sk_noise
                checked += 1
    assert checked == 160
