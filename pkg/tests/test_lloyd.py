import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minirel.core import ClusteringProblem, Dataset, GroupStructure, InvalidArgumentError
from minirel.lloyd import (DegenerateClusterError, center_step, greedy_assign, init_centers, lloyd_run,
                           medoid_indices)
from minirel.synthetic import line_instance, make_group_blobs

from oracles import brute_kmeans


def problem(points, K, mode="kmeans"):
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    gs = GroupStructure.from_labels({"s": ["a" if i % 2 else "b" for i in range(n)]})
    return ClusteringProblem(Dataset(points), gs, K, mode)


def test_init_centers_examples():
    prob = problem(np.arange(6.0), 6)
    c = init_centers(prob, rng=3)
    assert sorted(c[:, 0].tolist()) == list(range(6))
    c1 = init_centers(problem(np.arange(6.0), 1), rng=3)
    assert c1.shape == (1, 1) and c1[0, 0] in range(6)
    assert np.array_equal(init_centers(prob, rng=11), init_centers(prob, rng=11))
    with pytest.raises(InvalidArgumentError):
        init_centers(prob, K=7, rng=0)


def test_init_centers_distinct_with_duplicate_points():
    prob = problem([0.0, 0.0, 0.0, 1.0], 3)
    _, idx = init_centers(prob, rng=0, return_index=True)
    assert len(set(idx.tolist())) == 3


def test_greedy_assign_examples():
    prob = problem([0.0, 1.0, 2.0], 2)
    assert greedy_assign(prob, [[0.0], [2.0]]).tolist() == [0, 0, 1]  # point 1 ties -> cluster 0
    ds, gs = line_instance()
    prob = ClusteringProblem(ds, gs, 2)
    assert greedy_assign(prob, [[1.0], [11.0]]).tolist() == [0, 0, 0, 1, 1, 1]


def test_center_step_examples():
    prob = problem([[0.0, 0.0], [2.0, 0.0]], 1)
    assert center_step(prob, [0, 0]).tolist() == [[1.0, 0.0]]
    med = problem([0.0, 1.0, 2.0], 1, mode="kmedians")
    assert center_step(med, [0, 0, 0]).tolist() == [[1.0]]


def test_medoid_tie_takes_lowest_id():
    # two coincident candidates at ids 1 and 2 give equal cost
    med = problem([0.0, 1.0, 1.0, 2.0], 1, mode="kmedians")
    assert medoid_indices(med, [0, 0, 0, 0]).tolist() == [1]


def test_medoid_restricted_to_cluster():
    med = problem([0.0, 10.0, 20.0], 2, mode="kmedians")
    idx = medoid_indices(med, [0, 1, 0])
    assert idx[1] == 1
    assert idx[0] in (0, 2)


def test_center_step_empty_cluster():
    with pytest.raises(DegenerateClusterError):
        center_step(problem([0.0, 1.0], 2), [0, 0])


def test_lloyd_two_blobs_matches_brute_force():
    rng = np.random.default_rng(0)
    pts = np.vstack([rng.normal(0, 0.1, (4, 2)), rng.normal(5, 0.1, (4, 2))])
    prob = problem(pts, 2)
    sol = lloyd_run(prob, rng=1)
    assert sol.cost == pytest.approx(brute_kmeans(pts, 2), abs=1e-9)
    assert set(sol.assignment[:4]) != set(sol.assignment[4:])


def test_lloyd_K_equals_n_and_fixed_point_start():
    pts = np.arange(5.0)
    assert lloyd_run(problem(pts, 5), rng=0).cost == 0.0
    sol = lloyd_run(problem([0.0, 1.0, 10.0, 11.0], 2), init=[[0.5], [10.5]])
    assert sol.info["n_iter"] == 1 and sol.info["converged"]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3))
def test_lloyd_properties(seed, K):
    rng = np.random.default_rng(seed)
    pts = rng.random((7, 2))
    prob = problem(pts, K)
    sol = lloyd_run(prob, rng=seed)
    hist = sol.info["history"]
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))
    assert np.array_equal(greedy_assign(prob, sol.centers), sol.assignment)
    assert sol.cost >= brute_kmeans(pts, K) - 1e-9


def test_lloyd_determinism_and_kmedians_centers_are_members():
    ds, gs = make_group_blobs(120, n_blobs=3, seed=2)
    prob = ClusteringProblem(ds, gs, 3, "kmedians")
    a, b = lloyd_run(prob, rng=5), lloyd_run(prob, rng=5)
    assert np.array_equal(a.assignment, b.assignment) and a.cost == b.cost
    for k, c in enumerate(a.centers):
        members = prob.points[a.assignment == k]
        assert np.any(np.all(members == c, axis=1))


def test_lloyd_repairs_empty_cluster():
    prob = problem([0.0, 0.1, 0.2, 5.0], 3)
    sol = lloyd_run(prob, init=[[0.1], [100.0], [5.0]])
    assert np.all(np.bincount(sol.assignment, minlength=3) > 0)
