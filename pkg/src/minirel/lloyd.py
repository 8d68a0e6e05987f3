"""Unconstrained Lloyd iterations for k-means and the alternating k-medians variant."""

from __future__ import annotations

import numpy as np

from .core import ClusteringError, ClusteringProblem, ClusteringSolution, InvalidArgumentError, clustering_cost


class DegenerateClusterError(ClusteringError):
    """A cluster ended up empty where a center is required."""


def as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(None if rng is None else np.uint64(rng))


def init_centers(problem: ClusteringProblem, K: int | None = None, rng=None, return_index=False):
    """k-means++ / k-medoids++ seeding: first center uniform, then D^2-weighted.

    Centers are distinct data points. Weights use the problem cost for k-means
    (already squared) and the squared cost for k-medians.
    """
    K = problem.K if K is None else K
    n = problem.n
    if K > n:
        raise InvalidArgumentError(f"cannot pick {K} centers from {n} points")
    rng = as_rng(rng)
    pts = problem.points
    chosen = [int(rng.integers(n))]
    closest = problem.cost_matrix(pts[chosen])[:, 0]
    for _ in range(1, K):
        w = closest if problem.mode == "kmeans" else closest ** 2
        w = w.copy()
        w[chosen] = 0.0
        total = w.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=w / total))
        else:
            # all remaining points coincide with a chosen center
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(free))
        chosen.append(nxt)
        closest = np.minimum(closest, problem.cost_matrix(pts[[nxt]])[:, 0])
    idx = np.array(chosen)
    if return_index:
        return pts[idx].copy(), idx
    return pts[idx].copy()


def greedy_assign(problem: ClusteringProblem, centers) -> np.ndarray:
    """Closest center per point; ties go to the lowest cluster index."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if len(centers) == 0:
        raise InvalidArgumentError("need at least one center")
    return np.argmin(problem.cost_matrix(centers), axis=1)


def medoid_indices(problem: ClusteringProblem, assignment, K: int | None = None) -> np.ndarray:
    """Per cluster, the member minimizing the summed cost to the cluster (lowest id on ties)."""
    assignment = np.asarray(assignment)
    K = problem.K if K is None else K
    out = np.empty(K, dtype=np.int64)
    for k in range(K):
        members = np.flatnonzero(assignment == k)
        if len(members) == 0:
            raise DegenerateClusterError(f"cluster {k} is empty")
        pts = problem.points[members]
        total = problem.distance(pts, pts).sum(axis=0)
        out[k] = members[int(np.argmin(total))]
    return out


def center_step(problem: ClusteringProblem, assignment, K: int | None = None) -> np.ndarray:
    """Optimal centers for a fixed assignment: centroids (k-means) or medoids within the cluster (k-medians)."""
    assignment = np.asarray(assignment)
    K = problem.K if K is None else K
    if problem.mode == "kmedians":
        return problem.points[medoid_indices(problem, assignment, K)].copy()
    counts = np.bincount(assignment, minlength=K)[:K]
    if np.any(counts == 0):
        raise DegenerateClusterError(f"clusters {np.flatnonzero(counts == 0).tolist()} are empty")
    centers = np.zeros((K, problem.dataset.m))
    np.add.at(centers, assignment, problem.points)
    return centers / counts[:, None]


def _repair_empty(problem, assignment, centers):
    """Move the most expensive point of a non-singleton cluster into each empty cluster."""
    K = len(centers)
    sizes = np.bincount(assignment, minlength=K)
    if np.all(sizes > 0):
        return assignment, centers
    assignment = assignment.copy()
    centers = centers.copy()
    point_cost = problem.cost_matrix(centers)[np.arange(problem.n), assignment]
    for k in np.flatnonzero(sizes == 0):
        movable = sizes[assignment] > 1
        cand = np.where(movable, point_cost, -np.inf)
        i = int(np.argmax(cand))
        sizes[assignment[i]] -= 1
        assignment[i] = k
        sizes[k] = 1
        point_cost[i] = 0.0
        centers[k] = problem.points[i]
    return assignment, centers


def lloyd_run(problem: ClusteringProblem, rng=None, max_iter: int = 300, init=None) -> ClusteringSolution:
    """Alternate greedy assignment and center updates until the partition repeats.

    ``info`` carries ``n_iter`` (center updates performed), ``history`` (cost
    after each center update) and ``converged``.
    """
    K = problem.K
    if K > problem.n:
        raise InvalidArgumentError(f"K={K} exceeds n={problem.n}")
    centers = init_centers(problem, K, rng) if init is None else np.array(init, dtype=float)
    assignment = None
    history = []
    converged = False
    n_iter = 0
    for _ in range(max_iter):
        new = greedy_assign(problem, centers)
        new, centers = _repair_empty(problem, new, centers)
        if assignment is not None and np.array_equal(new, assignment):
            converged = True
            break
        assignment = new
        centers = center_step(problem, assignment, K)
        history.append(clustering_cost(assignment, centers, problem))
        n_iter += 1
    else:
        converged = assignment is not None and np.array_equal(greedy_assign(problem, centers), assignment)
    cost = clustering_cost(assignment, centers, problem)
    return ClusteringSolution(assignment, centers, cost,
                              info={"n_iter": n_iter, "history": history, "converged": converged})
