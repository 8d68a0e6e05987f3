"""Bundled synthetic instances: skewed-group blobs, the fixed-center inapproximability
instance, and a six-point line."""

from __future__ import annotations

import numpy as np

from .core import ClusteringProblem, Dataset, GroupStructure, InvalidArgumentError


def make_group_blobs(n: int = 300, n_blobs: int = 4, m: int = 2, group_shares=((0.7, 0.3),),
                     skew: float = 0.6, spread: float = 0.08, seed: int = 0):
    """Gaussian blobs in [0, 1]^m whose group mix is skewed towards one group per blob.

    ``group_shares`` holds one share vector per sensitive feature. Blob b gets a
    dominant group per feature (assigned in proportion to the shares); inside the
    blob a point takes its dominant group with extra probability ``skew``.
    Returns ``(Dataset, GroupStructure)``.
    """
    if n < 1 or n_blobs < 1:
        raise InvalidArgumentError("need n >= 1 and n_blobs >= 1")
    rng = np.random.default_rng(seed)
    means = rng.uniform(0.15, 0.85, size=(n_blobs, m))
    blob = rng.integers(n_blobs, size=n)
    points = means[blob] + rng.normal(scale=spread, size=(n, m))
    labels = {}
    for f, shares in enumerate(group_shares):
        shares = np.asarray(shares, dtype=float)
        shares = shares / shares.sum()
        # dominant group per blob, proportional to the global shares
        quota = np.cumsum(shares) * n_blobs
        dom = np.searchsorted(quota, np.arange(n_blobs) + 0.5)
        dom = np.minimum(dom, len(shares) - 1)
        probs = (1 - skew) * shares[None, :] + skew * np.eye(len(shares))[dom]
        cum = probs[blob].cumsum(axis=1)
        draw = rng.random(n)[:, None]
        lab = (draw > cum).sum(axis=1)
        labels[f"s{f}"] = [f"g{v}" for v in lab]
    groups = GroupStructure.from_labels(labels)
    # a feature may miss a group on tiny samples; force every group to appear
    for f, shares in enumerate(group_shares):
        if len(groups.groups_of(f)) < len(shares):
            lab = list(labels[f"s{f}"])
            for v in range(len(shares)):
                if f"g{v}" not in lab:
                    lab[v % n] = f"g{v}"
            labels[f"s{f}"] = lab
            groups = GroupStructure.from_labels(labels)
    return Dataset(points), groups


def inapprox_instance(gamma: float = 10.0, eps: float = 1.0):
    """Four points, three colour groups: red and blue at the origin, two yellow
    points at (gamma, 0) and (gamma, eps). With K=3, alpha > 1/2 and beta = 1 per
    group, fair assignment at the unfair optimal centers costs gamma^2 + eps^2
    while the fair optimum costs eps^2 / 2 (k-means)."""
    pts = np.array([[0.0, 0.0], [0.0, 0.0], [gamma, 0.0], [gamma, eps]])
    groups = GroupStructure.from_labels({"color": ["red", "blue", "yellow", "yellow"]})
    unfair_centers = np.array([[0.0, 0.0], [gamma, 0.0], [gamma, eps]])
    return Dataset(pts), groups, unfair_centers


def line_instance():
    """Points 0, 1, 2, 10, 11, 12 on a line. Group A = {0, 1, 10}, B = {2, 11, 12}."""
    pts = np.array([0.0, 1.0, 2.0, 10.0, 11.0, 12.0])[:, None]
    groups = GroupStructure.from_labels({"grp": ["A", "A", "B", "A", "B", "B"]})
    return Dataset(pts), groups


def problem_from(dataset, groups, K, mode="kmeans", distance=None) -> ClusteringProblem:
    return ClusteringProblem(dataset, groups, K, mode, distance)
