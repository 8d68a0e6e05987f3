"""Data model, fairness definitions and metrics for minimum-representation clustering."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist

# Slack used whenever a representation threshold alpha*|C| is compared against an
# integer count, so that e.g. 51 >= 0.51 * 100 holds despite binary rounding.
REP_TOL = 1e-9


class ClusteringError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(ClusteringError, ValueError):
    pass


def floor_inv(alpha: float) -> int:
    """floor(1/alpha), robust to alpha values like 0.2 whose inverse is not exact."""
    return int(math.floor(1.0 / alpha + 1e-12))


def ceil_inv(alpha: float) -> int:
    return int(math.ceil(1.0 / alpha - 1e-12))


@dataclass(frozen=True)
class Dataset:
    """n points in R^m. Row i is the point with id i; ids define the lexicographic order."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise InvalidArgumentError("points must be a non-empty (n, m) array")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgumentError("points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def m(self) -> int:
        return self.points.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n)


@dataclass(frozen=True)
class GroupStructure:
    """Sensitive features and the groups they induce.

    ``groups`` is a flat tuple of group names (unique across features),
    ``group_feature[g]`` is the feature index of group g, and ``members[g]`` the
    sorted point indices of X_g. For every feature the member sets partition
    ``range(n)``; groups of different features may overlap.
    """

    n: int
    features: tuple
    groups: tuple
    group_feature: tuple
    members: tuple

    def __post_init__(self):
        if len(self.groups) != len(self.group_feature) or len(self.groups) != len(self.members):
            raise InvalidArgumentError("groups, group_feature and members must align")
        if len(set(self.groups)) != len(self.groups):
            raise InvalidArgumentError("group names must be unique")
        mem = []
        for idx in self.members:
            a = np.unique(np.asarray(idx, dtype=np.int64))
            a.setflags(write=False)
            mem.append(a)
        object.__setattr__(self, "members", tuple(mem))
        for f in range(len(self.features)):
            gs = self.groups_of(f)
            if len(gs) < 2:
                raise InvalidArgumentError(f"feature {self.features[f]!r} needs at least two groups")
            cover = np.concatenate([self.members[g] for g in gs])
            if len(cover) != self.n or not np.array_equal(np.sort(cover), np.arange(self.n)):
                raise InvalidArgumentError(f"groups of feature {self.features[f]!r} do not partition the data")

    @classmethod
    def from_labels(cls, labels: Mapping[str, Sequence]) -> "GroupStructure":
        """Build from ``{feature: per-point label sequence}``.

        Group names are ``"feature=value"``; groups are ordered by feature then by
        sorted label value.
        """
        features = tuple(labels)
        n = None
        groups, group_feature, members = [], [], []
        for f, name in enumerate(features):
            col = np.asarray([str(v) for v in labels[name]])
            if n is None:
                n = len(col)
            elif len(col) != n:
                raise InvalidArgumentError("label columns differ in length")
            for value in sorted(set(col.tolist())):
                groups.append(f"{name}={value}")
                group_feature.append(f)
                members.append(np.flatnonzero(col == value))
        if n is None:
            raise InvalidArgumentError("at least one sensitive feature is required")
        return cls(n, features, tuple(groups), tuple(group_feature), tuple(members))

    @property
    def G(self) -> int:
        return len(self.groups)

    @property
    def n_features(self) -> int:
        return len(self.features)

    def groups_of(self, f: int) -> list[int]:
        return [g for g, ff in enumerate(self.group_feature) if ff == f]

    def index(self, name: str) -> int:
        return self.groups.index(name)

    def membership(self) -> np.ndarray:
        """Boolean (G, n) indicator matrix."""
        mat = np.zeros((self.G, self.n), dtype=bool)
        for g, idx in enumerate(self.members):
            mat[g, idx] = True
        return mat

    def sizes(self) -> np.ndarray:
        return np.array([len(m) for m in self.members])

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Common refinement of all features: points sharing every group label.

        Returns ``(atom_of, atom_groups)``: the atom index per point (atoms
        numbered by first occurrence) and a boolean (A, G) matrix of the groups
        each atom lies in.
        """
        label = np.zeros((self.n, self.n_features), dtype=np.int64)
        for g, idx in enumerate(self.members):
            label[idx, self.group_feature[g]] = g
        _, first, atom_of = np.unique(label, axis=0, return_index=True, return_inverse=True)
        order = np.argsort(first)
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        atom_of = rank[atom_of.ravel()]
        member = self.membership()
        atom_groups = member[:, np.sort(first)].T
        return atom_of, atom_groups

    def subset(self, idx: np.ndarray) -> "GroupStructure":
        """Restrict to the points ``idx`` (re-indexed 0..len(idx)-1)."""
        idx = np.asarray(idx)
        lookup = -np.ones(self.n, dtype=np.int64)
        lookup[idx] = np.arange(len(idx))
        members = []
        for m in self.members:
            new = lookup[m]
            members.append(np.sort(new[new >= 0]))
        return GroupStructure(len(idx), self.features, self.groups, self.group_feature, tuple(members))


@dataclass(frozen=True)
class FairnessSpec:
    """alpha (scalar, or per-group mapping), beta per group, cardinality bounds and allowed pairs.

    ``card_upper=None`` means u = n. ``allowed_pairs`` is an optional boolean (G, K)
    mask of (group, cluster) pairs that may carry a representation constraint.
    """

    alpha: float | Mapping[str, float]
    beta: np.ndarray
    card_lower: int = 1
    card_upper: int | None = None
    allowed_pairs: np.ndarray | None = None

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.int64).copy()
        if np.any(beta < 0):
            raise InvalidArgumentError("beta must be nonnegative")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        alphas = self.alpha.values() if isinstance(self.alpha, Mapping) else [self.alpha]
        for a in alphas:
            if not 0.0 < float(a) <= 1.0:
                raise InvalidArgumentError(f"alpha must lie in (0, 1], got {a}")
        if self.card_lower < 0:
            raise InvalidArgumentError("card_lower must be nonnegative")
        if self.card_upper is not None and self.card_upper < max(self.card_lower, 1):
            raise InvalidArgumentError("need card_lower <= card_upper and card_upper >= 1")
        if self.allowed_pairs is not None:
            w = np.asarray(self.allowed_pairs, dtype=bool).copy()
            w.setflags(write=False)
            object.__setattr__(self, "allowed_pairs", w)

    def alphas(self, groups: GroupStructure) -> np.ndarray:
        """Per-group alpha as a (G,) array."""
        if isinstance(self.alpha, Mapping):
            return np.array([float(self.alpha[name]) for name in groups.groups])
        return np.full(groups.G, float(self.alpha))

    def upper(self, n: int) -> int:
        return n if self.card_upper is None else min(self.card_upper, n)

    def allowed(self, G: int, K: int) -> np.ndarray:
        if self.allowed_pairs is None:
            return np.ones((G, K), dtype=bool)
        if self.allowed_pairs.shape != (G, K):
            raise InvalidArgumentError(f"allowed_pairs must have shape {(G, K)}")
        return np.array(self.allowed_pairs)

    def feature_caps(self, groups: GroupStructure) -> np.ndarray:
        """floor(1/alpha) per feature: how many of its groups one cluster can represent."""
        alphas = self.alphas(groups)
        return np.array([floor_inv(min(alphas[g] for g in groups.groups_of(f)))
                         for f in range(groups.n_features)])

    def validate(self, groups: GroupStructure, K: int) -> None:
        if len(self.beta) != groups.G:
            raise InvalidArgumentError(f"beta has {len(self.beta)} entries for {groups.G} groups")
        if np.any(self.beta > K):
            raise InvalidArgumentError("beta_g must not exceed K")
        if self.card_lower > groups.n:
            raise InvalidArgumentError("card_lower exceeds n")


def sq_euclidean(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return cdist(points, centers, "sqeuclidean")


def euclidean(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return cdist(points, centers, "euclidean")


@dataclass(frozen=True)
class ClusteringProblem:
    """A dataset with groups, K and the clustering objective.

    ``mode`` is ``"kmeans"`` (cost is squared Euclidean distance, centers anywhere)
    or ``"kmedians"`` (cost is ``distance``, centers are data points of their
    cluster). ``distance(points, centers)`` must return the (len(points),
    len(centers)) cost matrix.
    """

    dataset: Dataset
    groups: GroupStructure
    K: int
    mode: str = "kmeans"
    distance: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.mode not in ("kmeans", "kmedians"):
            raise InvalidArgumentError(f"unknown mode {self.mode!r}")
        if self.K < 1:
            raise InvalidArgumentError("K must be at least 1")
        if self.groups.n != self.dataset.n:
            raise InvalidArgumentError("group structure and dataset disagree on n")
        if self.distance is None:
            object.__setattr__(self, "distance", sq_euclidean if self.mode == "kmeans" else euclidean)

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def points(self) -> np.ndarray:
        return self.dataset.points

    def cost_matrix(self, centers: np.ndarray) -> np.ndarray:
        """D(x^i, c_k) as an (n, K) array."""
        return np.asarray(self.distance(self.points, np.atleast_2d(centers)), dtype=float)


@dataclass
class ClusteringSolution:
    assignment: np.ndarray
    centers: np.ndarray
    cost: float
    y: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def clusters(self, K: int | None = None) -> list[np.ndarray]:
        K = len(self.centers) if K is None else K
        return [np.flatnonzero(self.assignment == k) for k in range(K)]

    def sizes(self, K: int | None = None) -> np.ndarray:
        K = len(self.centers) if K is None else K
        return np.bincount(self.assignment, minlength=K)


def compute_beta(policy: str, alpha, K: int, groups: GroupStructure, custom=None) -> np.ndarray:
    """Per-group beta for ``"sp"`` (cluster statistical parity), ``"eqop"`` (cluster
    equality of opportunity) or ``"custom"`` (``custom`` mapping/sequence passed
    through). Values are clamped to at most K."""
    if K < 1:
        raise InvalidArgumentError("K must be at least 1")
    if isinstance(alpha, Mapping):
        alphas = np.array([float(alpha[name]) for name in groups.groups])
    else:
        alphas = np.full(groups.G, float(alpha))
    policy = policy.lower()
    beta = np.zeros(groups.G, dtype=np.int64)
    if policy in ("sp", "statistical_parity"):
        for g in range(groups.G):
            n_f = len(groups.groups_of(groups.group_feature[g]))
            beta[g] = math.floor(floor_inv(alphas[g]) * K / n_f + 1e-12)
    elif policy in ("eqop", "equality_of_opportunity"):
        sizes = groups.sizes()
        for g in range(groups.G):
            beta[g] = math.floor(sizes[g] * floor_inv(alphas[g]) * K / groups.n + 1e-12)
    elif policy == "custom":
        if custom is None:
            raise InvalidArgumentError("custom policy needs explicit beta values")
        if isinstance(custom, Mapping):
            beta = np.array([int(custom.get(name, 0)) for name in groups.groups], dtype=np.int64)
        else:
            beta = np.asarray(custom, dtype=np.int64)
    else:
        raise InvalidArgumentError(f"unknown beta policy {policy!r}")
    return np.minimum(beta, K)


def _counts(assignment: np.ndarray, groups: GroupStructure, K: int):
    assignment = np.asarray(assignment)
    sizes = np.bincount(assignment, minlength=K)[:K]
    counts = np.zeros((groups.G, K), dtype=np.int64)
    for g, idx in enumerate(groups.members):
        counts[g] = np.bincount(assignment[idx], minlength=K)[:K]
    return sizes, counts


def representation_matrix(assignment, groups: GroupStructure, alpha, K: int) -> np.ndarray:
    """Boolean (G, K): group g is alpha-represented in the nonempty cluster k."""
    sizes, counts = _counts(assignment, groups, K)
    alphas = alpha if np.ndim(alpha) else np.full(groups.G, float(alpha))
    alphas = np.asarray(alphas, dtype=float)[:, None]
    return (counts >= alphas * sizes[None, :] - REP_TOL) & (sizes[None, :] >= 1)


def lambda_count(assignment, members, alpha: float, K: int | None = None) -> int:
    """Number of nonempty clusters in which the point set ``members`` is alpha-represented."""
    assignment = np.asarray(assignment)
    if K is None:
        K = int(assignment.max()) + 1 if len(assignment) else 0
    sizes = np.bincount(assignment, minlength=K)[:K]
    members = np.asarray(members, dtype=np.int64)
    counts = np.bincount(assignment[members], minlength=K)[:K] if len(members) else np.zeros(K, int)
    return int(np.sum((sizes >= 1) & (counts >= alpha * sizes - REP_TOL)))


def infer_y(assignment, groups: GroupStructure, spec: FairnessSpec, K: int) -> np.ndarray:
    """Pair each group with the beta_g clusters where its share is highest.

    Used to score solutions that carry no representation matrix (e.g. unfair
    baselines). Ties go to the lower cluster index.
    """
    sizes, counts = _counts(assignment, groups, K)
    share = counts / np.maximum(sizes, 1)[None, :]
    allowed = spec.allowed(groups.G, K)
    y = np.zeros((groups.G, K), dtype=bool)
    for g in range(groups.G):
        order = np.lexsort((np.arange(K), -share[g]))
        order = [k for k in order if allowed[g, k]]
        y[g, order[: int(spec.beta[g])]] = True
    return y


@dataclass
class MetricsReport:
    lambdas: np.ndarray
    deviation: np.ndarray
    max_deviation: int
    deltas: np.ndarray
    violation_max: float
    violation_sum: float
    norm_violation_max: float
    norm_violation_sum: float
    norm_deviation: float
    y: np.ndarray

    def as_dict(self) -> dict:
        return {
            "max_deviation": int(self.max_deviation),
            "violation_sum": float(self.violation_sum),
            "violation_max": float(self.violation_max),
            "norm_violation_sum": float(self.norm_violation_sum),
            "norm_violation_max": float(self.norm_violation_max),
            "norm_deviation": float(self.norm_deviation),
        }


def fairness_metrics(assignment, spec: FairnessSpec, groups: GroupStructure, K: int,
                     y: np.ndarray | None = None) -> MetricsReport:
    """Deviation from beta and additive violations of the pairs with y_gk = 1.

    ``deltas[g, k] = max(0, alpha*|C_k| - |C_k cap X_g|)`` where y_gk = 1 and 0
    elsewhere. When ``y`` is missing it is inferred with :func:`infer_y`.
    Normalized values divide by n (violations) or K (deviation).
    """
    assignment = np.asarray(assignment)
    sizes, counts = _counts(assignment, groups, K)
    alphas = spec.alphas(groups)
    rep = (counts >= alphas[:, None] * sizes[None, :] - REP_TOL) & (sizes[None, :] >= 1)
    lambdas = rep.sum(axis=1)
    deviation = np.maximum(spec.beta - lambdas, 0)
    if y is None:
        y = infer_y(assignment, groups, spec, K)
    y = np.asarray(y, dtype=bool)
    raw = alphas[:, None] * sizes[None, :] - counts
    deltas = np.where(y & (raw > REP_TOL), raw, 0.0)
    n = len(assignment)
    vmax = float(deltas.max()) if deltas.size else 0.0
    vsum = float(deltas.sum())
    max_dev = int(deviation.max()) if deviation.size else 0
    return MetricsReport(lambdas, deviation, max_dev, deltas, vmax, vsum, vmax / n, vsum / n,
                         max_dev / K, y)


def clustering_cost(assignment, centers, problem: ClusteringProblem) -> float:
    """Sum over points of D(x^i, c_{assignment(i)})."""
    assignment = np.asarray(assignment)
    D = problem.cost_matrix(np.asarray(centers, dtype=float))
    return float(D[np.arange(len(assignment)), assignment].sum())
