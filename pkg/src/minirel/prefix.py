"""Pre-fixing the representation matrix y from myopic per-pair costs.

The pre-fixing problem

    min  sum m_gk y_gk
    s.t. sum_k y_gk >= beta_g                 (every group gets enough clusters)
         sum_{g in G_f} y_gk <= floor(1/alpha) (per cluster and feature)
         0 <= y <= 1

has a bipartite incidence matrix per feature, so its LP vertices are integral
and a simplex solve is enough.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import ClusteringError, ClusteringProblem, FairnessSpec, InvalidArgumentError, REP_TOL
from .lp import LinearProgram, solve_lp
from .models import PrefixInfeasibleError

INTEGRALITY_TOL = 1e-9


class CostKind(str, Enum):
    LOCAL = "local"
    PROPORTION = "proportion"
    WEIGHTED = "weighted"


@dataclass
class MyopicCostMatrix:
    """Per (group, cluster) cost of making the group represented; NaN marks an
    undefined pair (too few donors, or a pair excluded by the spec).

    ``short`` marks the undefined pairs that are allowed but lack donors; they
    can still be made represented by moving other points out of the cluster.
    """

    m: np.ndarray
    kind: CostKind
    q: np.ndarray
    short: np.ndarray | None = None

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.m)


@dataclass
class PrefixAssignment:
    """``objective`` sums the defined costs of the chosen pairs; ``fallback``
    counts chosen pairs that were undefined (see :func:`solve_prefix`)."""

    y: np.ndarray
    objective: float
    costs: MyopicCostMatrix | None = None
    fallback: int = 0


def q_needed(cluster_size: int, group_count: int, alpha: float) -> int | None:
    """Fewest group members to add so the group becomes alpha-represented.

    Returns None when no number of additions works (alpha = 1 with outsiders present).
    """
    if group_count < 0 or group_count > cluster_size:
        raise InvalidArgumentError("need 0 <= group_count <= cluster_size")
    if alpha >= 1.0:
        return 0 if group_count == cluster_size else None
    if group_count >= alpha * cluster_size - REP_TOL:
        return 0
    q = math.ceil((alpha * cluster_size - group_count) / (1.0 - alpha) - REP_TOL)
    # guard the closed form against rounding on exact boundaries
    while q > 0 and group_count + q - 1 >= alpha * (cluster_size + q - 1) - REP_TOL:
        q -= 1
    while group_count + q < alpha * (cluster_size + q) - REP_TOL:
        q += 1
    return max(q, 0)


def myopic_costs(problem: ClusteringProblem, centers, assignment, spec: FairnessSpec,
                 kind: CostKind | str = CostKind.LOCAL) -> MyopicCostMatrix:
    """Myopic cost m_gk of forcing group g to be represented in cluster k.

    ``local``: sum of the q_kg smallest reassignment costs D(x, c_k) - D(x, c(x))
    over members of X_g outside C_k. ``proportion``: max(alpha - p_gk, 0) with
    p_gk the share of g in C_k. ``weighted``: |C_k| times the proportion cost.
    Pairs with fewer than q_kg donors, and pairs outside ``spec.allowed_pairs``,
    are undefined.
    """
    kind = CostKind(kind)
    groups = problem.groups
    G, K = groups.G, problem.K
    assignment = np.asarray(assignment)
    cost = problem.cost_matrix(centers)
    own = cost[np.arange(problem.n), assignment]
    alphas = spec.alphas(groups)
    allowed = spec.allowed(G, K)
    sizes = np.bincount(assignment, minlength=K)
    m = np.full((G, K), np.nan)
    q = np.zeros((G, K), dtype=np.int64)
    short = np.zeros((G, K), dtype=bool)
    for g, idx in enumerate(groups.members):
        in_k = np.bincount(assignment[idx], minlength=K)
        for k in range(K):
            if not allowed[g, k]:
                continue
            need = q_needed(int(sizes[k]), int(in_k[k]), alphas[g])
            if need is None:
                short[g, k] = True
                continue
            q[g, k] = need
            donors = idx[assignment[idx] != k]
            if need > len(donors):
                short[g, k] = True
                continue
            if kind is CostKind.LOCAL:
                delta = cost[donors, k] - own[donors]
                m[g, k] = float(np.sort(delta)[:need].sum()) if need else 0.0
            else:
                p = in_k[k] / sizes[k] if sizes[k] else 1.0
                lack = max(alphas[g] - p, 0.0) if need else 0.0
                m[g, k] = lack if kind is CostKind.PROPORTION else sizes[k] * lack
    return MyopicCostMatrix(m, kind, q, short)


def solve_prefix(costs, spec: FairnessSpec, K: int, groups) -> PrefixAssignment:
    """Choose y minimizing total myopic cost subject to the beta and per-feature caps.

    ``costs`` is a :class:`MyopicCostMatrix` or a (G, K) array (NaN = undefined).
    Only defined pairs are eligible. If that leaves the problem infeasible and the
    cost matrix marks donor-short pairs, it is re-solved with those pairs admitted
    at a penalty above the total of all defined costs, so they are used only when
    unavoidable. Raises :class:`PrefixInfeasibleError` naming a group whose beta
    cannot be met.
    """
    cm = costs if isinstance(costs, MyopicCostMatrix) else None
    m = np.asarray(cm.m if cm is not None else costs, dtype=float)
    if m.shape != (groups.G, K):
        raise InvalidArgumentError(f"cost matrix must have shape {(groups.G, K)}")
    try:
        y = _solve_prefix_lp(m, spec, K, groups)
        return PrefixAssignment(y, float(m[y].sum()), cm)
    except PrefixInfeasibleError:
        if cm is None or cm.short is None or not cm.short.any():
            raise
    defined = ~np.isnan(m)
    penalty = 1.0 + float(np.abs(m[defined]).sum())
    widened = np.where(cm.short, penalty, m)
    y = _solve_prefix_lp(widened, spec, K, groups)
    return PrefixAssignment(y, float(m[y & defined].sum()), cm, int((y & cm.short).sum()))


def prefix_lp(m: np.ndarray, spec: FairnessSpec, K: int, groups) -> tuple[LinearProgram, np.ndarray]:
    """LP relaxation of pre-fixing over the defined (non-NaN) pairs of ``m``.

    Returns the finalized LP and a (G, K) array of column indices, -1 for
    undefined pairs.
    """
    m = np.asarray(m, dtype=float)
    G = groups.G
    beta = np.asarray(spec.beta)
    defined = ~np.isnan(m)
    caps = spec.feature_caps(groups)
    lp = LinearProgram()
    col = lp.add_vars(m[defined], 0.0, 1.0)
    index = -np.ones((G, K), dtype=np.int64)
    index[defined] = col
    for g in range(G):
        if beta[g] > 0:
            cols = index[g][index[g] >= 0]
            lp.add_constraint(cols, np.ones(len(cols)), ">=", float(beta[g]))
    for f in range(groups.n_features):
        gs = groups.groups_of(f)
        for k in range(K):
            cols = index[gs, k]
            cols = cols[cols >= 0]
            if len(cols) > caps[f]:
                lp.add_constraint(cols, np.ones(len(cols)), "<=", float(caps[f]))
    return lp.finalize(), index


def _solve_prefix_lp(m: np.ndarray, spec: FairnessSpec, K: int, groups) -> np.ndarray:
    G = groups.G
    beta = np.asarray(spec.beta)
    defined = ~np.isnan(m)
    for g in range(G):
        if beta[g] > defined[g].sum():
            raise PrefixInfeasibleError(
                f"group {groups.groups[g]!r} needs {int(beta[g])} clusters but only "
                f"{int(defined[g].sum())} pairs are available")
    caps = spec.feature_caps(groups)
    for f in range(groups.n_features):
        gs = groups.groups_of(f)
        if beta[gs].sum() > K * caps[f]:
            worst = gs[int(np.argmax(beta[gs]))]
            raise PrefixInfeasibleError(
                f"group {groups.groups[worst]!r}: feature {groups.features[f]!r} needs "
                f"{int(beta[gs].sum())} representations but clusters hold at most {int(K * caps[f])}")

    y = np.zeros((G, K), dtype=bool)
    if not defined.any():
        return y
    lp, index = prefix_lp(m, spec, K, groups)
    col = index[defined]
    sol = solve_lp(lp)
    if sol.status == "infeasible":
        raise PrefixInfeasibleError(f"group {groups.groups[_short_group(lp, index, beta, groups)]!r} "
                                    "cannot be given enough clusters under the per-feature caps")
    if not sol.optimal:
        raise ClusteringError(f"pre-fixing LP is {sol.status}")
    vals = sol.x[col]
    off = np.abs(vals - np.round(vals))
    if np.any(off > INTEGRALITY_TOL):
        raise ClusteringError(f"pre-fixing LP vertex is fractional (max {off.max():.3g})")
    y[defined] = np.round(vals) > 0.5
    return y


def _short_group(lp: LinearProgram, index, beta, groups) -> int:
    """Group with the largest shortfall in the slack-relaxed pre-fixing LP."""
    G = len(beta)
    relaxed = lp.copy()
    relaxed.c[:] = 0.0
    slack = relaxed.add_vars(np.ones(G), 0.0)
    rows = [g for g in range(G) if beta[g] > 0]
    A = relaxed.A.tolil()
    for r, g in enumerate(rows):
        A[r, slack[g]] = 1.0
    relaxed.A = A.tocsr()
    sol = solve_lp(relaxed.finalize())
    if not sol.optimal:
        return int(np.argmax(beta))
    return int(np.argmax(sol.x[slack]))
