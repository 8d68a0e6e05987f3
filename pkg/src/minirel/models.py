"""Fair assignment models at fixed centers: FMRA, APFRC and RAP.

Variable layout: z_ik at column ``i*K + k``; for FMRA/RAP the y_gk columns follow
at ``n*K + g*K + k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import sparse

from .core import (ClusteringError, ClusteringProblem, FairnessSpec, InvalidArgumentError,
                   clustering_cost)
from .lp import INF, LinearProgram, LPSolution, MixedBinaryProgram, TimeLimitError, solve_lp, solve_mbp


class Variant(str, Enum):
    FMRA = "fmra"    # z, y binary
    APFRC = "apfrc"  # z binary, y fixed (substituted out)
    RAP = "rap"      # y binary, z continuous


@dataclass(frozen=True)
class InfeasibleCertificate:
    """No assignment meets the constraints. For FMRA/RAP this holds for every
    choice of centers, i.e. no (alpha, beta)-MR-fair clustering exists."""

    variant: str
    alpha: object
    beta: tuple
    card_lower: int
    card_upper: int | None


class InfeasibleError(ClusteringError):
    def __init__(self, certificate: InfeasibleCertificate):
        super().__init__(f"{certificate.variant} model infeasible for alpha={certificate.alpha}, "
                         f"beta={list(certificate.beta)}")
        self.certificate = certificate


class InvalidPrefixError(ClusteringError, ValueError):
    """A fixed representation matrix asks one cluster to represent too many groups of a feature."""


class PrefixInfeasibleError(ClusteringError):
    """The representation matrix (pre-fixed or chosen) cannot be met by any assignment."""


@dataclass
class FairAssignmentModel:
    variant: Variant
    mbp: MixedBinaryProgram
    z_index: np.ndarray
    y_index: np.ndarray | None
    y_fixed: np.ndarray | None
    big_m: np.ndarray
    cost: np.ndarray
    K: int
    t_index: np.ndarray | None = None
    atom_of: np.ndarray | None = None

    def vector(self, assignment, y=None) -> np.ndarray:
        """Variable vector of an integral assignment (and representation matrix y)."""
        assignment = np.asarray(assignment)
        n, K = self.z_index.shape
        x = np.zeros(self.mbp.lp.num_vars)
        x[self.z_index[np.arange(n), assignment]] = 1.0
        if self.t_index is not None:
            counts = np.zeros(self.t_index.shape)
            np.add.at(counts, (self.atom_of, assignment), 1.0)
            x[self.t_index] = counts
        if self.y_index is not None:
            if y is None:
                raise InvalidArgumentError("y is required for this variant")
            x[self.y_index] = np.asarray(y, dtype=float)
        return x


@dataclass
class FairAssignment:
    """Result of an exact solve. ``assignment`` is None when z is fractional (RAP)."""

    z: np.ndarray
    y: np.ndarray
    objective: float
    assignment: np.ndarray | None
    variant: Variant
    nodes: int = 0

    @property
    def fractional(self) -> bool:
        return self.assignment is None


def big_m(spec: FairnessSpec, groups, n: int) -> np.ndarray:
    """alpha_g * min(n, u), per group."""
    return spec.alphas(groups) * min(n, spec.upper(n))


def check_prefix(y: np.ndarray, spec: FairnessSpec, groups) -> None:
    caps = spec.feature_caps(groups)
    for f in range(groups.n_features):
        load = y[groups.groups_of(f)].sum(axis=0)
        bad = np.flatnonzero(load > caps[f])
        if len(bad):
            raise InvalidPrefixError(
                f"cluster {int(bad[0])} represents {int(load[bad[0]])} groups of feature "
                f"{groups.features[f]!r}; at most {int(caps[f])} allowed")


def build_model(problem: ClusteringProblem, centers, spec: FairnessSpec, variant=Variant.FMRA,
                y_fixed=None, cap_cuts: bool = True, aggregate: bool = True) -> FairAssignmentModel:
    """Compile the fair assignment problem at fixed ``centers`` into a mixed binary program.

    FMRA/RAP use the big-M representation rows with M = alpha*min(n, u); APFRC
    drops y and turns every pair with ``y_fixed[g, k]`` into a hard row
    ``sum_{X_g} z_ik >= alpha * sum_i z_ik``. With ``cap_cuts`` (FMRA/RAP, l >= 1)
    the valid rows ``sum_{g in G_f} y_gk <= floor(1/alpha)`` are added.

    With ``aggregate`` the model carries count columns t_ak = sum_{i in a} z_ik,
    one per atom a (points with identical labels on every feature) and cluster;
    cardinality and representation rows are written over t. For FMRA/APFRC the
    counts are integer and branched on before z: once they are integral the z
    part is a transportation problem, so its vertices are integral too.
    """
    variant = Variant(variant)
    groups = problem.groups
    n, K, G = problem.n, problem.K, groups.G
    spec.validate(groups, K)
    cost = problem.cost_matrix(centers)
    if cost.shape != (n, K):
        raise InvalidArgumentError(f"expected {K} centers")
    alphas = spec.alphas(groups)
    allowed = spec.allowed(G, K)
    u = spec.upper(n)

    lp = LinearProgram()
    z = lp.add_vars(cost.ravel(), 0.0, 1.0).reshape(n, K)
    # each point in exactly one cluster
    rows = np.repeat(np.arange(n), K)
    lp.add_rows(sparse.csr_matrix((np.ones(n * K), (rows, z.ravel())), shape=(n, lp.num_vars)), 1.0, 1.0)

    t = atom_of = None
    if aggregate:
        atom_of, atom_groups = groups.atoms()
        A = atom_groups.shape[0]
        size = np.bincount(atom_of, minlength=A).astype(float)
        t = lp.add_vars(np.zeros(A * K), 0.0, np.repeat(np.minimum(size, u), K)).reshape(A, K)
        # t_ak - sum_{i in a} z_ik = 0
        ri = np.concatenate([np.arange(A * K), (atom_of[:, None] * K + np.arange(K)).ravel()])
        ci = np.concatenate([t.ravel(), z.ravel()])
        data = np.concatenate([np.ones(A * K), -np.ones(n * K)])
        lp.add_rows(sparse.csr_matrix((data, (ri, ci)), shape=(A * K, lp.num_vars)), 0.0, 0.0)
        # column k of the "unit" matrix aggregates over atoms
        unit, unit_member = t, atom_groups.T.astype(float)
    else:
        unit, unit_member = z, groups.membership().astype(float)
    m_units = unit.shape[0]

    card = sparse.csr_matrix((np.ones(m_units * K), (np.tile(np.arange(K), m_units), unit.ravel())),
                             shape=(K, lp.num_vars))
    lp.add_rows(card, float(spec.card_lower), float(u))

    def rep_block(pairs, y_cols=None, m_vals=None):
        # sum_units (1[unit in X_g] - alpha_g) x_uk  (- M y_gk)
        data, ri, ci = [], [], []
        for r, (g, k) in enumerate(pairs):
            data.append(unit_member[g] - alphas[g])
            ri.append(np.full(m_units, r))
            ci.append(unit[:, k])
            if y_cols is not None:
                data.append([-m_vals[g]])
                ri.append([r])
                ci.append([y_cols[g, k]])
        if not pairs:
            return None
        return sparse.csr_matrix((np.concatenate(data), (np.concatenate(ri), np.concatenate(ci))),
                                 shape=(len(pairs), lp.num_vars))

    M = big_m(spec, groups, n)
    y_index = None
    y_fixed_arr = None
    integers = t.ravel() if (t is not None and variant is not Variant.RAP) else np.zeros(0, np.int64)
    if variant is Variant.APFRC:
        if y_fixed is None:
            raise InvalidArgumentError("APFRC needs a fixed representation matrix")
        y_fixed_arr = np.asarray(y_fixed, dtype=bool)
        if y_fixed_arr.shape != (G, K):
            raise InvalidArgumentError(f"y_fixed must have shape {(G, K)}")
        check_prefix(y_fixed_arr, spec, groups)
        pairs = [(g, k) for g in range(G) for k in range(K) if y_fixed_arr[g, k]]
        block = rep_block(pairs)
        if block is not None:
            lp.add_rows(block, 0.0, INF)
        binaries = z.ravel()
        priority = np.concatenate([np.zeros(n * K, int), np.ones(len(integers), int)])
    else:
        y_ub = allowed.astype(float).ravel()
        y_index = lp.add_vars(np.zeros(G * K), 0.0, y_ub).reshape(G, K)
        pairs = [(g, k) for g in range(G) for k in range(K) if allowed[g, k]]
        block = rep_block(pairs, y_index, M)
        if block is not None:
            lp.add_rows(block, -M[[g for g, _ in pairs]], INF)
        for g in range(G):
            if spec.beta[g] > 0:
                lp.add_constraint(y_index[g], np.ones(K), ">=", float(spec.beta[g]))
        if cap_cuts and spec.card_lower >= 1:
            caps = spec.feature_caps(groups)
            for f in range(groups.n_features):
                gs = groups.groups_of(f)
                if caps[f] < len(gs):
                    for k in range(K):
                        lp.add_constraint(y_index[gs, k], np.ones(len(gs)), "<=", float(caps[f]))
        if variant is Variant.FMRA:
            binaries = np.concatenate([z.ravel(), y_index.ravel()])
            priority = np.concatenate([np.zeros(n * K, int), np.full(G * K, 2),
                                       np.ones(len(integers), int)])
        else:
            binaries = y_index.ravel()
            priority = None
    lp.finalize()
    mbp = MixedBinaryProgram(lp, binaries, priority, integers)
    return FairAssignmentModel(variant, mbp, z, y_index, y_fixed_arr, M, cost, K, t, atom_of)


def _certificate(variant, spec: FairnessSpec, n):
    alpha = dict(spec.alpha) if not np.isscalar(spec.alpha) else float(spec.alpha)
    return InfeasibleCertificate(variant.value, alpha, tuple(int(b) for b in spec.beta),
                                 spec.card_lower, spec.card_upper)


def _decode(model: FairAssignmentModel, x: np.ndarray, objective: float, nodes: int) -> FairAssignment:
    z = x[model.z_index]
    if model.y_index is not None:
        y = np.round(x[model.y_index]).astype(bool)
    else:
        y = model.y_fixed.copy()
    if model.variant is Variant.RAP:
        return FairAssignment(z, y, objective, None, model.variant, nodes)
    assignment = np.argmax(z, axis=1)
    return FairAssignment(np.round(z), y, objective, assignment, model.variant, nodes)


def solve_model(model: FairAssignmentModel, spec: FairnessSpec, time_limit=None,
                warm_start=None, gap: float = 1e-9, node_limit: int | None = None) -> FairAssignment:
    """Solve by branch-and-bound. ``warm_start`` is an optional integral
    assignment (with ``y`` for FMRA/RAP as ``(assignment, y)``) used as the first
    incumbent when it is feasible. ``gap`` is the relative optimality tolerance."""
    x0 = None
    if warm_start is not None:
        if model.y_index is not None:
            x0 = model.vector(*warm_start)
        else:
            x0 = model.vector(warm_start)
    try:
        sol = solve_mbp(model.mbp, time_limit=time_limit, node_limit=node_limit, gap_tol=gap, incumbent=x0)
    except TimeLimitError as exc:
        inc = exc.incumbent
        if inc is not None and inc.x is not None:
            exc.incumbent = _decode(model, inc.x, inc.objective, inc.nodes)
        else:
            exc.incumbent = None
        raise
    if sol.status == "infeasible":
        n = model.z_index.shape[0]
        if model.variant is Variant.APFRC:
            raise PrefixInfeasibleError("no assignment meets the fixed representation constraints")
        raise InfeasibleError(_certificate(model.variant, spec, n))
    return _decode(model, sol.x, sol.objective, sol.nodes)


def solve_exact(problem: ClusteringProblem, centers, spec: FairnessSpec, variant=Variant.FMRA,
                y_fixed=None, time_limit=None, warm_start=None, gap: float = 1e-9) -> FairAssignment:
    """Build and solve the chosen model exactly.

    FMRA/APFRC return an integral assignment; RAP returns binary y with the
    fractional z of the relaxed assignment. Infeasible FMRA/RAP raises
    :class:`InfeasibleError` carrying the certificate; infeasible APFRC raises
    :class:`PrefixInfeasibleError`.
    """
    model = build_model(problem, centers, spec, variant, y_fixed)
    result = solve_model(model, spec, time_limit, warm_start, gap)
    if result.assignment is not None:
        result.objective = clustering_cost(result.assignment, centers, problem)
    return result


def lp_relax_solve(model: FairAssignmentModel | MixedBinaryProgram) -> LPSolution:
    """Solve the LP relaxation (all binary flags dropped) to a basic optimal solution."""
    mbp = model.mbp if isinstance(model, FairAssignmentModel) else model
    sol = solve_lp(mbp.lp)
    return sol


def relaxed_assignment(problem: ClusteringProblem, centers, spec: FairnessSpec, y_fixed) -> tuple[np.ndarray, float]:
    """Fractional APFRC optimum z^LP (n, K) and its objective."""
    model = build_model(problem, centers, spec, Variant.APFRC, y_fixed, aggregate=False)
    sol = lp_relax_solve(model)
    if sol.status == "infeasible":
        raise PrefixInfeasibleError("LP relaxation of the fixed-representation assignment is infeasible")
    if not sol.optimal:
        raise ClusteringError(f"relaxation is {sol.status}")
    return sol.x[model.z_index], sol.objective
