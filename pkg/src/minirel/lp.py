"""Linear programs with basic optimal solutions and branch-and-bound over binaries.

LP relaxations are solved with the HiGHS dual simplex (via ``highspy``), which
returns vertex solutions together with a basis. Branch-and-bound keeps one
HiGHS instance per search and only changes column bounds between nodes, so
each node is a warm-started re-solve.
"""

from __future__ import annotations

import heapq
import io
import itertools
import math
import time
from dataclasses import dataclass, field

import highspy
import numpy as np
from scipy import sparse

from .core import ClusteringError

INF = math.inf
FEAS_TOL = 1e-7
INT_TOL = 1e-6


class LPError(ClusteringError):
    """Numerical failure or iteration cap hit inside the LP solver."""


class TimeLimitError(ClusteringError):
    """Branch-and-bound ran out of time; ``incumbent`` is the best solution found (or None)."""

    def __init__(self, message, incumbent=None):
        super().__init__(message)
        self.incumbent = incumbent


@dataclass
class LinearProgram:
    """min c.x s.t. row_lo <= A x <= row_hi, lb <= x <= ub.

    Build incrementally with :meth:`add_vars` / :meth:`add_constraint`, or pass
    arrays directly. One-sided rows use +-inf.
    """

    c: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lb: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ub: np.ndarray = field(default_factory=lambda: np.zeros(0))
    A: sparse.csr_matrix | None = None
    row_lo: np.ndarray = field(default_factory=lambda: np.zeros(0))
    row_hi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    names: list | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        self.row_lo = np.asarray(self.row_lo, dtype=float)
        self.row_hi = np.asarray(self.row_hi, dtype=float)
        if self.A is None:
            self.A = sparse.csr_matrix((len(self.row_lo), len(self.c)))
        else:
            self.A = sparse.csr_matrix(self.A, dtype=float)
        self._pending = []

    @property
    def num_vars(self) -> int:
        return len(self.c)

    @property
    def num_rows(self) -> int:
        self._flush()
        return self.A.shape[0]

    def add_vars(self, cost, lb=0.0, ub=INF, names=None) -> np.ndarray:
        """Append variables; returns their indices."""
        self._flush()
        cost = np.atleast_1d(np.asarray(cost, dtype=float))
        k = len(cost)
        start = len(self.c)
        self.c = np.concatenate([self.c, cost])
        self.lb = np.concatenate([self.lb, np.broadcast_to(np.asarray(lb, float), (k,))])
        self.ub = np.concatenate([self.ub, np.broadcast_to(np.asarray(ub, float), (k,))])
        self.A = sparse.hstack([self.A, sparse.csr_matrix((self.A.shape[0], k))], format="csr")
        if names is not None or self.names is not None:
            self.names = (self.names or [f"x{j}" for j in range(start)]) + (
                list(names) if names is not None else [f"x{j}" for j in range(start, start + k)])
        return np.arange(start, start + k)

    def add_constraint(self, cols, vals, sense: str, rhs: float) -> int:
        """Add ``sum(vals * x[cols]) (<=|>=|=) rhs``; returns the row index."""
        lo, hi = {"<=": (-INF, rhs), ">=": (rhs, INF), "=": (rhs, rhs), "==": (rhs, rhs)}[sense]
        return self.add_range(cols, vals, lo, hi)

    def add_range(self, cols, vals, lo: float, hi: float) -> int:
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.broadcast_to(np.asarray(vals, dtype=float), cols.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("constraint coefficients must be finite")
        self._pending.append((cols, np.array(vals), float(lo), float(hi)))
        return self.A.shape[0] + len(self._pending) - 1

    def add_rows(self, A_block, lo, hi) -> np.ndarray:
        """Append a block of rows given as a sparse matrix with bound vectors."""
        self._flush()
        A_block = sparse.csr_matrix(A_block, dtype=float)
        start = self.A.shape[0]
        self.A = sparse.vstack([self.A, A_block], format="csr")
        m = A_block.shape[0]
        self.row_lo = np.concatenate([self.row_lo, np.broadcast_to(np.asarray(lo, float), (m,))])
        self.row_hi = np.concatenate([self.row_hi, np.broadcast_to(np.asarray(hi, float), (m,))])
        return np.arange(start, start + m)

    def _flush(self):
        if not self._pending:
            return
        rows, cols, vals = [], [], []
        for r, (c, v, _, _) in enumerate(self._pending):
            rows.append(np.full(len(c), r))
            cols.append(c)
            vals.append(v)
        block = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(len(self._pending), len(self.c)))
        lo = np.array([p[2] for p in self._pending])
        hi = np.array([p[3] for p in self._pending])
        self._pending = []
        self.add_rows(block, lo, hi)

    def finalize(self) -> "LinearProgram":
        self._flush()
        if np.any(self.lb > self.ub):
            raise ValueError("inconsistent variable bounds")
        return self

    def copy(self) -> "LinearProgram":
        self._flush()
        return LinearProgram(self.c.copy(), self.lb.copy(), self.ub.copy(), self.A.copy(),
                             self.row_lo.copy(), self.row_hi.copy(),
                             None if self.names is None else list(self.names))

    def activity(self, x) -> np.ndarray:
        self._flush()
        return self.A @ np.asarray(x, dtype=float)

    def max_violation(self, x) -> float:
        """Largest bound or row violation of x (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        act = self.activity(x)
        parts = [np.maximum(self.lb - x, 0), np.maximum(x - self.ub, 0),
                 np.maximum(self.row_lo - act, 0), np.maximum(act - self.row_hi, 0)]
        return float(max((p.max() if p.size else 0.0) for p in parts))


@dataclass
class MixedBinaryProgram:
    """An LP plus the indices of variables restricted to {0, 1}, and optionally
    general integer variables (``integers``).

    ``priority`` (optional) has one entry per branching variable, binaries first
    and then integers; fractional variables of the highest priority class are
    branched first.
    """

    lp: LinearProgram
    binaries: np.ndarray
    priority: np.ndarray | None = None
    integers: np.ndarray | None = None

    def __post_init__(self):
        self.lp.finalize()
        self.binaries = np.asarray(self.binaries, dtype=np.int64)
        if np.any(self.lp.lb[self.binaries] < 0) or np.any(self.lp.ub[self.binaries] > 1):
            raise ValueError("binary variables need bounds within [0, 1]")
        self.integers = np.zeros(0, np.int64) if self.integers is None else \
            np.asarray(self.integers, dtype=np.int64)
        if self.priority is not None:
            self.priority = np.asarray(self.priority, dtype=np.int64)
            if len(self.priority) != len(self.branch_vars):
                raise ValueError("priority needs one entry per binary and integer variable")

    @property
    def branch_vars(self) -> np.ndarray:
        return np.concatenate([self.binaries, self.integers])


@dataclass
class LPSolution:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    basic: np.ndarray | None = None
    nodes: int = 0
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


_STATUS = {
    highspy.HighsModelStatus.kOptimal: "optimal",
    highspy.HighsModelStatus.kInfeasible: "infeasible",
    highspy.HighsModelStatus.kUnbounded: "unbounded",
}


def _inf(v):
    v = np.asarray(v, dtype=float).copy()
    v[v == INF] = highspy.kHighsInf
    v[v == -INF] = -highspy.kHighsInf
    return v


def _new_highs(lp: LinearProgram, iteration_limit: int | None, presolve: bool = True) -> highspy.Highs:
    lp.finalize()
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("solver", "simplex")
    h.setOptionValue("presolve", "on" if presolve else "off")
    h.setOptionValue("primal_feasibility_tolerance", FEAS_TOL)
    h.setOptionValue("dual_feasibility_tolerance", FEAS_TOL)
    h.setOptionValue("random_seed", 0)
    if iteration_limit is not None:
        h.setOptionValue("simplex_iteration_limit", int(iteration_limit))
    model = highspy.HighsLp()
    model.num_col_ = lp.num_vars
    model.num_row_ = lp.A.shape[0]
    model.col_cost_ = lp.c.copy()
    model.col_lower_ = _inf(lp.lb)
    model.col_upper_ = _inf(lp.ub)
    model.row_lower_ = _inf(lp.row_lo)
    model.row_upper_ = _inf(lp.row_hi)
    A = lp.A.tocsc()
    A.sort_indices()
    model.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    model.a_matrix_.start_ = A.indptr.astype(np.int32)
    model.a_matrix_.index_ = A.indices.astype(np.int32)
    model.a_matrix_.value_ = A.data.astype(float)
    h.passModel(model)
    return h


def _collect(h: highspy.Highs, lp: LinearProgram) -> LPSolution:
    status = h.getModelStatus()
    iters = int(h.getInfo().simplex_iteration_count)
    if status == highspy.HighsModelStatus.kIterationLimit:
        raise LPError("simplex iteration limit reached")
    if status == highspy.HighsModelStatus.kUnboundedOrInfeasible:
        # presolve could not tell which; settle it without presolve
        h.setOptionValue("presolve", "off")
        h.clearSolver()
        h.run()
        status = h.getModelStatus()
        h.setOptionValue("presolve", "on")
    name = _STATUS.get(status)
    if name is None:
        raise LPError(f"LP solve failed with status {h.modelStatusToString(status)}")
    if name != "optimal":
        return LPSolution(name, iterations=iters)
    x = np.array(h.getSolution().col_value, dtype=float)
    basis = h.getBasis()
    basic = np.array([s == highspy.HighsBasisStatus.kBasic for s in basis.col_status], dtype=bool) \
        if basis.valid else None
    return LPSolution("optimal", x, float(lp.c @ x), basic, iterations=iters)


def solve_lp(lp: LinearProgram, iteration_limit: int | None = 1_000_000) -> LPSolution:
    """Solve an LP to a basic optimal solution (or report infeasible/unbounded)."""
    h = _new_highs(lp, iteration_limit)
    h.run()
    return _collect(h, lp)


class _Node:
    __slots__ = ("bound", "depth", "changes")

    def __init__(self, bound, depth, changes):
        self.bound = bound
        self.depth = depth
        self.changes = changes  # tuple of (var, lo, hi); later entries win


def _pick_branch(x, branch_vars, priority):
    vals = x[branch_vars]
    frac = np.abs(vals - np.round(vals))
    cand = frac > INT_TOL
    if not np.any(cand):
        return None
    if priority is not None:
        top = priority[cand].max()
        cand &= priority == top
    score = np.where(cand, frac, -1.0)
    return int(branch_vars[int(np.argmax(score))])


def solve_mbp(mbp: MixedBinaryProgram, time_limit: float | None = None,
              node_limit: int | None = None, gap_tol: float = 1e-9,
              incumbent=None) -> LPSolution:
    """Branch-and-bound for a mixed binary (or mixed integer) program.

    Nodes are bounded by their LP relaxation; the open node with the lowest bound
    is selected next, and after each branching the search plunges into the child
    on the side the LP value leans to. Branching picks the most fractional
    variable (ties to the lowest index, highest ``priority`` class first).
    Returned integer values are exactly integral.

    ``incumbent`` is an optional feasible starting solution; it is ignored if it
    violates a constraint or an integrality requirement.

    Raises :class:`TimeLimitError` (carrying the incumbent) when ``time_limit``
    seconds or ``node_limit`` nodes are exhausted before optimality is proven.
    """
    lp = mbp.lp.finalize()
    start = time.perf_counter()
    h = _new_highs(lp, None)
    branch_vars = mbp.branch_vars
    priority = mbp.priority
    root_lb = lp.lb.copy()
    root_ub = lp.ub.copy()

    applied = {}

    def apply(node):
        want = {}
        for j, lo, hi in node.changes:
            want[j] = (lo, hi)
        reset = [j for j in applied if j not in want]
        if reset:
            idx = np.array(reset, dtype=np.int32)
            h.changeColsBounds(len(idx), idx, _inf(root_lb[idx]), _inf(root_ub[idx]))
        upd = [j for j, b in want.items() if applied.get(j) != b]
        if upd:
            idx = np.array(upd, dtype=np.int32)
            h.changeColsBounds(len(idx), idx, _inf([want[j][0] for j in upd]), _inf([want[j][1] for j in upd]))
        applied.clear()
        applied.update(want)

    def solve_node(node):
        apply(node)
        h.run()
        return _collect(h, lp)

    inc_obj = INF
    if incumbent is not None:
        x0 = np.asarray(incumbent, dtype=float).copy()
        x0[branch_vars] = np.round(x0[branch_vars])
        if len(x0) == lp.num_vars and lp.max_violation(x0) <= FEAS_TOL:
            incumbent, inc_obj = x0, float(lp.c @ x0)
        else:
            incumbent = None
    nodes = 0
    iters = 0
    counter = itertools.count()
    heap = []
    root = _Node(-INF, 0, ())
    root_obj = None
    plunge = root
    trail = [] if incumbent is None else [(0, inc_obj)]

    def prune(bound):
        return bound >= inc_obj - gap_tol * max(1.0, abs(inc_obj))

    stack = []  # depth-first until the first incumbent, then best-first

    def pop():
        if incumbent is None and stack:
            return stack.pop()
        if stack:
            for nd in stack:
                heapq.heappush(heap, (nd.bound, next(counter), nd))
            stack.clear()
        return heapq.heappop(heap)[2]

    while plunge is not None or heap or stack:
        if plunge is None:
            node = pop()
            if prune(node.bound):
                continue
        else:
            node, plunge = plunge, None
        if time_limit is not None and time.perf_counter() - start > time_limit:
            raise TimeLimitError(f"time limit {time_limit}s reached after {nodes} nodes",
                                 _stopped(incumbent, lp, nodes, iters, "time_limit", node, heap + [(nd.bound, 0, nd) for nd in stack], trail))
        if node_limit is not None and nodes >= node_limit:
            raise TimeLimitError(f"node limit {node_limit} reached",
                                 _stopped(incumbent, lp, nodes, iters, "node_limit", node, heap + [(nd.bound, 0, nd) for nd in stack], trail))
        sol = solve_node(node)
        nodes += 1
        iters += sol.iterations
        if sol.status == "unbounded":
            if node is root:
                return LPSolution("unbounded", nodes=nodes, iterations=iters)
            continue
        if sol.status != "optimal":
            continue
        if node is root:
            root_obj = sol.objective
        if prune(sol.objective):
            continue
        j = _pick_branch(sol.x, branch_vars, priority)
        if j is None:
            incumbent, inc_obj = sol.x.copy(), sol.objective
            trail.append((nodes, inc_obj))
            continue
        v = sol.x[j]
        lo, hi = _current_bounds(node, j, root_lb[j], root_ub[j])
        up = _Node(sol.objective, node.depth + 1, node.changes + ((j, math.ceil(v), hi),))
        down = _Node(sol.objective, node.depth + 1, node.changes + ((j, lo, math.floor(v)),))
        first, second = (up, down) if v - math.floor(v) >= 0.5 else (down, up)
        if incumbent is None:
            stack.append(second)
        else:
            heapq.heappush(heap, (second.bound, next(counter), second))
        plunge = first

    result = _finish(incumbent, lp, nodes, iters, "optimal" if incumbent is not None else "infeasible")
    result.info["root_objective"] = root_obj
    result.info["incumbents"] = trail
    if incumbent is not None:
        x = result.x
        x[branch_vars] = np.round(x[branch_vars])
        result.objective = float(lp.c @ x)
    return result


def _current_bounds(node, j, lo, hi):
    for v, a, b in node.changes:
        if v == j:
            lo, hi = a, b
    return lo, hi


def _stopped(incumbent, lp, nodes, iters, status, node, heap, trail):
    res = _finish(incumbent, lp, nodes, iters, status)
    bounds = [node.bound] + [b for b, _, _ in heap]
    res.info["best_bound"] = float(min(bounds))
    res.info["incumbents"] = trail
    return res


def _finish(incumbent, lp, nodes, iters, status):
    if incumbent is None:
        return LPSolution(status if status != "optimal" else "infeasible", nodes=nodes, iterations=iters)
    return LPSolution(status, incumbent.copy(), float(lp.c @ incumbent), nodes=nodes, iterations=iters)


def relax(mbp: MixedBinaryProgram) -> LinearProgram:
    """The LP relaxation (binary flags dropped, [0, 1] bounds kept)."""
    return mbp.lp.copy()


def fractional_support_count(lp: LinearProgram, point_vars: np.ndarray, tol: float = 1e-9) -> int:
    """Count points with a fractional assignment after fixing the integral ones.

    Solves ``lp``, fixes every variable of ``point_vars`` (an (n, K) index array)
    whose value is within ``tol`` of 0 or 1, re-solves, and counts the rows of
    ``point_vars`` that still carry a fractional value.
    """
    sol = solve_lp(lp)
    if not sol.optimal:
        raise LPError(f"relaxation is {sol.status}")
    point_vars = np.asarray(point_vars)
    vals = sol.x[point_vars]
    integral = np.abs(vals - np.round(vals)) <= tol
    fixed = lp.copy()
    idx = point_vars[integral]
    fixed.lb[idx] = np.round(sol.x[idx])
    fixed.ub[idx] = np.round(sol.x[idx])
    resol = solve_lp(fixed)
    if not resol.optimal:
        raise LPError(f"re-solve is {resol.status}")
    vals = resol.x[point_vars]
    frac = np.abs(vals - np.round(vals)) > tol
    return int(np.any(frac, axis=1).sum())


def _fmt(v: float) -> str:
    return repr(float(v))


def write_lp(lp: LinearProgram, out=None, binaries=()) -> str:
    """Dump in CPLEX LP text format (Minimize / Subject To / Bounds / Binaries / End).

    Variables are named ``x<j>`` unless ``lp.names`` is set; rows ``r<i>``. Ranged
    rows are written as two one-sided rows ``r<i>_lo`` and ``r<i>_hi``.
    """
    lp.finalize()
    names = lp.names or [f"x{j}" for j in range(lp.num_vars)]
    buf = io.StringIO()

    def expr(cols, vals):
        terms = [f"{'+' if v >= 0 else '-'} {_fmt(abs(v))} {names[j]}" for j, v in zip(cols, vals)]
        return " ".join(terms) if terms else "0 " + names[0]

    nz = np.flatnonzero(lp.c)
    buf.write("Minimize\n obj: " + expr(nz, lp.c[nz]) + "\nSubject To\n")
    A = lp.A.tocsr()
    for i in range(A.shape[0]):
        row = A.getrow(i)
        e = expr(row.indices, row.data)
        lo, hi = lp.row_lo[i], lp.row_hi[i]
        if lo == hi:
            buf.write(f" r{i}: {e} = {_fmt(lo)}\n")
            continue
        if lo > -INF and hi < INF:
            buf.write(f" r{i}_lo: {e} >= {_fmt(lo)}\n r{i}_hi: {e} <= {_fmt(hi)}\n")
        elif lo > -INF:
            buf.write(f" r{i}: {e} >= {_fmt(lo)}\n")
        elif hi < INF:
            buf.write(f" r{i}: {e} <= {_fmt(hi)}\n")
    buf.write("Bounds\n")
    for j in range(lp.num_vars):
        lo = "-inf" if lp.lb[j] == -INF else _fmt(lp.lb[j])
        hi = "+inf" if lp.ub[j] == INF else _fmt(lp.ub[j])
        buf.write(f" {lo} <= {names[j]} <= {hi}\n")
    if len(binaries):
        buf.write("Binaries\n " + " ".join(names[j] for j in binaries) + "\n")
    buf.write("End\n")
    text = buf.getvalue()
    if out is not None:
        if hasattr(out, "write"):
            out.write(text)
        else:
            with open(out, "w") as fh:
                fh.write(text)
    return text
