"""MiniReL: alternate fair assignment and center updates until the cost stops moving."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import (ClusteringError, ClusteringProblem, ClusteringSolution, FairnessSpec,
                   InvalidArgumentError, clustering_cost, fairness_metrics, representation_matrix)
from .flow import round_assignment
from .lloyd import as_rng, center_step, greedy_assign, init_centers, lloyd_run
from .lp import TimeLimitError
from .models import (PrefixInfeasibleError, Variant, build_model, relaxed_assignment, solve_model)
from .prefix import CostKind, myopic_costs, solve_prefix

DEFAULT_GAP = 1e-3
SEED_NODES = 200


class Strategy(str, Enum):
    FULL_IP = "full_ip"
    TWO_STAGE_IP = "two_stage_ip"
    TWO_STAGE_FLOW = "two_stage_flow"
    PREFIX_FLOW = "prefix_flow"
    PREFIX_HEUR_FLOW = "prefix_heur_flow"
    FIXED_CENTER_ADJUST = "fixed_center_adjust"
    PREFIX_IP = "prefix_ip"
    PREFIX_HEUR_IP = "prefix_heur_ip"

    @property
    def exact(self) -> bool:
        """Ends with zero fairness violation (as opposed to a bounded one)."""
        return self not in (Strategy.TWO_STAGE_FLOW, Strategy.PREFIX_FLOW, Strategy.PREFIX_HEUR_FLOW)

    @property
    def prefixed(self) -> bool:
        return self in (Strategy.PREFIX_FLOW, Strategy.PREFIX_HEUR_FLOW, Strategy.PREFIX_IP,
                        Strategy.PREFIX_HEUR_IP)

    @property
    def heuristic_prefix(self) -> bool:
        return self in (Strategy.PREFIX_HEUR_FLOW, Strategy.PREFIX_HEUR_IP)

    @property
    def flow(self) -> bool:
        return not self.exact


@dataclass
class IterationRecord:
    current_cost: float
    improved_cost: float
    changed: bool
    timings: dict
    solver_status: str = "optimal"


@dataclass
class RunTrace:
    iterations: list = field(default_factory=list)
    status: str = "running"
    prefix_time: float = 0.0
    reprefixes: int = 0

    @property
    def costs(self) -> list:
        return [r.improved_cost for r in self.iterations]

    @property
    def n_iter(self) -> int:
        return len(self.iterations)


def warm_start(problem: ClusteringProblem, rng=None, mode: str = "lloyd") -> np.ndarray:
    """Initial centers: final centers of an unconstrained Lloyd run (``lloyd``),
    k-means++ seeding only (``kmeans++``), or K distinct uniform points (``random``)."""
    rng = as_rng(rng)
    if mode == "lloyd":
        return lloyd_run(problem, rng=rng).centers
    if mode == "kmeans++":
        return init_centers(problem, rng=rng)
    if mode == "random":
        idx = rng.choice(problem.n, size=problem.K, replace=False)
        return problem.points[np.sort(idx)].copy()
    raise InvalidArgumentError(f"unknown warm-start mode {mode!r}")


class _Clock:
    def __init__(self, limit):
        self.start = time.perf_counter()
        self.limit = limit

    def remaining(self):
        if self.limit is None:
            return None
        return max(self.limit - (time.perf_counter() - self.start), 1e-3)

    def expired(self):
        return self.limit is not None and time.perf_counter() - self.start >= self.limit


class _Assigner:
    """Fair assignment step for one strategy, holding the pre-fixed y where needed."""

    def __init__(self, problem, spec, strategy, prefix_kind, mip_gap, clock, trace, node_limit=None):
        self.problem = problem
        self.node_limit = node_limit
        self.spec = spec
        self.strategy = strategy
        self.prefix_kind = CostKind(prefix_kind)
        self.mip_gap = mip_gap
        self.clock = clock
        self.trace = trace
        self.y = None
        self._rap_cache = None

    # representation matrix --------------------------------------------------
    def choose_y(self, centers, assignment):
        t0 = time.perf_counter()
        if self.strategy.heuristic_prefix:
            if assignment is None:
                assignment = greedy_assign(self.problem, centers)
            costs = myopic_costs(self.problem, centers, assignment, self.spec, self.prefix_kind)
            y = solve_prefix(costs, self.spec, self.problem.K, self.problem.groups).y
        else:
            y = self.solve_rap(centers, assignment)
        self.trace.prefix_time += time.perf_counter() - t0
        return y

    def solve_rap(self, centers, assignment):
        key = np.asarray(centers, dtype=float).tobytes()
        if self._rap_cache is not None and self._rap_cache[0] == key:
            return self._rap_cache[1]
        model = build_model(self.problem, centers, self.spec, Variant.RAP)
        warm = None
        if assignment is not None:
            warm = (assignment, self._y_of(assignment))
        res = self._solve(model, warm)
        self._rap_cache = (key, res.y)
        return res.y

    def _y_of(self, assignment):
        """Represented (and allowed) pairs of an integral assignment."""
        groups = self.problem.groups
        rep = representation_matrix(assignment, groups, self.spec.alphas(groups), self.problem.K)
        return rep & self.spec.allowed(self.problem.groups.G, self.problem.K)

    def _solve(self, model, warm, node_limit=None, quiet=False):
        limit = self.node_limit if node_limit is None else node_limit
        try:
            return solve_model(model, self.spec, self.clock.remaining(), warm, gap=self.mip_gap,
                               node_limit=limit)
        except TimeLimitError as exc:
            if exc.incumbent is None:
                raise
            if not quiet:
                self.status = "node_limit" if str(exc).startswith("node limit") else "time_limit"
            return exc.incumbent

    def heuristic_seed(self, centers):
        """Feasible FMRA start: heuristic pre-fixed y, then a short APFRC search."""
        try:
            assignment = greedy_assign(self.problem, centers)
            costs = myopic_costs(self.problem, centers, assignment, self.spec, self.prefix_kind)
            y = solve_prefix(costs, self.spec, self.problem.K, self.problem.groups).y
            model = build_model(self.problem, centers, self.spec, Variant.APFRC, y)
            res = self._solve(model, None, node_limit=SEED_NODES, quiet=True)
        except (PrefixInfeasibleError, TimeLimitError):
            return None
        return res.assignment, y

    # assignment ---------------------------------------------------------------
    def assign(self, centers, previous):
        """New assignment at ``centers``; ``previous`` seeds the IP incumbent."""
        self.status = "optimal"
        s = self.strategy
        if s in (Strategy.FULL_IP, Strategy.FIXED_CENTER_ADJUST):
            return self.full_ip(centers, previous)
        if not s.prefixed:
            self.y = self.solve_rap(centers, previous)
        elif self.y is None:
            self.y = self.choose_y(centers, previous)
        try:
            return self.second_stage(centers, previous)
        except PrefixInfeasibleError:
            if s.prefixed and self.trace.reprefixes == 0:
                # stale pre-fixed y: choose it again once at the current centers
                self.trace.reprefixes += 1
                self.y = self.choose_y(centers, previous)
                return self.second_stage(centers, previous)
            if not s.prefixed and s.exact:
                self.status = "fmra_fallback"
                return self.full_ip(centers, previous)
            raise

    def full_ip(self, centers, previous):
        model = build_model(self.problem, centers, self.spec, Variant.FMRA)
        if previous is not None:
            warm = (previous, self._y_of(previous))
        else:
            warm = self.heuristic_seed(centers)
        res = self._solve(model, warm)
        return res.assignment, res.y

    def second_stage(self, centers, previous):
        if self.strategy.flow:
            z_lp, _ = relaxed_assignment(self.problem, centers, self.spec, self.y)
            res = round_assignment(self.problem, centers, self.spec, self.y, z_lp)
            return res.assignment, self.y
        model = build_model(self.problem, centers, self.spec, Variant.APFRC, self.y)
        res = self._solve(model, previous)
        return res.assignment, self.y


def minirel_run(problem: ClusteringProblem, spec: FairnessSpec, strategy=Strategy.FULL_IP, rng=None,
                init=None, max_iter: int = 100, time_limit: float | None = None,
                prefix_kind="local", mip_gap: float = DEFAULT_GAP, warm_mode: str = "lloyd",
                node_limit: int | None = None):
    """Run MiniReL from ``init`` centers (default: :func:`warm_start`).

    Each iteration solves the fair assignment at the current centers
    (current_cost), recomputes the centers (improved_cost), and stops once the
    two are equal. A new assignment that costs more at the current centers than
    the previous one is discarded in favour of the previous one, so the cost
    never increases. ``time_limit`` bounds the whole run; an IP solve cut short
    keeps its incumbent and the run stops after that iteration. ``node_limit``
    caps each branch-and-bound solve the same way but deterministically: the run
    continues with the incumbent, and "converged" then means a fixed point of
    the truncated search.

    Returns ``(ClusteringSolution, RunTrace)``. IP strategies raise
    :class:`~minirel.models.InfeasibleError` when no fair clustering exists.
    """
    strategy = Strategy(strategy)
    if problem.K > problem.n:
        raise InvalidArgumentError(f"K={problem.K} exceeds n={problem.n}")
    spec.validate(problem.groups, problem.K)
    clock = _Clock(time_limit)
    rng = as_rng(rng)
    trace = RunTrace()
    t0 = time.perf_counter()
    centers = warm_start(problem, rng, warm_mode) if init is None else np.array(init, dtype=float)
    if centers.ndim == 1:
        centers = centers[:, None]
    warm_time = time.perf_counter() - t0
    assigner = _Assigner(problem, spec, strategy, prefix_kind, mip_gap, clock, trace, node_limit)

    # the greedy assignment at the start centers seeds the first IP solve when it is fair
    previous = seed_for_guard = None
    y = None
    start_assign = greedy_assign(problem, centers)
    sizes = np.bincount(start_assign, minlength=problem.K)
    if fairness_metrics(start_assign, spec, problem.groups, problem.K).max_deviation == 0 and \
            np.all(sizes >= spec.card_lower) and np.all(sizes <= spec.upper(problem.n)):
        previous = seed_for_guard = start_assign
        y = assigner._y_of(start_assign)
    for it in range(max_iter):
        t_a = time.perf_counter()
        assignment, y_new = assigner.assign(centers, previous)
        t_assign = time.perf_counter() - t_a
        current_cost = clustering_cost(assignment, centers, problem)
        if seed_for_guard is not None:
            prev_cost_at = clustering_cost(seed_for_guard, centers, problem)
            if current_cost > prev_cost_at:
                assignment, y_new, current_cost = seed_for_guard, y, prev_cost_at
        changed = seed_for_guard is None or not np.array_equal(assignment, seed_for_guard)
        y = y_new
        t_c = time.perf_counter()
        if strategy is Strategy.FIXED_CENTER_ADJUST:
            new_centers = centers
        else:
            new_centers = center_step(problem, assignment)
        improved_cost = clustering_cost(assignment, new_centers, problem)
        t_center = time.perf_counter() - t_c
        trace.iterations.append(IterationRecord(current_cost, improved_cost, changed,
                                                {"assign": t_assign, "center": t_center}, assigner.status))
        centers = new_centers
        previous = seed_for_guard = assignment
        if strategy is Strategy.FIXED_CENTER_ADJUST:
            trace.status = "fixed_centers"
            break
        # a solve cut short by the clock does not certify a fixed point
        if improved_cost == current_cost and assigner.status != "time_limit":
            trace.status = "converged"
            break
        if assigner.status == "time_limit" or clock.expired():
            trace.status = "time_limit"
            break
    else:
        trace.status = "max_iter"
    info = {"trace": trace, "strategy": strategy.value, "warm_time": warm_time,
            "total_time": time.perf_counter() - t0 + 0.0}
    sol = ClusteringSolution(assignment, centers, clustering_cost(assignment, centers, problem), y, info)
    return sol, trace


def fixed_point_check(problem: ClusteringProblem, spec: FairnessSpec, solution: ClusteringSolution,
                      strategy=Strategy.FULL_IP, prefix_kind="local", mip_gap: float = DEFAULT_GAP,
                      y=None) -> tuple[float, float]:
    """One extra assignment + center step from a finished run.

    Returns ``(cost_before, cost_after)``; at a fixed point they are equal. The
    same incumbent rule as the main loop applies, and pre-fixed strategies reuse
    ``y`` (default: the solution's y).
    """
    strategy = Strategy(strategy)
    trace = RunTrace()
    assigner = _Assigner(problem, spec, strategy, prefix_kind, mip_gap, _Clock(None), trace)
    if strategy.prefixed:
        assigner.y = solution.y if y is None else np.asarray(y, dtype=bool)
    before = clustering_cost(solution.assignment, solution.centers, problem)
    assignment, _ = assigner.assign(solution.centers, solution.assignment)
    if clustering_cost(assignment, solution.centers, problem) > before:
        assignment = solution.assignment
    if strategy is Strategy.FIXED_CENTER_ADJUST:
        centers = solution.centers
    else:
        centers = center_step(problem, assignment)
    return before, clustering_cost(assignment, centers, problem)


def unfair_baseline(problem: ClusteringProblem, rng=None, max_iter: int = 300) -> ClusteringSolution:
    """Plain Lloyd run (the unconstrained baseline)."""
    return lloyd_run(problem, rng=rng, max_iter=max_iter)
