"""Rounding a fractional fixed-representation assignment through a min-cost flow.

Network layout (node ids in this order):

* one supply node per point (supply 1);
* per cluster k with positive LP mass, one node per combination cell, with
  demand floor(LP mass of the cell);
* one node v_k per such cluster with demand floor(mass_k) - sum of its cell demands;
* a sink with the remaining demand n - sum floor(mass_k).

Arcs: point -> the cell of cluster k it falls into (capacity 1, cost D(x, c_k)),
cell -> v_k (capacity 1, cost 0), and v_k -> sink (capacity 1, cost 0) only
when mass_k is fractional.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import ClusteringError, ClusteringProblem, FairnessSpec, InvalidArgumentError, clustering_cost
from .core import floor_inv

REMAINDER = None
MASS_TOL = 1e-6


class FlowInfeasibleError(ClusteringError):
    """No flow meets all demands; the fractional input was not feasible."""


@dataclass
class Cell:
    """Combination cell of cluster k: per feature of ``features`` either a
    represented group index or REMAINDER (outside every represented group)."""

    cluster: int
    features: tuple
    choice: tuple
    members: np.ndarray


def enumerate_cells(y_column, groups, cluster: int = 0) -> list[Cell]:
    """Cells of one cluster for the represented groups in ``y_column`` (length G).

    Features with no represented group are ignored. For each remaining feature
    the options are its represented groups, plus REMAINDER when those do not
    cover the whole feature. The cells partition the data set.
    """
    y_column = np.asarray(y_column, dtype=bool)
    if y_column.shape != (groups.G,):
        raise InvalidArgumentError(f"y column must have length {groups.G}")
    feats, options, outside = [], [], []
    for f in range(groups.n_features):
        gs = groups.groups_of(f)
        rep = [g for g in gs if y_column[g]]
        if not rep:
            continue
        feats.append(f)
        opts = list(rep)
        if len(rep) < len(gs):
            opts.append(REMAINDER)
        options.append(opts)
        outside.append(rep)
    n = groups.n
    if not feats:
        return [Cell(cluster, (), (), np.arange(n))]
    member = groups.membership()
    cells = []
    for combo in itertools.product(*options):
        mask = np.ones(n, dtype=bool)
        for opt, rep in zip(combo, outside):
            if opt is REMAINDER:
                mask &= ~member[rep].any(axis=0)
            else:
                mask &= member[opt]
        cells.append(Cell(cluster, tuple(feats), tuple(combo), np.flatnonzero(mask)))
    return cells


@dataclass
class FlowNetwork:
    """Node balances (positive = supply, negative = demand) and arc arrays."""

    balance: np.ndarray
    tail: np.ndarray
    head: np.ndarray
    capacity: np.ndarray
    cost: np.ndarray
    n_points: int = 0
    cells: list = field(default_factory=list)
    cell_nodes: list = field(default_factory=list)
    cluster_nodes: dict = field(default_factory=dict)
    sink: int = -1
    point_arcs: np.ndarray | None = None  # (n, K) arc id of point -> cell of cluster k, -1 if absent

    @property
    def n_nodes(self) -> int:
        return len(self.balance)

    @property
    def n_arcs(self) -> int:
        return len(self.tail)

    def check_balanced(self) -> None:
        if int(self.balance.sum()) != 0:
            raise ClusteringError(f"network supplies and demands differ by {int(self.balance.sum())}")


def _floor(v: float) -> int:
    return math.floor(v + MASS_TOL)


def _fractional(v: float) -> bool:
    return abs(v - round(v)) > MASS_TOL


def build_network(z_lp, y, problem: ClusteringProblem, centers) -> FlowNetwork:
    """Flow network for rounding ``z_lp`` (n, K) under representation matrix ``y`` (G, K)."""
    z_lp = np.asarray(z_lp, dtype=float)
    n, K = problem.n, problem.K
    if z_lp.shape != (n, K):
        raise InvalidArgumentError(f"z_lp must have shape {(n, K)}")
    y = np.asarray(y, dtype=bool)
    cost = problem.cost_matrix(centers)
    mass = z_lp.sum(axis=0)

    balance = [1] * n
    tail, head, cap, arc_cost = [], [], [], []
    point_arcs = -np.ones((n, K), dtype=np.int64)
    cells, cell_nodes, cluster_nodes = [], [], {}
    pending_sink = []
    for k in range(K):
        if mass[k] <= MASS_TOL:
            continue
        ks = enumerate_cells(y[:, k], problem.groups, k)
        nodes = []
        total = 0
        for cell in ks:
            node = len(balance)
            d = _floor(z_lp[cell.members, k].sum())
            balance.append(-d)
            total += d
            nodes.append(node)
            for i in cell.members:
                point_arcs[i, k] = len(tail)
                tail.append(int(i))
                head.append(node)
                cap.append(1)
                arc_cost.append(float(cost[i, k]))
        vk = len(balance)
        dk = _floor(mass[k]) - total
        if dk < 0:
            raise ClusteringError(f"cluster {k}: cell demands exceed the cluster mass")
        balance.append(-dk)
        for node in nodes:
            tail.append(node)
            head.append(vk)
            cap.append(1)
            arc_cost.append(0.0)
        cells.extend(ks)
        cell_nodes.extend(nodes)
        cluster_nodes[k] = vk
        if _fractional(mass[k]):
            pending_sink.append(vk)
    sink = len(balance)
    balance.append(-(n + sum(balance[n:])))
    for vk in pending_sink:
        tail.append(vk)
        head.append(sink)
        cap.append(1)
        arc_cost.append(0.0)
    net = FlowNetwork(np.array(balance, dtype=np.int64), np.array(tail, dtype=np.int64),
                      np.array(head, dtype=np.int64), np.array(cap, dtype=np.int64),
                      np.array(arc_cost, dtype=float), n, cells, cell_nodes, cluster_nodes, sink, point_arcs)
    net.check_balanced()
    if net.balance[sink] > 0:
        raise ClusteringError("sink demand is negative")
    return net


def min_cost_flow(net: FlowNetwork) -> np.ndarray:
    """Integral min-cost flow by successive shortest paths with node potentials.

    Each round picks the lowest-numbered node with excess, runs Dijkstra on
    reduced costs until the first node with a deficit is settled, augments along
    that path, and raises every potential by min(distance, distance to that node).
    Returns the flow per arc.
    """
    net.check_balanced()
    V, E = net.n_nodes, net.n_arcs
    if np.any(net.cost[net.capacity > 0] < -1e-12):
        raise InvalidArgumentError("arc costs must be nonnegative")
    # residual graph: arc 2e forward, 2e+1 backward
    to = np.empty(2 * E, dtype=np.int64)
    to[0::2] = net.head
    to[1::2] = net.tail
    rcap = np.zeros(2 * E, dtype=np.int64)
    rcap[0::2] = net.capacity
    rcost = np.empty(2 * E)
    rcost[0::2] = net.cost
    rcost[1::2] = -net.cost
    adj = [[] for _ in range(V)]
    for e in range(E):
        adj[int(net.tail[e])].append(2 * e)
        adj[int(net.head[e])].append(2 * e + 1)
    to = to.tolist()
    rcap = rcap.tolist()
    rcost = rcost.tolist()
    excess = net.balance.astype(np.int64).tolist()
    pot = [0.0] * V
    sources = [v for v in range(V) if excess[v] > 0]
    INF = math.inf
    dist = [INF] * V
    pred = [-1] * V
    done = [False] * V

    for s in sources:
        while excess[s] > 0:
            touched = [s]
            dist[s] = 0.0
            heap = [(0.0, s)]
            target = -1
            settled = []
            while heap:
                d, v = heapq.heappop(heap)
                if done[v] or d > dist[v]:
                    continue
                done[v] = True
                settled.append(v)
                if excess[v] < 0:
                    target = v
                    break
                pv = pot[v]
                for a in adj[v]:
                    if rcap[a] <= 0:
                        continue
                    w = to[a]
                    if done[w]:
                        continue
                    nd = d + max(rcost[a] + pv - pot[w], 0.0)
                    if nd < dist[w]:
                        if dist[w] == INF:
                            touched.append(w)
                        dist[w] = nd
                        pred[w] = a
                        heapq.heappush(heap, (nd, w))
            if target < 0:
                raise FlowInfeasibleError(f"node {s} cannot reach any demand")
            dt = dist[target]
            for v in settled:
                pot[v] += dist[v] - dt
            # unsettled nodes keep their potential (equivalent to adding dt to
            # every settled node's distance deficit); shift so reduced costs stay >= 0
            # augment
            amount = min(excess[s], -excess[target])
            v = target
            while v != s:
                a = pred[v]
                amount = min(amount, rcap[a])
                v = to[a ^ 1]
            v = target
            while v != s:
                a = pred[v]
                rcap[a] -= amount
                rcap[a ^ 1] += amount
                v = to[a ^ 1]
            excess[s] -= amount
            excess[target] += amount
            for v in touched:
                dist[v] = INF
                pred[v] = -1
                done[v] = False
    flow = np.array(net.capacity) - np.array(rcap[0::2], dtype=np.int64)
    return flow


def flow_cost(net: FlowNetwork, flow) -> float:
    return float(np.dot(net.cost, flow))


@dataclass
class TheoreticalBound:
    """Additive violation bound gamma^(|F|-1) + alpha*[gamma > 2].

    ``gamma`` uses ceil(1/alpha). ``gamma_safe`` uses floor(1/alpha) + 1, which
    is the largest number of cell options a feature can have when 1/alpha is an
    integer; ``bound_safe`` is the bound evaluated at ``gamma_safe``.
    """

    gamma: int
    n_features: int
    alpha: float
    bound: float
    gamma_safe: int
    bound_safe: float
    eta: np.ndarray | None = None

    def exact(self, safe: bool = False) -> Fraction:
        g = self.gamma_safe if safe else self.gamma
        return Fraction(g) ** (self.n_features - 1) + (Fraction(repr(self.alpha)) if g > 2 else 0)


def theoretical_bound(spec: FairnessSpec, groups, y=None) -> TheoreticalBound:
    """Bound on every additive violation after rounding; ``y`` optionally fills
    the per-(feature, cluster) cell-option counts ``eta``."""
    alphas = spec.alphas(groups)
    a_min, a_max = float(alphas.min()), float(alphas.max())
    widest = max(len(groups.groups_of(f)) for f in range(groups.n_features))
    gamma = min(math.ceil(1.0 / a_min - 1e-12), widest)
    gamma_safe = min(floor_inv(a_min) + 1, widest)
    F = groups.n_features

    def value(g):
        return float(g ** (F - 1) + (a_max if g > 2 else 0.0))

    eta = None
    if y is not None:
        y = np.asarray(y, dtype=bool)
        eta = np.zeros((F, y.shape[1]), dtype=np.int64)
        for k in range(y.shape[1]):
            for f in range(F):
                gs = groups.groups_of(f)
                rep = int(y[gs, k].sum())
                eta[f, k] = 0 if rep == 0 else rep + (1 if rep < len(gs) else 0)
    return TheoreticalBound(gamma, F, a_max, value(gamma), gamma_safe, value(gamma_safe), eta)


def counting_bound(K: int, y) -> int:
    """K plus the number of representation rows: caps the fractionally assigned points."""
    return int(K + np.asarray(y, dtype=bool).sum())


@dataclass
class ViolationReport:
    deltas: np.ndarray
    max_violation: float
    sum_violation: float
    bound: TheoreticalBound

    def exact_deltas(self, assignment, groups, spec: FairnessSpec, y) -> dict:
        """delta_gk as exact fractions, for the pairs with y_gk = 1."""
        return exact_deltas(assignment, groups, spec, y)


def exact_deltas(assignment, groups, spec: FairnessSpec, y) -> dict:
    y = np.asarray(y, dtype=bool)
    K = y.shape[1]
    sizes = np.bincount(assignment, minlength=K)
    alphas = spec.alphas(groups)
    out = {}
    for g, idx in enumerate(groups.members):
        counts = np.bincount(np.asarray(assignment)[idx], minlength=K)
        a = Fraction(repr(float(alphas[g])))
        for k in np.flatnonzero(y[g]):
            out[(g, int(k))] = max(Fraction(0), a * int(sizes[k]) - int(counts[k]))
    return out


def extract_assignment(flow, net: FlowNetwork, spec: FairnessSpec | None = None, groups=None, y=None):
    """Decode the point -> cell flow into an assignment; with ``spec``, ``groups``
    and ``y`` also return a :class:`ViolationReport`."""
    flow = np.asarray(flow)
    n, K = net.point_arcs.shape
    assignment = -np.ones(n, dtype=np.int64)
    for k in range(K):
        arcs = net.point_arcs[:, k]
        has = arcs >= 0
        used = np.zeros(n, dtype=bool)
        used[has] = flow[arcs[has]] > 0
        if np.any(assignment[used] >= 0):
            raise ClusteringError("a point sends flow to two clusters")
        assignment[used] = k
    if np.any(assignment < 0):
        raise ClusteringError("a point is left unassigned by the flow")
    if spec is None:
        return assignment, None
    ex = exact_deltas(assignment, groups, spec, y)
    deltas = np.zeros(np.asarray(y).shape)
    for (g, k), d in ex.items():
        deltas[g, k] = float(d)
    report = ViolationReport(deltas, float(deltas.max(initial=0.0)), float(deltas.sum()),
                             theoretical_bound(spec, groups, y))
    return assignment, report


@dataclass
class RoundingResult:
    assignment: np.ndarray
    cost: float
    lp_cost: float
    report: ViolationReport
    network: FlowNetwork


def round_assignment(problem: ClusteringProblem, centers, spec: FairnessSpec, y, z_lp=None) -> RoundingResult:
    """Relax the fixed-representation assignment (unless ``z_lp`` is given) and
    round it through the flow network."""
    from .models import relaxed_assignment

    if z_lp is None:
        z_lp, _ = relaxed_assignment(problem, centers, spec, y)
    z_lp = np.asarray(z_lp, dtype=float)
    cost = problem.cost_matrix(centers)
    lp_cost = float((cost * z_lp).sum())
    net = build_network(z_lp, y, problem, centers)
    flow = min_cost_flow(net)
    assignment, report = extract_assignment(flow, net, spec, problem.groups, y)
    return RoundingResult(assignment, clustering_cost(assignment, centers, problem), lp_cost, report, net)


def write_dimacs(net: FlowNetwork, out=None) -> str:
    """DIMACS-style min-cost-flow text: ``p min V E``, ``n id balance`` for nonzero
    balances (1-based ids, supply positive), ``a tail head 0 cap cost`` per arc.
    Costs are written as decimal reals."""
    lines = [f"c flow rounding network: {net.n_points} points, {len(net.cell_nodes)} cells",
             f"p min {net.n_nodes} {net.n_arcs}"]
    for v in np.flatnonzero(net.balance):
        lines.append(f"n {v + 1} {int(net.balance[v])}")
    for e in range(net.n_arcs):
        lines.append(f"a {net.tail[e] + 1} {net.head[e] + 1} 0 {int(net.capacity[e])} {float(net.cost[e])!r}")
    text = "\n".join(lines) + "\n"
    if out is not None:
        if hasattr(out, "write"):
            out.write(text)
        else:
            with open(out, "w") as fh:
                fh.write(text)
    return text
