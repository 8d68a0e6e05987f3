import io
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minirel.core import ClusteringProblem, Dataset, FairnessSpec, GroupStructure
from minirel.flow import (REMAINDER, FlowNetwork, build_network, counting_bound, enumerate_cells, exact_deltas,
                          extract_assignment, flow_cost, min_cost_flow, round_assignment, theoretical_bound,
                          write_dimacs)
from minirel.lp import LinearProgram, solve_lp
from minirel.models import PrefixInfeasibleError, relaxed_assignment
from minirel.synthetic import line_instance

from instances import random_rounding_instance


def group_index(gs, name):
    return gs.groups.index(name)


def test_enumerate_cells_two_features():
    gender = ["M", "F", "NB", "F", "M", "F", "NB", "M", "F"]
    age = ["Y", "A", "S", "Y", "A", "S", "Y", "A", "Y"]
    gs = GroupStructure.from_labels({"gender": gender, "age": age})
    col = np.zeros(gs.G, dtype=bool)
    for name in ("gender=F", "age=Y", "age=A"):
        col[group_index(gs, name)] = True
    cells = enumerate_cells(col, gs, cluster=2)
    assert len(cells) == 6
    assert all(c.cluster == 2 for c in cells)
    covered = np.concatenate([c.members for c in cells])
    assert sorted(covered.tolist()) == list(range(gs.n))
    f_y = next(c for c in cells if c.choice == (group_index(gs, "gender=F"), group_index(gs, "age=Y")))
    assert f_y.members.tolist() == [3, 8]
    rest = next(c for c in cells if c.choice == (REMAINDER, REMAINDER))
    assert rest.members.tolist() == [2]  # NB and S


def test_enumerate_cells_trivial_cases():
    gs = GroupStructure.from_labels({"s": list("abab")})
    none = enumerate_cells(np.zeros(2, dtype=bool), gs)
    assert len(none) == 1 and none[0].members.tolist() == [0, 1, 2, 3]
    both = enumerate_cells(np.ones(2, dtype=bool), gs)
    assert len(both) == 2 and REMAINDER not in [c.choice[0] for c in both]


def fig4_instance():
    color = ["P", "P", "B", "G", "B", "G"]
    border = ["D", "S", "D", "S", "S", "D"]
    gs = GroupStructure.from_labels({"color": color, "border": border})
    pts = np.array([[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [5.0, 0.0], [5.5, 0.0], [6.0, 0.0]])
    prob = ClusteringProblem(Dataset(pts), gs, 2)
    y = np.zeros((gs.G, 2), dtype=bool)
    y[group_index(gs, "color=P"), 0] = y[group_index(gs, "border=D"), 0] = True
    y[group_index(gs, "color=G"), 1] = y[group_index(gs, "color=B"), 1] = True
    return prob, y


def test_fig4_topology():
    prob, y = fig4_instance()
    centers = np.array([[0.5, 0.0], [5.5, 0.0]])
    z = np.zeros((6, 2))
    z[[1, 2], 0] = 1.0
    z[[3, 4, 5], 1] = 1.0
    z[0] = [0.5, 0.5]
    net = build_network(z, y, prob, centers)
    assert int((net.balance[:6] == 1).sum()) == 6 and net.n_points == 6
    per_cluster = [sum(1 for c in net.cells if c.cluster == k) for k in range(2)]
    assert per_cluster == [4, 3]
    assert len(net.cluster_nodes) == 2
    # 6 points x 2 clusters, 7 cell arcs, 2 sink arcs for the fractional masses 2.5 and 3.5
    assert net.n_arcs == 12 + 7 + 2
    assert net.n_nodes == 6 + 7 + 2 + 1
    assert net.balance[net.sink] == -1
    assert int(net.balance.sum()) == 0


def test_integral_relaxation_decodes_to_itself():
    ds, gs = line_instance()
    prob = ClusteringProblem(ds, gs, 2)
    centers = np.array([[1.0], [11.0]])
    y = np.array([[True, False], [False, True]])
    spec = FairnessSpec(0.51, [1, 1])
    z, obj = relaxed_assignment(prob, centers, spec, y)
    assert np.allclose(z, np.round(z))
    res = round_assignment(prob, centers, spec, y, z)
    assert res.network.balance[res.network.sink] == 0
    assert res.assignment.tolist() == z.argmax(axis=1).tolist()
    assert res.cost == pytest.approx(obj) and res.report.max_violation == 0


def test_network_balance_random_n8():
    rng = np.random.default_rng(4)
    for _ in range(10):
        prob, centers, spec, y = random_rounding_instance(rng, n=8, K=2, n_features=1, alpha=0.51)
        try:
            z, _ = relaxed_assignment(prob, centers, spec, y)
        except PrefixInfeasibleError:
            continue
        net = build_network(z, y, prob, centers)
        assert int(net.balance[net.balance > 0].sum()) == 8 == -int(net.balance[net.balance < 0].sum())


def simple_net(balance, arcs):
    tail, head, cap, cost = zip(*arcs)
    return FlowNetwork(np.array(balance), np.array(tail), np.array(head), np.array(cap), np.array(cost, dtype=float))


def test_min_cost_flow_trivial_examples():
    net = simple_net([1, -1], [(0, 1, 1, 3.5)])
    flow = min_cost_flow(net)
    assert flow.tolist() == [1] and flow_cost(net, flow) == 3.5
    net = simple_net([1, -1], [(0, 1, 1, 5.0), (0, 1, 1, 2.0)])
    assert min_cost_flow(net).tolist() == [0, 1]


def arc_flow_lp(net):
    lp = LinearProgram()
    lp.add_vars(net.cost, np.zeros(net.n_arcs), net.capacity.astype(float))
    for v in range(net.n_nodes):
        out = np.flatnonzero(net.tail == v)
        inc = np.flatnonzero(net.head == v)
        idx = np.concatenate([out, inc])
        coef = np.concatenate([np.ones(len(out)), -np.ones(len(inc))])
        lp.add_constraint(idx, coef, "=", float(net.balance[v]))
    return solve_lp(lp.finalize())


def random_network(rng):
    """Balances come from a random feasible flow, so the network is feasible."""
    V = int(rng.integers(2, 31))
    E = int(rng.integers(V, 4 * V))
    tail = rng.integers(V, size=E)
    head = (tail + rng.integers(1, V, size=E)) % V
    cap = rng.integers(1, 5, size=E)
    cost = rng.integers(0, 20, size=E).astype(float)
    f = rng.integers(0, cap + 1)
    balance = np.zeros(V, dtype=np.int64)
    np.add.at(balance, tail, f)
    np.add.at(balance, head, -f)
    return FlowNetwork(balance, tail, head, cap, cost)


def test_min_cost_flow_matches_arc_flow_lp():
    rng = np.random.default_rng(77)
    for _ in range(120):
        net = random_network(rng)
        flow = min_cost_flow(net)
        assert np.all((flow >= 0) & (flow <= net.capacity))
        net_out = np.zeros(net.n_nodes, dtype=np.int64)
        np.add.at(net_out, net.tail, flow)
        np.add.at(net_out, net.head, -flow)
        assert net_out.tolist() == net.balance.tolist()
        ref = arc_flow_lp(net)
        assert ref.optimal and flow_cost(net, flow) == pytest.approx(ref.objective, abs=1e-6)


@pytest.mark.parametrize("alpha,features,widest,gamma,bound", [
    (0.51, 1, 2, 2, 1.0),
    (0.51, 2, 3, 2, 2.0),
    (0.3, 2, 3, 3, 3.3),
])
def test_theoretical_bound_examples(alpha, features, widest, gamma, bound):
    n = 6
    labels = {f"f{f}": [str(i % widest) for i in range(n)] for f in range(features)}
    gs = GroupStructure.from_labels(labels)
    tb = theoretical_bound(FairnessSpec(alpha, [0] * gs.G), gs)
    assert tb.gamma == gamma and tb.bound == pytest.approx(bound)
    assert tb.exact() == Fraction(gamma) ** (features - 1) + (Fraction(repr(alpha)) if gamma > 2 else 0)


def test_theoretical_bound_integer_reciprocal():
    gs = GroupStructure.from_labels({"a": [str(i % 3) for i in range(6)], "b": [str(i % 3) for i in range(6)]})
    tb = theoretical_bound(FairnessSpec(0.5, [0] * gs.G), gs)
    assert tb.gamma == 2 and tb.gamma_safe == 3
    assert tb.bound == 2.0 and tb.bound_safe == pytest.approx(3.5)


def test_counting_bound_and_eta():
    gs = GroupStructure.from_labels({"s": list("aabbcc")})
    y = np.array([[True, False], [True, True], [False, False]])
    assert counting_bound(2, y) == 5
    tb = theoretical_bound(FairnessSpec(0.3, [1, 2, 0]), gs, y)
    assert tb.eta.tolist() == [[3, 2]]


def check_rounding(prob, centers, spec, y, safe=False):
    try:
        res = round_assignment(prob, centers, spec, y)
    except PrefixInfeasibleError:
        return None
    z, lp_cost = relaxed_assignment(prob, centers, spec, y)
    K = prob.K
    assert res.cost <= lp_cost + 1e-6
    assert np.all(res.assignment >= 0) and np.all(res.assignment < K)
    sizes = np.bincount(res.assignment, minlength=K)
    mass = z.sum(axis=0)
    assert np.all(sizes >= np.floor(mass + 1e-6)) and np.all(sizes <= np.ceil(mass - 1e-6))
    lower = spec.card_lower or 0
    upper = spec.card_upper if spec.card_upper is not None else prob.n
    assert np.all((sizes == 0) | ((sizes >= lower) & (sizes <= upper)))
    deltas = exact_deltas(res.assignment, prob.groups, spec, y)
    bound = res.report.bound.exact(safe=safe)
    assert all(d <= bound for d in deltas.values())
    assert all(d <= K + int(spec.beta.sum()) for d in deltas.values())
    return max(deltas.values(), default=Fraction(0))


def test_rounding_properties_random():
    rng = np.random.default_rng(2)
    rounded = 0
    for _ in range(120):
        out = check_rounding(*random_rounding_instance(rng))
        rounded += out is not None
    assert rounded >= 60


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_single_feature_two_groups_violation_at_most_one(seed):
    rng = np.random.default_rng(seed)
    prob, centers, spec, y = random_rounding_instance(rng, n_features=1, alpha=float(rng.choice([0.51, 0.6, 0.75])))
    if prob.groups.G != 2:
        return
    assert theoretical_bound(spec, prob.groups).bound == 1.0
    worst = check_rounding(prob, centers, spec, y)
    assert worst is None or worst <= 1


def test_integer_reciprocal_alpha():
    rng = np.random.default_rng(8)
    for _ in range(40):
        alpha = float(rng.choice([0.25, 1 / 3, 0.5]))
        check_rounding(*random_rounding_instance(rng, alpha=alpha, widest=3), safe=True)
        check_rounding(*random_rounding_instance(rng, alpha=alpha, widest=3))


def test_extract_assignment_without_spec():
    prob, y = fig4_instance()
    centers = np.array([[0.5, 0.0], [5.5, 0.0]])
    z = np.zeros((6, 2))
    z[:3, 0] = 1.0
    z[3:, 1] = 1.0
    net = build_network(z, np.zeros_like(y), prob, centers)
    assignment, report = extract_assignment(min_cost_flow(net), net)
    assert assignment.tolist() == [0, 0, 0, 1, 1, 1] and report is None


def test_write_dimacs_format(tmp_path):
    net = simple_net([2, -1, -1], [(0, 1, 1, 1.5), (0, 2, 2, 0.0)])
    text = write_dimacs(net)
    lines = text.splitlines()
    assert lines[1] == "p min 3 2"
    assert lines[2:5] == ["n 1 2", "n 2 -1", "n 3 -1"]
    assert lines[5:] == ["a 1 2 0 1 1.5", "a 1 3 0 2 0.0"]
    buf = io.StringIO()
    write_dimacs(net, buf)
    assert buf.getvalue() == text
    path = tmp_path / "net.min"
    write_dimacs(net, str(path))
    assert path.read_text() == text
