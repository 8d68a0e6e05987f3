import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minirel.core import ClusteringProblem, FairnessSpec, InvalidArgumentError, compute_beta, fairness_metrics
from minirel.driver import Strategy, fixed_point_check, minirel_run, warm_start
from minirel.flow import exact_deltas, theoretical_bound
from minirel.lloyd import lloyd_run
from minirel.models import InfeasibleError
from minirel.synthetic import inapprox_instance, line_instance, make_group_blobs

from oracles import brute_fair_assignment, is_mr_fair

IP_STRATEGIES = [s for s in Strategy if s.exact and s is not Strategy.FIXED_CENTER_ADJUST]
FLOW_STRATEGIES = [s for s in Strategy if s.flow]


def blobs(n, K, seed=0, shares=((0.7, 0.3),)):
    ds, gs = make_group_blobs(n, n_blobs=K, group_shares=shares, seed=seed)
    return ClusteringProblem(ds, gs, K)


def test_warm_start_modes():
    prob = blobs(60, 3, seed=1)
    ref = lloyd_run(prob, rng=4).centers
    assert np.array_equal(warm_start(prob, rng=4), ref)
    assert np.array_equal(warm_start(prob, rng=4, mode="kmeans++"), warm_start(prob, rng=4, mode="kmeans++"))
    rand = warm_start(prob, rng=4, mode="random")
    assert all(np.any(np.all(prob.points == c, axis=1)) for c in rand)
    one = ClusteringProblem(prob.dataset, prob.groups, 1)
    assert np.allclose(warm_start(one, rng=0), prob.points.mean(axis=0))
    with pytest.raises(InvalidArgumentError):
        warm_start(prob, mode="nope")


def test_line_instance_keeps_the_fair_lloyd_solution():
    ds, gs = line_instance()
    prob = ClusteringProblem(ds, gs, 2)
    spec = FairnessSpec(0.51, [1, 1])
    brute, _ = brute_fair_assignment(prob.cost_matrix(np.array([[1.0], [11.0]])), gs.members, 0.51, [1, 1])
    for strategy in IP_STRATEGIES:
        sol, trace = minirel_run(prob, spec, strategy, rng=0)
        assert sol.cost == 4.0 == brute
        assert trace.n_iter == 1 and trace.status == "converged"


def test_inapproximability_instance():
    ds, gs, centers = inapprox_instance(10.0, 1.0)
    prob = ClusteringProblem(ds, gs, 3)
    spec = FairnessSpec(0.51, [1, 1, 1])
    fixed, _ = minirel_run(prob, spec, Strategy.FIXED_CENTER_ADJUST, init=centers)
    moving, trace = minirel_run(prob, spec, Strategy.FULL_IP, init=centers)
    assert fixed.cost == pytest.approx(101.0, abs=1e-9)
    assert moving.cost == pytest.approx(0.5, abs=1e-9)
    assert trace.status == "converged"


def test_zero_beta_reproduces_lloyd():
    prob = blobs(80, 3, seed=2)
    spec = FairnessSpec(0.51, [0, 0])
    ref = lloyd_run(prob, rng=6)
    for strategy in Strategy:
        sol, trace = minirel_run(prob, spec, strategy, rng=6)
        assert sol.cost == ref.cost
        assert np.array_equal(sol.centers, ref.centers)


@pytest.mark.parametrize("strategy", IP_STRATEGIES, ids=lambda s: s.value)
def test_ip_strategies_fair_monotone_and_fixed_point(strategy):
    for seed in range(3):
        prob = blobs(40, 3, seed=seed)
        for policy in ("sp", "eqop"):
            spec = FairnessSpec(0.51, compute_beta(policy, 0.51, 3, prob.groups))
            try:
                sol, trace = minirel_run(prob, spec, strategy, rng=seed)
            except InfeasibleError:
                continue
            costs = [r.current_cost for r in trace.iterations] + [trace.iterations[-1].improved_cost]
            assert all(b <= a for a, b in zip(costs, costs[1:]))
            assert trace.status == "converged"
            assert is_mr_fair(sol.assignment, prob.groups.members, 0.51, spec.beta, 3)
            before, after = fixed_point_check(prob, spec, sol, strategy)
            assert before == after == sol.cost


@pytest.mark.parametrize("strategy", FLOW_STRATEGIES, ids=lambda s: s.value)
def test_flow_strategies_stay_within_bound(strategy):
    for seed in range(3):
        prob = blobs(40, 3, seed=seed, shares=((0.5, 0.3, 0.2), (0.6, 0.4)))
        spec = FairnessSpec(0.4, compute_beta("eqop", 0.4, 3, prob.groups))
        try:
            sol, trace = minirel_run(prob, spec, strategy, rng=seed)
        except InfeasibleError:
            continue
        costs = trace.costs
        assert all(b <= a for a, b in zip(costs, costs[1:]))
        bound = theoretical_bound(spec, prob.groups).exact()
        assert all(d <= bound for d in exact_deltas(sol.assignment, prob.groups, spec, sol.y).values())


def test_prefixed_strategies_fix_y_once():
    prob = blobs(60, 3, seed=3)
    spec = FairnessSpec(0.51, compute_beta("eqop", 0.51, 3, prob.groups))
    sol, trace = minirel_run(prob, spec, Strategy.PREFIX_HEUR_IP, rng=3, init=warm_start(prob, 0, "random"))
    assert trace.reprefixes <= 1
    assert np.all(sol.y.sum(axis=1) >= spec.beta)


def test_node_limit_is_deterministic():
    prob = blobs(150, 4, seed=5)
    spec = FairnessSpec(0.51, compute_beta("sp", 0.51, 4, prob.groups))
    a, ta = minirel_run(prob, spec, Strategy.FULL_IP, rng=1, node_limit=3)
    b, tb = minirel_run(prob, spec, Strategy.FULL_IP, rng=1, node_limit=3)
    assert np.array_equal(a.assignment, b.assignment) and ta.costs == tb.costs
    assert fairness_metrics(a.assignment, spec, prob.groups, 4, a.y).max_deviation == 0


def test_infeasible_spec_raises():
    ds, gs = line_instance()
    prob = ClusteringProblem(ds, gs, 2)
    spec = FairnessSpec(0.51, [2, 2])  # two groups cannot both dominate two clusters
    with pytest.raises(InfeasibleError):
        minirel_run(prob, spec, Strategy.FULL_IP, rng=0)


def test_rejects_K_above_n():
    ds, gs = line_instance()
    with pytest.raises(InvalidArgumentError):
        minirel_run(ClusteringProblem(ds, gs, 7), FairnessSpec(0.51, [0, 0]), rng=0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 4), st.sampled_from(["sp", "eqop"]))
def test_full_ip_properties(seed, K, policy):
    prob = blobs(24, K, seed=seed)
    spec = FairnessSpec(0.51, compute_beta(policy, 0.51, K, prob.groups))
    try:
        sol, trace = minirel_run(prob, spec, Strategy.FULL_IP, rng=seed)
    except InfeasibleError:
        return
    costs = [r.current_cost for r in trace.iterations] + [trace.iterations[-1].improved_cost]
    assert all(b <= a for a, b in zip(costs, costs[1:]))
    assert fairness_metrics(sol.assignment, spec, prob.groups, K).max_deviation == 0
    before, after = fixed_point_check(prob, spec, sol)
    assert before == after
