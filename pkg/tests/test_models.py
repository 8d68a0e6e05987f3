import itertools

import numpy as np
import pytest

from minirel.core import ClusteringProblem, Dataset, FairnessSpec, GroupStructure, compute_beta, infer_y
from minirel.lloyd import greedy_assign
from minirel.lp import solve_lp, solve_mbp
from minirel.models import (InfeasibleError, InvalidPrefixError, PrefixInfeasibleError, Variant, big_m,
                            build_model, lp_relax_solve, relaxed_assignment, solve_exact)
from minirel.synthetic import inapprox_instance, line_instance

from oracles import brute_fair_assignment, is_mr_fair


def random_instance(rng, n, K, n_features=1, n_groups=2):
    pts = rng.random((n, 2))
    labels = {f"f{f}": [str(v) for v in rng.integers(n_groups, size=n)] for f in range(n_features)}
    for f in range(n_features):  # every group present
        for v in range(n_groups):
            labels[f"f{f}"][v] = str(v)
    gs = GroupStructure.from_labels(labels)
    prob = ClusteringProblem(Dataset(pts), gs, K)
    centers = pts[rng.choice(n, K, replace=False)]
    return prob, centers


def test_big_m_value():
    ds, gs = line_instance()
    assert big_m(FairnessSpec(0.5, [1, 1]), gs, 6).tolist() == [3.0, 3.0]
    assert big_m(FairnessSpec(0.5, [1, 1], card_upper=4), gs, 6).tolist() == [2.0, 2.0]


def test_no_fairness_reduces_to_greedy():
    rng = np.random.default_rng(0)
    prob, centers = random_instance(rng, 3, 2)
    spec = FairnessSpec(0.5, [0, 0], card_lower=0)
    res = solve_exact(prob, centers, spec, Variant.FMRA)
    D = prob.cost_matrix(centers)
    assert res.objective == pytest.approx(D.min(axis=1).sum())
    y0 = np.zeros((2, 2), dtype=bool)
    apfrc = solve_exact(prob, centers, spec, Variant.APFRC, y0)
    assert apfrc.assignment.tolist() == greedy_assign(prob, centers).tolist()


def test_inapprox_fixed_centers_cost():
    ds, gs, centers = inapprox_instance(10.0, 1.0)
    prob = ClusteringProblem(ds, gs, 3)
    spec = FairnessSpec(0.51, [1, 1, 1])
    res = solve_exact(prob, centers, spec, Variant.FMRA)
    assert res.objective == pytest.approx(101.0, abs=1e-9)


def test_line_instance_fmra_matches_brute_force():
    ds, gs = line_instance()
    prob = ClusteringProblem(ds, gs, 2)
    centers = np.array([[1.0], [11.0]])
    spec = FairnessSpec(0.51, [1, 1])
    res = solve_exact(prob, centers, spec, Variant.FMRA)
    brute, _ = brute_fair_assignment(prob.cost_matrix(centers), gs.members, 0.51, [1, 1])
    assert res.objective == pytest.approx(4.0) and brute == pytest.approx(4.0)


def test_fmra_matches_enumeration_on_small_instances():
    rng = np.random.default_rng(2024)
    checked = infeasible = 0
    for trial in range(40):
        n = int(rng.integers(3, 8))
        K = int(rng.integers(2, 4))
        prob, centers = random_instance(rng, n, K, n_features=1 + trial % 2)
        alpha = float(rng.choice([0.34, 0.51, 0.6]))
        beta = rng.integers(0, K + 1, size=prob.groups.G)
        spec = FairnessSpec(alpha, beta)
        brute, assign = brute_fair_assignment(prob.cost_matrix(centers), prob.groups.members, alpha, beta)
        if brute is None:
            with pytest.raises(InfeasibleError):
                solve_exact(prob, centers, spec, Variant.FMRA)
            infeasible += 1
            continue
        res = solve_exact(prob, centers, spec, Variant.FMRA)
        assert res.objective == pytest.approx(brute, abs=1e-9)
        assert is_mr_fair(res.assignment, prob.groups.members, alpha, beta, K)
        checked += 1
    assert checked >= 15 and infeasible >= 1


def test_infeasible_certificate_names_alpha_and_beta():
    # group a has 1 point: it cannot be 0.51-represented in both of 2 nonempty clusters
    pts = np.arange(6.0)[:, None]
    gs = GroupStructure.from_labels({"s": ["a"] + ["b"] * 5})
    prob = ClusteringProblem(Dataset(pts), gs, 2)
    spec = FairnessSpec(0.51, [2, 0])
    assert brute_fair_assignment(prob.cost_matrix(pts[[0, 5]]), gs.members, 0.51, [2, 0])[0] is None
    with pytest.raises(InfeasibleError) as exc:
        solve_exact(prob, pts[[0, 5]], spec, Variant.FMRA)
    cert = exc.value.certificate
    assert cert.alpha == 0.51 and cert.beta == (2, 0) and cert.variant == "fmra"


def test_rap_returns_feasible_fractional_z():
    ds, gs = line_instance()
    prob = ClusteringProblem(ds, gs, 2)
    centers = np.array([[0.0], [12.0]])
    spec = FairnessSpec(0.51, [1, 1])
    res = solve_exact(prob, centers, spec, Variant.RAP)
    z, y = res.z, res.y
    assert res.fractional
    assert np.allclose(z.sum(axis=1), 1.0, atol=1e-7)
    sizes = z.sum(axis=0)
    assert np.all(sizes >= 1 - 1e-7)
    for g in range(gs.G):
        assert y[g].sum() >= spec.beta[g]
        for k in np.flatnonzero(y[g]):
            assert z[gs.members[g], k].sum() >= 0.51 * sizes[k] - 1e-7


def test_apfrc_is_a_restriction_of_fmra():
    rng = np.random.default_rng(7)
    for _ in range(10):
        prob, centers = random_instance(rng, 7, 3)
        spec = FairnessSpec(0.51, compute_beta("sp", 0.51, 3, prob.groups))
        try:
            full = solve_exact(prob, centers, spec, Variant.FMRA)
        except InfeasibleError:
            continue
        fixed = solve_exact(prob, centers, spec, Variant.APFRC, full.y)
        assert fixed.objective >= full.objective - 1e-9
        assert fixed.objective == pytest.approx(full.objective, abs=1e-9)


def test_hard_rows_match_big_m_rows_with_y_fixed():
    rng = np.random.default_rng(11)
    for _ in range(12):
        prob, centers = random_instance(rng, 7, 3, n_features=2)
        spec = FairnessSpec(0.4, [0] * prob.groups.G)
        y = np.zeros((prob.groups.G, 3), dtype=bool)
        for f in range(2):
            gs = prob.groups.groups_of(f)
            for k in range(3):
                if rng.random() < 0.6:
                    y[gs[int(rng.integers(len(gs)))], k] = True
        hard = build_model(prob, centers, spec, Variant.APFRC, y)
        bigm = build_model(prob, centers, spec, Variant.FMRA)
        bigm.mbp.lp.lb[bigm.y_index] = y
        bigm.mbp.lp.ub[bigm.y_index] = y
        a, b = solve_mbp(hard.mbp), solve_mbp(bigm.mbp)
        assert a.status == b.status
        if a.status == "optimal":
            assert a.objective == pytest.approx(b.objective, abs=1e-9)


def test_aggregated_and_plain_encodings_agree():
    rng = np.random.default_rng(5)
    for _ in range(8):
        prob, centers = random_instance(rng, 8, 3, n_features=2)
        spec = FairnessSpec(0.51, compute_beta("eqop", 0.51, 3, prob.groups))
        a = build_model(prob, centers, spec, Variant.FMRA, aggregate=True)
        b = build_model(prob, centers, spec, Variant.FMRA, aggregate=False)
        sa, sb = solve_mbp(a.mbp), solve_mbp(b.mbp)
        assert sa.status == sb.status
        if sa.status == "optimal":
            assert sa.objective == pytest.approx(sb.objective, abs=1e-9)


def test_relaxation_bounds_the_integer_optimum():
    rng = np.random.default_rng(3)
    for _ in range(10):
        prob, centers = random_instance(rng, 8, 3)
        spec = FairnessSpec(0.51, [1, 1])
        model = build_model(prob, centers, spec, Variant.FMRA)
        relax = lp_relax_solve(model)
        try:
            res = solve_exact(prob, centers, spec, Variant.FMRA)
        except InfeasibleError:
            assert relax.status in ("optimal", "infeasible")
            continue
        assert relax.objective <= res.objective + 1e-9


def test_integral_relaxation_equals_exact_solution():
    ds, gs = line_instance()
    prob = ClusteringProblem(ds, gs, 2)
    centers = np.array([[1.0], [11.0]])
    y = np.array([[True, False], [False, True]])
    spec = FairnessSpec(0.51, [1, 1])
    z, obj = relaxed_assignment(prob, centers, spec, y)
    res = solve_exact(prob, centers, spec, Variant.APFRC, y)
    assert np.allclose(z, res.z) and obj == pytest.approx(res.objective)


def test_invalid_and_infeasible_prefix():
    ds, gs = line_instance()
    prob = ClusteringProblem(ds, gs, 2)
    centers = np.array([[1.0], [11.0]])
    spec = FairnessSpec(0.51, [1, 1])
    with pytest.raises(InvalidPrefixError):
        build_model(prob, centers, spec, Variant.APFRC, np.ones((2, 2), dtype=bool))
    tight = FairnessSpec(0.51, [1, 1], card_lower=6, card_upper=6)
    with pytest.raises((PrefixInfeasibleError, InfeasibleError)):
        solve_exact(ClusteringProblem(ds, gs, 1), centers[:1], tight, Variant.APFRC,
                    np.array([[True], [False]]))


def test_cardinality_bounds_respected():
    rng = np.random.default_rng(9)
    prob, centers = random_instance(rng, 8, 2)
    spec = FairnessSpec(0.51, [1, 1], card_lower=3, card_upper=5)
    res = solve_exact(prob, centers, spec, Variant.FMRA)
    sizes = np.bincount(res.assignment, minlength=2)
    assert np.all((sizes >= 3) & (sizes <= 5))
    brute, _ = brute_fair_assignment(prob.cost_matrix(centers), prob.groups.members, 0.51, [1, 1], 3, 5)
    assert res.objective == pytest.approx(brute, abs=1e-9)


def test_warm_start_does_not_change_optimum():
    rng = np.random.default_rng(21)
    prob, centers = random_instance(rng, 8, 3)
    spec = FairnessSpec(0.51, [1, 1])
    cold = solve_exact(prob, centers, spec, Variant.FMRA)
    for assign in itertools.islice(itertools.product(range(3), repeat=8), 0, 6561, 97):
        if is_mr_fair(assign, prob.groups.members, 0.51, [1, 1], 3):
            y = infer_y(np.array(assign), prob.groups, spec, 3)
            warm = solve_exact(prob, centers, spec, Variant.FMRA, warm_start=(np.array(assign), y))
            assert warm.objective == pytest.approx(cold.objective, abs=1e-9)
            break
