import numpy as np
import pytest

from bracelab.corpus import generate_economy, self_demand_economy
from bracelab.economy import Bundle, EconomyError, Lottery
from bracelab.scenarios import example_one_economy, example_one_split
from bracelab.attacks import apply_attack, unbounded_sybil_sequence
from bracelab.solver import (
    SolverConfig,
    excess_demand,
    feasibility_audit,
    project_to_simplex,
    solve_brace,
    uniform_prices,
    verify_clearing,
)

CFG = SolverConfig(tol=1e-4, max_iter=2000, mc_draws=128, seed=11)


def bisection_projection(v, tol=1e-12):
    """Independent oracle: find the threshold tau with sum(max(v - tau, 0)) = 1
    by bisection, no sorting involved."""
    v = np.asarray(v, dtype=float)
    lo, hi = v.min() - 1.0, v.max()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s = np.sum(np.maximum(v - mid, 0.0))
        if s > 1.0:
            lo = mid
        else:
            hi = mid
    return np.maximum(v - hi, 0.0)


class TestProjection:
    def test_matches_bisection_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            m = int(rng.integers(2, 8))
            v = rng.normal(scale=3.0, size=m)
            got = project_to_simplex(v)
            want = bisection_projection(v)
            assert np.max(np.abs(got - want)) <= 1e-9
            assert got.sum() == pytest.approx(1.0)
            assert np.all(got >= 0)

    def test_simplex_points_fixed(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            p = rng.dirichlet(np.ones(4))
            assert np.allclose(project_to_simplex(p), p, atol=1e-12)


class TestExcessDemand:
    def test_self_demand_zero_delta(self):
        e = self_demand_economy(4, 2, delta=0.0)
        z = excess_demand(e, uniform_prices(2), mc_draws=16, seed=0)
        assert np.allclose(z, 0.0, atol=1e-12)

    def test_example_one_c_and_d_clear(self):
        e = example_one_economy(delta=1e-9)
        z = excess_demand(e, uniform_prices(4), mc_draws=64, seed=0)
        assert z[2] == pytest.approx(0.0, abs=1e-9)
        assert z[3] == pytest.approx(0.0, abs=1e-9)

    def test_mc_variance_halves_with_draws(self):
        # CLT oracle: Var of a k-draw mean scales as 1/k
        e = apply_attack(example_one_economy(), example_one_split())
        p = uniform_prices(4)
        lo = np.array([excess_demand(e, p, mc_draws=32, seed=s)[1] for s in range(30)])
        hi = np.array([excess_demand(e, p, mc_draws=64, seed=1000 + s)[1] for s in range(30)])
        ratio = hi.var(ddof=1) / lo.var(ddof=1)
        assert 0.3 <= ratio <= 0.7


class TestSolveBrace:
    def test_self_demand_any_start_is_fixed(self):
        e = self_demand_economy(4, 2, delta=0.0)
        start = np.array([0.9, 0.1])
        res = solve_brace(e, SolverConfig(tol=1e-4, max_iter=100, mc_draws=16, start=start))
        assert res.converged
        assert res.iterations == 0
        assert np.allclose(res.prices, start)
        assert res.residual == 0.0

    def test_example_one_pre_attack_uniform(self):
        res = solve_brace(example_one_economy(), CFG)
        assert res.converged and res.residual <= 1e-4
        assert np.allclose(res.prices, 0.25, atol=1e-9)

    def test_example_one_post_attack_price_b_rises(self):
        pre = solve_brace(example_one_economy(), CFG)
        post = solve_brace(apply_attack(example_one_economy(), example_one_split()), CFG)
        assert post.prices[1] > pre.prices[1] + 1e-3

    def test_residual_non_increasing_on_accepted_steps(self):
        e = generate_economy(30, seed=5, delta=0.1)
        cfg = SolverConfig(tol=1e-4, max_iter=2000, mc_draws=64, seed=3, track_history=True)
        res = solve_brace(e, cfg)
        hist = np.asarray(res.history)
        assert np.all(np.diff(hist) <= 1e-12)

    def test_corpus_convergence(self):
        for seed in range(5):
            e = generate_economy(40, seed=seed, delta=0.1)
            res = solve_brace(e, CFG)
            assert res.converged, f"seed {seed} residual {res.residual}"

    def test_allocation_matches_demand_scale(self):
        e = generate_economy(30, seed=2, delta=0.1)
        res = solve_brace(e, CFG)
        total = sum(res.allocation[iid].expectation() for iid in e.ids)
        assert np.allclose(total, res.expected_demand, atol=1e-9)


class TestVerifyClearing:
    def test_endowment_allocation_zero_slack(self):
        e = self_demand_economy(4, 2, delta=0.0)
        res = solve_brace(e, SolverConfig(tol=1e-4, max_iter=50, mc_draws=16))
        report = verify_clearing(e, res, tol=1e-6)
        assert report.passed
        assert report.max_violation == 0.0
        assert all(abs(g.slack) <= 1e-9 for g in report.per_good)

    def test_constructed_violation_fails(self):
        e = self_demand_economy(4, 2, delta=0.1)
        res = solve_brace(e, SolverConfig(tol=1e-4, max_iter=50, mc_draws=16))
        # put everyone on good 0, exceeding its relaxed capacity
        bundle = Bundle.unit(2, 0, 2)
        rigged = {iid: Lottery.degenerate(Bundle.unit(2, 0)) for iid in e.ids}
        res.allocation = rigged
        report = verify_clearing(e, res, tol=1e-6)
        assert not report.passed
        assert report.violations()[0].good == "g0"

    def test_converged_solves_pass_at_ten_tol(self):
        for seed in range(6):
            e = generate_economy(40, seed=seed, delta=0.1)
            res = solve_brace(e, CFG)
            if res.converged:
                assert verify_clearing(e, res, tol=10 * CFG.tol).passed


class TestFeasibilityAudit:
    def _sequence(self, sizes, cap=1, delta=0.1):
        e = example_one_economy(delta)
        return list(unbounded_sybil_sequence(e, "P", sizes, designated_good=0, beta=0.5))

    def test_arithmetic_scan(self):
        seq = self._sequence([1, 2, 3, 4, 5])
        assert feasibility_audit(seq, beta=0.5, good=0, delta=0.1) == 3

    def test_no_violation_in_range(self):
        seq = self._sequence([1, 2])
        assert feasibility_audit(seq, beta=0.5, good=0, delta=0.1) is None

    def test_degenerate_beta(self):
        seq = self._sequence([1, 2, 3])
        assert feasibility_audit(seq, beta=0.0, good=0, delta=0.1) is None

    def test_monotonicity(self):
        seq = self._sequence([1, 2, 3, 4, 5, 6])
        first = feasibility_audit(seq, beta=0.5, good=0, delta=0.1)
        for k, (econ, sybils) in enumerate(seq, start=1):
            if k >= first:
                assert 0.5 * len(sybils) > 1.1 * econ.capacities[0]

    def test_empty_sequence_rejected(self):
        with pytest.raises(EconomyError):
            feasibility_audit([], beta=0.5, good=0, delta=0.1)
