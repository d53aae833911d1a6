import numpy as np
import pytest

from bracelab.corpus import generate_economy, preference_menu, self_demand_economy
from bracelab.attacks import coordinated_misreport, reported_type
from bracelab.diagnostics import (
    BadRegionConfig,
    RegularityEstimates,
    detect_bad_region,
    estimate_LZ,
    estimate_gamma,
    sample_price_pairs,
)
from bracelab.economy import Bundle, EconomyError, IdentityType, Lottery, WeakOrder, make_economy
from bracelab.solver import SolverConfig, uniform_prices

CFG = SolverConfig(tol=1e-4, max_iter=2000, mc_draws=64, seed=11)


def unit_type(good, m):
    b = Bundle.unit(m, good)
    return IdentityType(Lottery.degenerate(b), frozenset([b]), WeakOrder.of([[b]]))


def two_identity_swap_economy():
    """n=2 exchange: both identities demand fixed bundles, one retypable."""
    t0, t1 = unit_type(0, 2), unit_type(1, 2)
    return make_economy(2, (1, 1), (("a", t0), ("b", t1)), {"a": "pa", "b": "pb"}, 0.0)


class TestEstimateGamma:
    def test_self_demand_is_exactly_zero(self):
        e = self_demand_economy(4, 2, delta=0.05)
        rng = np.random.default_rng(0)
        pairs = sample_price_pairs(2, 10, rng)
        # common random numbers make the constant-demand quotient exact
        assert estimate_gamma(e, pairs, mc_draws=32, seed=1) == pytest.approx(0.0, abs=1e-9)

    def test_identical_pair_rejected(self):
        e = self_demand_economy(4, 2)
        p = uniform_prices(2)
        with pytest.raises(EconomyError):
            estimate_gamma(e, [(p, p)], mc_draws=8, seed=0)

    def test_downward_sloping_economy_positive(self):
        e = generate_economy(40, seed=1, delta=0.1)
        from bracelab.solver import solve_brace
        res = solve_brace(e, CFG)
        rng = np.random.default_rng(3)
        pairs = sample_price_pairs(4, 30, rng, center=res.prices, radius=0.03)
        assert estimate_gamma(e, pairs, mc_draws=64, seed=2) > 0.0


class TestEstimateLZ:
    def test_unchanged_sampler_is_error(self):
        e = two_identity_swap_economy()
        with pytest.raises(EconomyError):
            estimate_LZ(e, lambda rng: e, [uniform_prices(2)], samples=5, seed=0)

    def test_hand_computed_two_identity_ratio(self):
        # retyping one of two identities from "demands good 0" to "demands
        # good 1" moves Z by (-1, +1): ratio = sqrt(2) / (1/2) = 2*sqrt(2)
        e = two_identity_swap_economy()

        def sampler(rng):
            return make_economy(2, (1, 1), (("a", unit_type(1, 2)), ("b", unit_type(1, 2))),
                                {"a": "pa", "b": "pb"}, 0.0, check_endowments=False)

        est = estimate_LZ(e, sampler, [uniform_prices(2)], samples=3, seed=0, mc_draws=8)
        assert est.value == pytest.approx(2.0 * np.sqrt(2.0))

    def test_scale_consistency_under_population_doubling(self):
        # doubling every identity and retyping one keeps the max ratio within
        # ten percent: ratio = ||dZ|| * n and dZ scales as 1/n... both the
        # numerator (one identity's unit demand shift) and W1 = 1/n halve
        # and double together
        def economy_of(n):
            return generate_economy(n, seed=7, delta=0.1)

        def sampler_for(e, menu):
            def sampler(rng):
                iid = e.ids[int(rng.integers(e.n))]
                donor = menu[int(rng.integers(len(menu)))]
                rep = reported_type(e.type_of(iid), donor)
                if rep == e.type_of(iid):
                    return e
                return coordinated_misreport(e, e.ownership[iid], {iid: rep})
            return sampler

        values = []
        for n in (24, 48):
            e = economy_of(n)
            menu = preference_menu(e)
            est = estimate_LZ(e, sampler_for(e, menu), [uniform_prices(4)],
                              samples=20, seed=5, mc_draws=64)
            values.append(est.value / n)  # L_Z scales with n; normalize
        assert abs(values[0] - values[1]) / values[0] <= 0.1


class TestRegularityEstimates:
    def test_l_hat_must_be_max(self):
        with pytest.raises(EconomyError):
            RegularityEstimates(1.0, 1.0, {"p": 2.0}, 1.0)

    def test_coefficients_guard_degenerate_gamma(self):
        est = RegularityEstimates(1.0, 0.0, {"p": 1.0}, 1.0)
        assert est.price_coefficient == float("inf")
        est2 = RegularityEstimates(2.0, 0.5, {"p": 3.0}, 3.0)
        assert est2.price_coefficient == pytest.approx(4.0)
        assert est2.welfare_coefficient == pytest.approx(12.0)


class TestDetectBadRegion:
    def test_self_demand_multiple_equilibria(self):
        e = self_demand_economy(4, 2, delta=0.0)
        cfg = BadRegionConfig(restarts=3, solver=SolverConfig(tol=1e-4, max_iter=100, mc_draws=16), seed=5)
        report = detect_bad_region(e, cfg)
        assert report.in_bad_region
        assert "multiple_equilibria" in report.reasons
        assert report.price_spread > cfg.spread_threshold

    def test_gamma_degenerate_flag(self):
        e = self_demand_economy(4, 4, delta=0.05)
        cfg = BadRegionConfig(restarts=3, solver=SolverConfig(tol=1e-4, max_iter=100, mc_draws=16), seed=5)
        report = detect_bad_region(e, cfg)
        assert "gamma_degenerate" in report.reasons
        assert report.gamma_estimate == pytest.approx(0.0, abs=1e-9)

    def test_forced_non_convergence(self):
        e = generate_economy(30, seed=0, delta=0.1)
        cfg = BadRegionConfig(
            restarts=3,
            solver=SolverConfig(tol=1e-12, max_iter=1, mc_draws=16),
            seed=5,
        )
        report = detect_bad_region(e, cfg)
        assert "non_convergence" in report.reasons

    def test_smooth_corpus_economy_clean(self):
        cfg = BadRegionConfig(restarts=3, solver=CFG, seed=5, gamma_radius=0.03,
                              start_concentration=100.0)
        clean = 0
        for seed in range(8):
            e = generate_economy(40, seed=seed, delta=0.1)
            if not detect_bad_region(e, cfg).in_bad_region:
                clean += 1
        assert clean >= 2  # the generated family is mostly regular at this scale

    def test_requires_three_restarts(self):
        with pytest.raises(EconomyError):
            BadRegionConfig(restarts=2)
