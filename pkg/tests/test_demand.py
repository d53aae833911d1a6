import itertools

import numpy as np
import pytest

from bracelab.demand import (
    BudgetProfile,
    FosdOutcome,
    class_masses,
    demand,
    demand_profile,
    fosd_compare,
    price_value,
    sample_budget_relaxations,
)
from bracelab.economy import Bundle, EconomyError, IdentityType, Lottery, WeakOrder
from bracelab.scenarios import example_one_economy
from bracelab.attacks import apply_attack
from bracelab.scenarios import example_one_split

UNIFORM4 = np.full(4, 0.25)


def lottery(*pairs):
    return Lottery.from_pairs({b: p for b, p in pairs})


class TestPriceValue:
    def test_degenerate_bundle_at_uniform(self):
        lot = Lottery.degenerate(Bundle.unit(4, 0))
        assert price_value(UNIFORM4, lot) == pytest.approx(0.25)

    def test_zero_bundle(self):
        lot = Lottery.degenerate(Bundle.zero(4))
        assert price_value(np.array([0.7, 0.1, 0.1, 0.1]), lot) == 0.0

    def test_mixture_expectation(self):
        # direct expectation oracle: 0.5*0.25 + 0.5*0.25 = 0.25
        lot = lottery((Bundle.unit(4, 0), 0.5), (Bundle.unit(4, 1), 0.5))
        assert price_value(UNIFORM4, lot) == pytest.approx(0.25)

    def test_dimension_mismatch(self):
        with pytest.raises(EconomyError):
            price_value(np.array([1.0]), Lottery.degenerate(Bundle.unit(4, 0)))


def three_class_order():
    top, mid, bot = Bundle.of((2, 0)), Bundle.of((1, 0)), Bundle.of((0, 1))
    return WeakOrder.of([[top], [mid], [bot]]), top, mid, bot


def brute_force_fosd(x, y, order):
    """Independent oracle: compare upper-contour probabilities against every
    bundle in the order's universe, straight from the definition."""
    ge = le = True
    strict_ge = strict_le = False
    for z in order.universe:
        px = sum(p for b, p in x.outcomes if order.rank(b) <= order.rank(z))
        py = sum(p for b, p in y.outcomes if order.rank(b) <= order.rank(z))
        if px > py + 1e-9:
            strict_ge = True
            le = False
        elif py > px + 1e-9:
            strict_le = True
            ge = False
    if ge and le:
        return FosdOutcome.EQUIVALENT
    if ge and strict_ge:
        return FosdOutcome.X_DOMINATES
    if le and strict_le:
        return FosdOutcome.Y_DOMINATES
    return FosdOutcome.INCOMPARABLE


class TestFosd:
    def test_reflexive_equivalence(self):
        order, top, mid, bot = three_class_order()
        x = lottery((top, 0.3), (bot, 0.7))
        assert fosd_compare(x, x, order) is FosdOutcome.EQUIVALENT

    def test_top_dominates_bottom(self):
        order, top, mid, bot = three_class_order()
        assert fosd_compare(Lottery.degenerate(top), Lottery.degenerate(bot), order) is FosdOutcome.X_DOMINATES

    def test_incomparable_case(self):
        # class masses x = (0.5, 0, 0.5), y = (0, 1, 0): 0.5 < 1 cumulatively
        # at class 2 but 0.5 > 0 at class 1
        order, top, mid, bot = three_class_order()
        x = lottery((top, 0.5), (bot, 0.5))
        y = Lottery.degenerate(mid)
        assert brute_force_fosd(x, y, order) is FosdOutcome.INCOMPARABLE
        assert fosd_compare(x, y, order) is FosdOutcome.INCOMPARABLE

    def test_agrees_with_bruteforce_on_random_lotteries(self):
        order, top, mid, bot = three_class_order()
        rng = np.random.default_rng(5)
        bundles = [top, mid, bot]
        for _ in range(200):
            wx = rng.dirichlet(np.ones(3))
            wy = rng.dirichlet(np.ones(3))
            x = lottery(*zip(bundles, wx))
            y = lottery(*zip(bundles, wy))
            assert fosd_compare(x, y, order) is brute_force_fosd(x, y, order)

    def test_support_outside_order_rejected(self):
        order, top, mid, bot = three_class_order()
        stranger = Lottery.degenerate(Bundle.of((5, 5)))
        with pytest.raises(EconomyError):
            class_masses(stranger, order)

    def test_antisymmetry(self):
        order, top, mid, bot = three_class_order()
        x = lottery((top, 0.8), (bot, 0.2))
        y = lottery((top, 0.2), (bot, 0.8))
        assert fosd_compare(x, y, order) is FosdOutcome.X_DOMINATES
        assert fosd_compare(y, x, order) is FosdOutcome.Y_DOMINATES


class TestBudgetRelaxations:
    def test_single_identity_forced(self):
        rng = np.random.default_rng(0)
        assert sample_budget_relaxations(1, 0.1, rng).relaxations == pytest.approx((0.1,))

    def test_zero_delta(self):
        rng = np.random.default_rng(0)
        assert sample_budget_relaxations(5, 0.0, rng).relaxations == (0.0,) * 5

    def test_symmetric_means(self):
        # Monte Carlo oracle: Dirichlet(1,1,1) is symmetric, each mean 0.1
        rng = np.random.default_rng(7)
        draws = np.array([sample_budget_relaxations(3, 0.3, rng).relaxations for _ in range(10_000)])
        se = draws.std(axis=0) / np.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - 0.1) <= 3 * se)

    def test_sum_constraint(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            prof = sample_budget_relaxations(4, 0.25, rng)
            assert sum(prof.relaxations) == pytest.approx(0.25, abs=1e-9)

    def test_invalid_inputs(self):
        rng = np.random.default_rng(0)
        with pytest.raises(EconomyError):
            sample_budget_relaxations(0, 0.1, rng)
        with pytest.raises(EconomyError):
            BudgetProfile((0.2, 0.2), 0.1)


def make_type(endowment_bundle, classes):
    order = WeakOrder.of(classes)
    return IdentityType(Lottery.degenerate(endowment_bundle), order.universe, order)


def brute_force_demand(t, p, b, grid=0.01):
    """Grid oracle: lexicographically maximal affordable class-mass vector,
    costing each class at its cheapest bundle and parking leftovers on the
    globally cheapest acceptable bundle."""
    costs = [min(float(p @ x.as_array()) for x in cls_) for cls_ in t.order.classes]
    q_min = min(costs)
    budget = price_value(p, t.endowment) + b
    K = len(costs)
    steps = int(round(1.0 / grid)) + 1
    best = None
    masses = [np.round(np.arange(steps) * grid, 9) for _ in range(K - 1)]
    for combo in itertools.product(*masses):
        used = sum(combo)
        if used > 1.0 + 1e-12:
            continue
        leftover = 1.0 - used
        vec = list(combo) + [0.0]
        vec[-1] = 0.0
        cost = sum(m * c for m, c in zip(vec, costs)) + leftover * q_min
        # leftover mass parks on the cheapest bundle's class for comparison
        if cost > budget + 1e-12:
            continue
        full = list(vec)
        full[costs.index(q_min)] += leftover
        key = tuple(full)
        if best is None or key > best:
            best = key
    return best


class TestGreedyDemand:
    def test_singleton_acceptable_set(self):
        c = Bundle.unit(4, 2)
        t = make_type(c, [[c]])
        for p in (UNIFORM4, np.array([0.7, 0.1, 0.1, 0.1])):
            res = demand(t, p, 0.05)
            assert res.lottery.prob(c) == pytest.approx(1.0)

    def test_affordable_best_class_taken_outright(self):
        a, b = Bundle.of((1, 0)), Bundle.of((0, 1))
        t = make_type(b, [[a], [b]])
        res = demand(t, np.array([0.3, 0.7]), 0.0)
        # budget 0.7 covers the cheap best class fully
        assert res.lottery.prob(a) == pytest.approx(1.0)
        assert res.top_class_reached == 0

    def test_two_class_mixing(self):
        # best costs 0.75, worst costs 0.25, budget 0.5 -> equal mix
        best, worst = Bundle.of((1, 0)), Bundle.of((0, 1))
        t = make_type(worst, [[best], [worst]])
        p = np.array([0.75, 0.25])
        res = demand(t, p, 0.25)  # budget = 0.25 + 0.25 = 0.5
        assert res.lottery.prob(best) == pytest.approx(0.5)
        assert res.lottery.prob(worst) == pytest.approx(0.5)
        assert res.expenditure == pytest.approx(0.5)

    def test_free_goods_ride(self):
        a, b = Bundle.of((1, 0)), Bundle.of((0, 1))
        t = make_type(b, [[a], [b]])
        res = demand(t, np.array([0.0, 1.0]), 0.0)
        assert res.lottery.prob(a) == pytest.approx(1.0)

    def test_budget_never_exceeded(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            m = int(rng.integers(2, 5))
            bundles = []
            seen = set()
            while len(bundles) < 4:
                b = Bundle.of(tuple(rng.integers(0, 3, size=m)))
                if sum(b.quantities) and b not in seen:
                    seen.add(b)
                    bundles.append(b)
            k = int(rng.integers(1, 4))
            splits = sorted(rng.choice(range(1, 4), size=k - 1, replace=False)) if k > 1 else []
            classes, prev = [], 0
            for s in list(splits) + [4]:
                classes.append(bundles[prev:s])
                prev = s
            t = make_type(bundles[-1], classes)
            p = rng.dirichlet(np.ones(m))
            b_relax = float(rng.uniform(0, 0.2))
            res = demand(t, p, b_relax)
            budget = price_value(p, t.endowment) + b_relax
            assert res.expenditure <= budget + 1e-9
            assert all(x in t.acceptable for x in res.lottery.support)

    def test_top_class_mass_monotone_in_budget(self):
        best, worst = Bundle.of((1, 0)), Bundle.of((0, 1))
        t = make_type(worst, [[best], [worst]])
        p = np.array([0.8, 0.2])
        last = -1.0
        for b in np.linspace(0.0, 0.7, 15):
            mass = demand(t, p, float(b)).lottery.prob(best)
            assert mass >= last - 1e-12
            last = mass

    def test_matches_grid_oracle_small_instances(self):
        rng = np.random.default_rng(23)
        for _ in range(60):
            m = 3
            bundles = []
            seen = set()
            while len(bundles) < 4:
                b = Bundle.of(tuple(rng.integers(0, 2, size=m)))
                if sum(b.quantities) and b not in seen:
                    seen.add(b)
                    bundles.append(b)
            k = int(rng.integers(1, 4))
            cut = sorted(rng.choice(range(1, 4), size=k - 1, replace=False)) if k > 1 else []
            classes, prev = [], 0
            for s in list(cut) + [4]:
                classes.append(bundles[prev:s])
                prev = s
            t = make_type(bundles[0], classes)
            p = rng.dirichlet(np.ones(m))
            b_relax = float(rng.uniform(0, 0.3))
            res = demand(t, p, b_relax)
            greedy_masses = class_masses(res.lottery, t.order)
            oracle = brute_force_demand(t, p, b_relax)
            assert oracle is not None
            assert np.max(np.abs(greedy_masses - np.asarray(oracle))) <= 0.011


class TestDemandProfile:
    def test_example_one_identities_demand_endowments(self):
        e = example_one_economy()
        prof = demand_profile(e, UNIFORM4, BudgetProfile((0.02, 0.02, 0.01), 0.05))
        assert prof["2"].lottery.prob(Bundle.unit(4, 2)) == pytest.approx(1.0)
        assert prof["3"].lottery.prob(Bundle.unit(4, 3)) == pytest.approx(1.0)

    def test_self_demand_at_zero_delta(self):
        e = example_one_economy(delta=0.0)
        prof = demand_profile(e, UNIFORM4, BudgetProfile((0.0, 0.0, 0.0), 0.0))
        for iid in e.ids:
            assert prof[iid].lottery == e.type_of(iid).endowment

    def test_post_split_demands(self):
        e = apply_attack(example_one_economy(), example_one_split())
        budgets = BudgetProfile((0.02, 0.01, 0.01, 0.01), 0.05)
        prof = demand_profile(e, UNIFORM4, budgets)
        # 1a demands A outright when affordable; 1b mixes toward B
        assert prof["1a"].lottery.prob(Bundle.unit(4, 0)) > 0.5
        assert prof["1b"].lottery.prob(Bundle.unit(4, 1)) > 0.0

    def test_profile_size_mismatch(self):
        e = example_one_economy()
        with pytest.raises(EconomyError):
            demand_profile(e, UNIFORM4, BudgetProfile((0.05,), 0.05))
