"""Stochastic-dominance preferences and the random demand correspondence.

Demand is ordinal: given prices, an endowment and a realized budget
relaxation, an identity receives the sd-lexicographically maximal affordable
lottery, computed by greedy water-filling over indifference classes with
expenditure-minimizing tie-breaking.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .economy import TOL, Bundle, Economy, EconomyError, IdentityType, Lottery, WeakOrder


class FosdOutcome(enum.Enum):
    X_DOMINATES = "x_dominates"
    Y_DOMINATES = "y_dominates"
    EQUIVALENT = "equivalent"
    INCOMPARABLE = "incomparable"


@dataclass(frozen=True)
class BudgetProfile:
    """Realized budget relaxations b_i >= 0 with sum(b_i) = delta."""

    relaxations: tuple[float, ...]
    delta: float

    def __post_init__(self):
        if any(b < -TOL for b in self.relaxations):
            raise EconomyError("negative budget relaxation")
        if abs(sum(self.relaxations) - self.delta) > 1e-9:
            raise EconomyError(
                f"relaxations sum to {sum(self.relaxations):.12g}, expected delta={self.delta}"
            )


@dataclass
class DemandResult:
    """One identity's optimal random demand at given prices and budget."""

    lottery: Lottery
    expenditure: float
    top_class_reached: int


def price_value(p: np.ndarray, x: Lottery) -> float:
    """Expected price value E[p . x] of a lottery."""
    p = np.asarray(p, dtype=float)
    if p.shape[0] != len(x.support[0]):
        raise EconomyError("price vector and bundle dimensions differ")
    return float(sum(prob * float(p @ b.as_array()) for b, prob in x.outcomes))


def class_masses(x: Lottery, order: WeakOrder) -> np.ndarray:
    """Probability mass per indifference class (best class first)."""
    out = np.zeros(order.n_classes)
    for b, prob in x.outcomes:
        try:
            out[order.rank(b)] += prob
        except KeyError:
            raise EconomyError(f"support bundle {b} absent from the weak order") from None
    return out


def fosd_compare(x: Lottery, y: Lottery, order: WeakOrder, tol: float = 1e-9) -> FosdOutcome:
    """First-order stochastic dominance of x over y under a weak order.

    x dominates iff its upper-contour probability is >= y's against every
    acceptable bundle, strictly somewhere; cumulative class masses carry all
    the information since P[x >= z] only depends on z's class.
    """
    cx = np.cumsum(class_masses(x, order))
    cy = np.cumsum(class_masses(y, order))
    diff = cx - cy
    if np.all(np.abs(diff) <= tol):
        return FosdOutcome.EQUIVALENT
    if np.all(diff >= -tol):
        return FosdOutcome.X_DOMINATES
    if np.all(diff <= tol):
        return FosdOutcome.Y_DOMINATES
    return FosdOutcome.INCOMPARABLE


def sample_budget_relaxations(n: int, delta: float, rng: np.random.Generator) -> BudgetProfile:
    """Symmetric Dirichlet(1,...,1) draw on the delta-simplex."""
    if n < 1:
        raise EconomyError("need at least one identity to draw relaxations")
    if delta < 0:
        raise EconomyError("delta must be non-negative")
    if delta == 0.0:
        return BudgetProfile((0.0,) * n, 0.0)
    draw = rng.dirichlet(np.ones(n)) * delta
    # guard against float drift in the sum constraint
    draw = draw * (delta / draw.sum())
    return BudgetProfile(tuple(float(b) for b in draw), delta)


def budget_matrix(n: int, delta: float, draws: int, rng: np.random.Generator) -> np.ndarray:
    """(draws, n) matrix of independent budget-relaxation profiles."""
    if delta == 0.0:
        return np.zeros((draws, n))
    mat = rng.dirichlet(np.ones(n), size=draws) * delta
    return mat


# ---------------------------------------------------------------------------
# Greedy water-filling demand
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Prepared:
    """Per-type bundle arrays, cached so repeated price evaluations are cheap."""

    class_bundles: tuple[tuple[Bundle, ...], ...]
    class_arrays: tuple[np.ndarray, ...]  # (len(class), m) each
    endow_expect: np.ndarray


@lru_cache(maxsize=None)
def _prepare(t: IdentityType) -> _Prepared:
    class_bundles = tuple(tuple(sorted(cls_)) for cls_ in t.order.classes)
    class_arrays = tuple(
        np.stack([b.as_array() for b in bundles]) for bundles in class_bundles
    )
    return _Prepared(class_bundles, class_arrays, t.endowment.expectation())


def _class_costs(prep: _Prepared, p: np.ndarray):
    """Cheapest cost and representative bundle index per class, plus global min."""
    costs = []
    reps = []
    for arr in prep.class_arrays:
        c = arr @ p
        k = int(np.argmin(c))  # ties resolved to the lexicographically first bundle
        costs.append(float(c[k]))
        reps.append(k)
    q = np.asarray(costs)
    k_min = int(np.argmin(q))  # earlier (better) class wins cost ties
    return q, reps, k_min


def demand_masses(t: IdentityType, p: np.ndarray, budgets: np.ndarray):
    """Vectorized greedy demand over a batch of realized budget relaxations.

    Returns (pi, residual, rep_bundles, cheapest_class, spend) where pi has
    shape (draws, K): probability assigned to each class's cheapest bundle,
    residual is the leftover mass placed on the globally cheapest acceptable
    bundle, and spend is the per-draw expenditure.
    """
    prep = _prepare(t)
    p = np.asarray(p, dtype=float)
    budgets = np.atleast_1d(np.asarray(budgets, dtype=float))
    q, reps, k_min = _class_costs(prep, p)
    q_min = q[k_min]
    B = float(prep.endow_expect @ p) + budgets

    draws = budgets.shape[0]
    K = len(q)
    pi = np.zeros((draws, K))
    remaining = np.ones(draws)
    spent = np.zeros(draws)
    for k in range(K):
        gap = q[k] - q_min
        if gap <= TOL:
            take = remaining.copy()
        else:
            slack = B - spent - remaining * q_min
            take = np.minimum(remaining, np.maximum(slack, 0.0) / gap)
        pi[:, k] = take
        spent += take * q[k]
        remaining = remaining - take
    residual = np.clip(remaining, 0.0, 1.0)
    spent += residual * q_min
    rep_bundles = tuple(prep.class_bundles[k][reps[k]] for k in range(K))
    cheapest = rep_bundles[k_min]
    return pi, residual, rep_bundles, (k_min, cheapest), spent


def expected_demand(t: IdentityType, p: np.ndarray, budgets: np.ndarray) -> np.ndarray:
    """Mean expected bundle of the greedy demand over budget draws."""
    pi, residual, reps, (k_min, cheapest), _ = demand_masses(t, p, budgets)
    mean_pi = pi.mean(axis=0)
    mean_res = residual.mean()
    out = np.zeros(len(p))
    for k, b in enumerate(reps):
        if mean_pi[k] > 0.0:
            out += mean_pi[k] * b.as_array()
    out += mean_res * cheapest.as_array()
    return out


def demand(t: IdentityType, p: np.ndarray, b: float) -> DemandResult:
    """Optimal random demand of one identity at prices p and relaxation b.

    The budget is price_value(endowment) + b, so the endowment is always
    affordable and the demand correspondence is non-empty.
    """
    if b < 0:
        raise EconomyError("budget relaxation must be non-negative")
    pi, residual, reps, (k_min, cheapest), spent = demand_masses(t, p, np.array([b]))
    pairs: dict[Bundle, float] = {}
    top = None
    for k, bundle in enumerate(reps):
        mass = float(pi[0, k])
        if mass > TOL:
            pairs[bundle] = pairs.get(bundle, 0.0) + mass
            if top is None:
                top = k
    res = float(residual[0])
    if res > TOL:
        pairs[cheapest] = pairs.get(cheapest, 0.0) + res
        if top is None:
            top = k_min
    lottery = Lottery.from_pairs(pairs)
    return DemandResult(lottery, float(spent[0]), top if top is not None else 0)


def demand_profile(e: Economy, p: np.ndarray, budgets: BudgetProfile) -> dict[str, DemandResult]:
    """Per-identity demand under shared prices and a realized budget profile."""
    if len(budgets.relaxations) != e.n:
        raise EconomyError("budget profile size differs from the identity count")
    return {
        iid: demand(t, p, budgets.relaxations[k])
        for k, (iid, t) in enumerate(e.identities)
    }


def mixture_allocation(e: Economy, p: np.ndarray, budget_mat: np.ndarray) -> dict[str, Lottery]:
    """Per-identity demand lottery averaged over a matrix of budget draws."""
    out: dict[str, Lottery] = {}
    for k, (iid, t) in enumerate(e.identities):
        pi, residual, reps, (k_min, cheapest), _ = demand_masses(t, p, budget_mat[:, k])
        pairs: dict[Bundle, float] = {}
        mean_pi = pi.mean(axis=0)
        for c, bundle in enumerate(reps):
            if mean_pi[c] > TOL:
                pairs[bundle] = pairs.get(bundle, 0.0) + float(mean_pi[c])
        res = float(residual.mean())
        if res > TOL:
            pairs[cheapest] = pairs.get(cheapest, 0.0) + res
        total = sum(pairs.values())
        pairs = {b: v / total for b, v in pairs.items()}
        out[iid] = Lottery.from_pairs(pairs)
    return out
