"""Domain types for combinatorial exchange economies.

Goods, bundles, lotteries, weak ordinal preferences, identities, principals,
economies, empirical type distributions, and the discrete Wasserstein-1
metric.  All types are immutable values after construction and safe to share
read-only across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

TOL = 1e-9


class EconomyError(ValueError):
    """Raised when an economy or one of its components fails validation."""


@dataclass(frozen=True, order=True)
class Bundle:
    """An integral vector of good quantities."""

    quantities: tuple[int, ...]

    def __post_init__(self):
        if len(self.quantities) == 0:
            raise EconomyError("bundle must cover at least one good")
        for q in self.quantities:
            if not isinstance(q, (int, np.integer)) or q < 0:
                raise EconomyError(f"bundle entries must be non-negative integers, got {self.quantities}")
        # normalize numpy ints so hashing/eq is stable
        object.__setattr__(self, "quantities", tuple(int(q) for q in self.quantities))

    @classmethod
    def of(cls, quantities: Iterable[int]) -> "Bundle":
        return cls(tuple(int(q) for q in quantities))

    @classmethod
    def zero(cls, m: int) -> "Bundle":
        return cls((0,) * m)

    @classmethod
    def unit(cls, m: int, good: int, units: int = 1) -> "Bundle":
        q = [0] * m
        q[good] = units
        return cls(tuple(q))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.quantities, dtype=float)

    def remove_one(self, good: int) -> "Bundle":
        """One unit of `good` removed, floored at zero."""
        q = list(self.quantities)
        q[good] = max(0, q[good] - 1)
        return Bundle(tuple(q))

    def dominates(self, other: "Bundle") -> bool:
        """Componentwise >=."""
        return all(a >= b for a, b in zip(self.quantities, other.quantities))

    def __len__(self) -> int:
        return len(self.quantities)

    def __repr__(self) -> str:
        return f"Bundle{self.quantities}"


@dataclass(frozen=True)
class Lottery:
    """A finite probability distribution over bundles.

    Probabilities must sum to one within 1e-9 and the support must be
    non-empty.  Outcomes are stored sorted for canonical hashing.
    """

    outcomes: tuple[tuple[Bundle, float], ...]

    def __post_init__(self):
        if not self.outcomes:
            raise EconomyError("lottery support is empty")
        total = 0.0
        seen = set()
        for b, p in self.outcomes:
            if b in seen:
                raise EconomyError(f"duplicate support bundle {b}")
            seen.add(b)
            if p < -TOL:
                raise EconomyError(f"negative probability {p} on {b}")
            total += p
        if abs(total - 1.0) > TOL:
            raise EconomyError(f"lottery probabilities sum to {total}, expected 1")
        object.__setattr__(self, "outcomes", tuple(sorted(self.outcomes)))

    @classmethod
    def from_pairs(cls, pairs: Mapping[Bundle, float] | Iterable[tuple[Bundle, float]]) -> "Lottery":
        if isinstance(pairs, Mapping):
            pairs = pairs.items()
        merged: dict[Bundle, float] = {}
        for b, p in pairs:
            if p <= 0.0:
                continue
            merged[b] = merged.get(b, 0.0) + float(p)
        return cls(tuple(merged.items()))

    @classmethod
    def degenerate(cls, bundle: Bundle) -> "Lottery":
        return cls(((bundle, 1.0),))

    @property
    def support(self) -> tuple[Bundle, ...]:
        return tuple(b for b, _ in self.outcomes)

    def prob(self, bundle: Bundle) -> float:
        for b, p in self.outcomes:
            if b == bundle:
                return p
        return 0.0

    def expectation(self) -> np.ndarray:
        """Componentwise expected bundle."""
        m = len(self.outcomes[0][0])
        out = np.zeros(m)
        for b, p in self.outcomes:
            out += p * b.as_array()
        return out

    def scaled(self, weight: float, m: int) -> "Lottery":
        """Mixture of this lottery (weight) with the zero bundle (1 - weight)."""
        if not 0.0 <= weight <= 1.0 + TOL:
            raise EconomyError(f"scale weight {weight} outside [0, 1]")
        pairs = {b: p * weight for b, p in self.outcomes}
        zero = Bundle.zero(m)
        pairs[zero] = pairs.get(zero, 0.0) + (1.0 - weight)
        return Lottery.from_pairs(pairs)


@dataclass(frozen=True)
class WeakOrder:
    """An ordered partition of acceptable bundles, best class first."""

    classes: tuple[frozenset[Bundle], ...]

    def __post_init__(self):
        if not self.classes:
            raise EconomyError("weak order has no indifference classes")
        seen: set[Bundle] = set()
        for cls_ in self.classes:
            if not cls_:
                raise EconomyError("empty indifference class")
            if seen & cls_:
                raise EconomyError("indifference classes are not disjoint")
            seen |= cls_
        ranks = {b: k for k, cls_ in enumerate(self.classes) for b in cls_}
        object.__setattr__(self, "_ranks", ranks)

    @classmethod
    def of(cls, classes: Iterable[Iterable[Bundle]]) -> "WeakOrder":
        return cls(tuple(frozenset(c) for c in classes))

    @property
    def universe(self) -> frozenset[Bundle]:
        return frozenset(self._ranks)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def rank(self, bundle: Bundle) -> int:
        """0 = best class.  Raises KeyError for bundles outside the order."""
        return self._ranks[bundle]

    def appended_bottom(self, bundles: Iterable[Bundle]) -> "WeakOrder":
        """New order with `bundles` added as a single worst class (existing ones kept)."""
        extra = frozenset(b for b in bundles if b not in self._ranks)
        if not extra:
            return self
        return WeakOrder(self.classes + (extra,))


@dataclass(frozen=True)
class IdentityType:
    """A reported type: endowment lottery, acceptable set and weak order."""

    endowment: Lottery
    acceptable: frozenset[Bundle]
    order: WeakOrder

    def __post_init__(self):
        if not self.acceptable:
            raise EconomyError("acceptable set is empty")
        lengths = {len(b) for b in self.acceptable} | {len(b) for b in self.endowment.support}
        if len(lengths) != 1:
            raise EconomyError("bundles of inconsistent good counts in one type")
        if self.order.universe != self.acceptable:
            raise EconomyError("weak order does not cover the acceptable set exactly")
        for b in self.endowment.support:
            if b not in self.acceptable:
                raise EconomyError(f"endowment bundle {b} outside the acceptable set")

    @property
    def m(self) -> int:
        return len(next(iter(self.acceptable)))

    def with_appended_endowment(self, endowment: Lottery) -> "IdentityType":
        """Replace the endowment, appending its out-of-set support bundles as a
        bottom indifference class (endowment-only bundles: acceptable, never preferred)."""
        extra = [b for b in endowment.support if b not in self.acceptable]
        order = self.order.appended_bottom(extra)
        return IdentityType(endowment, self.acceptable | frozenset(extra), order)


def make_type(endowment: Lottery, classes: Iterable[Iterable[Bundle]]) -> IdentityType:
    """Build a type from an endowment and preference classes, appending any
    endowment-only bundles as a bottom class."""
    order = WeakOrder.of(classes)
    extra = [b for b in endowment.support if b not in order.universe]
    order = order.appended_bottom(extra)
    return IdentityType(endowment, order.universe, order)


@dataclass
class Economy:
    """A combinatorial exchange economy.

    Fields mirror the ingestion schema: good count, capacity vector,
    identities (id, type) in a fixed order, the ownership map onto
    principals, and the budget-relaxation parameter delta.

    Treated as immutable after construction.
    """

    m: int
    capacities: tuple[int, ...]
    identities: tuple[tuple[str, IdentityType], ...]
    ownership: dict[str, str]
    delta: float
    good_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.m <= 0:
            raise EconomyError("economy needs at least one good")
        if len(self.capacities) != self.m:
            raise EconomyError("capacity vector length differs from good count")
        if any(c < 0 or int(c) != c for c in self.capacities):
            raise EconomyError("capacities must be non-negative integers")
        if sum(self.capacities) <= 0:
            raise EconomyError("at least one good must have positive capacity")
        if self.delta < 0:
            raise EconomyError("delta must be non-negative")
        if not self.identities:
            raise EconomyError("economy has no identities")
        ids = [i for i, _ in self.identities]
        if len(set(ids)) != len(ids):
            raise EconomyError("duplicate identity ids")
        for i, t in self.identities:
            if t.m != self.m:
                raise EconomyError(f"identity {i} has bundles of wrong good count")
            if i not in self.ownership:
                raise EconomyError(f"identity {i} missing from the ownership map")
        if set(self.ownership) != set(ids):
            raise EconomyError("ownership map keys differ from the identity set")
        if not self.good_names:
            self.good_names = tuple(f"g{j}" for j in range(self.m))
        self.capacities = tuple(int(c) for c in self.capacities)

    @property
    def n(self) -> int:
        return len(self.identities)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(i for i, _ in self.identities)

    @property
    def principals(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for i, _ in self.identities:
            seen.setdefault(self.ownership[i], None)
        return tuple(seen)

    def type_of(self, identity: str) -> IdentityType:
        for i, t in self.identities:
            if i == identity:
                return t
        raise KeyError(identity)

    def owned_by(self, principal: str) -> tuple[str, ...]:
        return tuple(i for i, _ in self.identities if self.ownership[i] == principal)

    def capacity_array(self) -> np.ndarray:
        return np.asarray(self.capacities, dtype=float)

    def aggregate_endowment(self) -> np.ndarray:
        out = np.zeros(self.m)
        for _, t in self.identities:
            out += t.endowment.expectation()
        return out


def validate_endowment_feasibility(e: Economy) -> None:
    """Check sum of expected endowments equals the capacity vector."""
    agg = e.aggregate_endowment()
    cap = e.capacity_array()
    if np.any(agg > cap + TOL):
        j = int(np.argmax(agg - cap))
        raise EconomyError(
            f"endowments exceed capacity on good {e.good_names[j]}: {agg[j]:.9g} > {cap[j]:.9g}"
        )
    if np.any(np.abs(agg - cap) > TOL):
        j = int(np.argmax(np.abs(agg - cap)))
        raise EconomyError(
            f"endowment infeasible on good {e.good_names[j]}: sum E[e_i] = {agg[j]:.9g}, capacity {cap[j]:.9g}"
        )


def make_economy(
    m: int,
    capacities: Iterable[int],
    identities: Iterable[tuple[str, IdentityType]],
    ownership: Mapping[str, str],
    delta: float,
    good_names: Iterable[str] = (),
    check_endowments: bool = True,
) -> Economy:
    e = Economy(m, tuple(capacities), tuple(identities), dict(ownership), float(delta), tuple(good_names))
    if check_endowments:
        validate_endowment_feasibility(e)
    return e


# ---------------------------------------------------------------------------
# JSON spec ingestion: the single economy format consumed by the CLI.
# {goods: [{name, capacity}], identities: [{id, principal, endowment:
#  [{bundle, prob}], acceptable: [bundle], order: [[bundle, ...], ...]}], delta}
# ---------------------------------------------------------------------------


def build_economy(spec: Mapping, check_endowments: bool = True) -> Economy:
    """Build and validate an Economy from its JSON-style description."""
    try:
        goods = spec["goods"]
        identities_spec = spec["identities"]
        delta = float(spec["delta"])
    except (KeyError, TypeError) as exc:
        raise EconomyError(f"malformed economy spec: {exc}") from exc
    m = len(goods)
    names = tuple(str(g["name"]) for g in goods)
    caps = tuple(int(g["capacity"]) for g in goods)

    def to_bundle(arr) -> Bundle:
        if len(arr) != m:
            raise EconomyError(f"bundle {arr} has length {len(arr)}, economy has {m} goods")
        return Bundle.of(arr)

    identities = []
    ownership = {}
    for ident in identities_spec:
        iid = str(ident["id"])
        ownership[iid] = str(ident["principal"])
        endow = Lottery.from_pairs(
            [(to_bundle(entry["bundle"]), float(entry["prob"])) for entry in ident["endowment"]]
        )
        acceptable = frozenset(to_bundle(b) for b in ident["acceptable"])
        order = WeakOrder.of([[to_bundle(b) for b in cls_] for cls_ in ident["order"]])
        if order.universe != acceptable:
            raise EconomyError(f"identity {iid}: order does not cover the acceptable set")
        identities.append((iid, IdentityType(endow, acceptable, order)))
    return make_economy(m, caps, identities, ownership, delta, names, check_endowments)


def economy_to_spec(e: Economy) -> dict:
    """Inverse of build_economy, for writing corpus files."""
    out = {
        "goods": [{"name": n, "capacity": c} for n, c in zip(e.good_names, e.capacities)],
        "delta": e.delta,
        "identities": [],
    }
    for iid, t in e.identities:
        out["identities"].append(
            {
                "id": iid,
                "principal": e.ownership[iid],
                "endowment": [{"bundle": list(b.quantities), "prob": p} for b, p in t.endowment.outcomes],
                "acceptable": sorted(list(b.quantities) for b in t.acceptable),
                "order": [sorted(list(b.quantities) for b in cls_) for cls_ in t.order.classes],
            }
        )
    return out


# ---------------------------------------------------------------------------
# Empirical type distributions and the discrete W1 metric
# ---------------------------------------------------------------------------


@dataclass
class EmpiricalDistribution:
    """Empirical distribution of identity types: weights are multiples of 1/n."""

    weights: dict[IdentityType, float]
    n: int

    def __post_init__(self):
        total = sum(self.weights.values())
        if abs(total - 1.0) > TOL:
            raise EconomyError(f"empirical weights sum to {total}")


def empirical_distribution(e: Economy) -> EmpiricalDistribution:
    weights: dict[IdentityType, float] = {}
    for _, t in e.identities:
        weights[t] = weights.get(t, 0.0) + 1.0 / e.n
    return EmpiricalDistribution(weights, e.n)


def w1_discrete(mu: EmpiricalDistribution, nu: EmpiricalDistribution) -> float:
    """Wasserstein-1 under the discrete metric = total variation distance."""
    atoms = set(mu.weights) | set(nu.weights)
    return 0.5 * sum(abs(mu.weights.get(t, 0.0) - nu.weights.get(t, 0.0)) for t in atoms)


# ---------------------------------------------------------------------------
# Sybil attacks (structure only; application lives in bracelab.attacks)
# ---------------------------------------------------------------------------

ATTACK_KINDS = ("split", "misreport", "mass-sequence-step")


@dataclass
class SybilAttack:
    """A structured perturbation of an economy attributable to one principal.

    replacements maps an original identity id to the list of
    (endowment share weight, reported type) pairs that replace it.  For
    misreports each list has a single entry with weight 1 and the identity
    keeps its id.  `alpha`, when given, must match infiltration_rate.
    """

    principal: str
    kind: str
    replacements: dict[str, tuple[tuple[float, IdentityType], ...]] = field(default_factory=dict)
    alpha: float | None = None
    misreport_endowments: bool = False
    # mass-sequence-step parameters
    sybil_count: int = 0
    designated_good: int | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise EconomyError(f"unknown attack kind {self.kind!r}")
        self.replacements = {
            k: tuple((float(w), t) for w, t in v) for k, v in self.replacements.items()
        }

    @property
    def is_empty(self) -> bool:
        return not self.replacements and self.sybil_count == 0


def empty_attack(principal: str) -> SybilAttack:
    return SybilAttack(principal=principal, kind="misreport", replacements={}, alpha=0.0)


def infiltration_rate(a: SybilAttack, e: Economy) -> float:
    """New or retyped identities as a fraction of the pre-attack identity count."""
    known = set(e.ids)
    for iid in a.replacements:
        if iid not in known:
            raise EconomyError(f"attack references unknown identity {iid!r}")
    if a.kind == "split":
        new = sum(len(reps) - 1 for reps in a.replacements.values())
    elif a.kind == "misreport":
        new = len(a.replacements)
    else:  # mass-sequence-step
        new = a.sybil_count
    rate = new / e.n
    if a.alpha is not None and abs(a.alpha - rate) > 1e-9:
        raise EconomyError(f"attack alpha {a.alpha} inconsistent with structure ({rate})")
    return rate


def identity_share(principal: str, e: Economy) -> float:
    """s_{p,n}: fraction of identities owned by the principal."""
    if principal not in set(e.ownership.values()):
        raise EconomyError(f"unknown principal {principal!r}")
    return len(e.owned_by(principal)) / e.n


def aggregate_by_principal(
    allocation: Mapping[str, Lottery],
    e: Economy,
    extra_principals: Iterable[str] = (),
) -> dict[str, np.ndarray]:
    """Per-principal sum of expected bundles.

    Principals listed in `extra_principals` but owning no identity get a zero
    vector (the caller is flagging an empty principal explicitly).
    """
    out: dict[str, np.ndarray] = {p: np.zeros(e.m) for p in e.principals}
    for p in extra_principals:
        out.setdefault(p, np.zeros(e.m))
    for iid, _ in e.identities:
        if iid not in allocation:
            raise EconomyError(f"allocation missing identity {iid!r}")
        out[e.ownership[iid]] += allocation[iid].expectation()
    return out
