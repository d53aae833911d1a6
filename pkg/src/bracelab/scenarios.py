"""The canonical three-identity attack scenario and related fixtures.

Three identities trade four goods A-D.  Identity 1 (principal P) holds A
and also finds A plus B acceptable, though holding the extra unit is a
burden (no free disposal); identities 2 and 3 hold and want only C and D.
Capacities equal the endowment totals, so good B has zero capacity: nobody
brings any B to the exchange.  Truthful reports create no demand for B and
uniform prices clear the market.

Principal P's canonical split replaces identity 1 with 1a (wants A) and 1b
(wants B), each endowed with half of the original lottery.  The fabricated
identity-level demand for B meets zero capacity, so the relaxed feasibility
residual turns positive at B and the price of B is bid up from its
pre-attack level, while P's reported rank-utility rises.
"""

from __future__ import annotations

from .attacks import AttackFamily
from .economy import (
    Bundle,
    Economy,
    IdentityType,
    Lottery,
    SybilAttack,
    WeakOrder,
    empty_attack,
    make_economy,
)

GOODS = ("A", "B", "C", "D")


def _unit(good: int) -> Bundle:
    return Bundle.unit(4, good)


def example_one_economy(delta: float = 0.05) -> Economy:
    a = _unit(0)
    ab = Bundle.of((1, 1, 0, 0))
    c, d = _unit(2), _unit(3)
    t1 = IdentityType(Lottery.degenerate(a), frozenset([a, ab]), WeakOrder.of([[a], [ab]]))
    t2 = IdentityType(Lottery.degenerate(c), frozenset([c]), WeakOrder.of([[c]]))
    t3 = IdentityType(Lottery.degenerate(d), frozenset([d]), WeakOrder.of([[d]]))
    return make_economy(
        m=4,
        capacities=(1, 0, 1, 1),
        identities=(("1", t1), ("2", t2), ("3", t3)),
        ownership={"1": "P", "2": "H2", "3": "H3"},
        delta=delta,
        good_names=GOODS,
    )


def example_one_split() -> SybilAttack:
    """Replace identity 1 with 1a reporting {A} and 1b reporting {B},
    splitting the endowment into two half-lotteries."""
    a, b = _unit(0), _unit(1)
    t1a = IdentityType(Lottery.degenerate(a), frozenset([a]), WeakOrder.of([[a]]))
    t1b = IdentityType(Lottery.degenerate(b), frozenset([b]), WeakOrder.of([[b]]))
    return SybilAttack(
        principal="P",
        kind="split",
        replacements={"1": ((0.5, t1a), (0.5, t1b))},
    )


def example_one_family() -> AttackFamily:
    return AttackFamily(
        kind="splits",
        principal="P",
        candidates=(empty_attack("P"), example_one_split()),
    )
