"""Random economy generation for corpus experiments.

Economies draw identity types i.i.d. from a small full-support type space:
each type is endowed with one unit of a good and ranks single-unit bundles
of two other goods above keeping its endowment, so demand is price-elastic
and markets genuinely clear.  Capacities equal the endowment totals, which
keeps the feasibility-in-expectation identity exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .economy import (
    Bundle,
    Economy,
    EconomyError,
    IdentityType,
    Lottery,
    WeakOrder,
    economy_to_spec,
    make_economy,
)


@dataclass(frozen=True)
class TradingType:
    """Template: endowed with `units` of `endow` and chasing single-unit
    bundles of `wants` in order, with the endowment itself acceptable and
    ranked last (trade up or keep).

    Every unit of probability mass lands on some real bundle, so aggregate
    demand mass is conserved and the set of feasible prices is a thin shell,
    which pins the solver's stopping point.
    """

    endow: int
    wants: tuple[int, ...]
    units: int = 1

    def realize(self, m: int) -> IdentityType:
        e_bundle = Bundle.unit(m, self.endow, self.units)
        classes = [[Bundle.unit(m, g)] for g in self.wants]
        classes.append([e_bundle])
        order = WeakOrder.of(classes)
        return IdentityType(Lottery.degenerate(e_bundle), order.universe, order)


def default_type_space(m: int = 4, n_types: int = 6) -> list[TradingType]:
    """A full-support menu dominated by two-unit endowments.

    Wealth-financed trade is what moves prices on a macroscopic scale: a
    two-unit owner chasing single-unit bundles is rationed by the price
    ratio, not by the tiny budget relaxation, so demand responds smoothly
    at the scale Sybil attacks perturb prices.  Chased goods are asymmetric
    so equilibrium prices separate and cost-order ties stay away from the
    equilibrium neighborhood."""
    if m < 2:
        raise EconomyError("trading type space needs at least 2 goods")
    if m == 2:
        base = [TradingType(0, (1,), 2), TradingType(1, (0,), 2)]
        return [base[k % 2] for k in range(n_types)]
    second = [2 % m, 0, 3 % m, 1]
    menu = [
        TradingType(0, (1 % m, second[0]), 2),
        TradingType(1 % m, (2 % m, second[1]), 2),
        TradingType(2 % m, (1 % m, second[2]), 2),
        TradingType(3 % m, (2 % m, second[3]), 2),
        TradingType(0, (1 % m,), 1),
        TradingType(3 % m, (2 % m,), 1),
    ]
    return [menu[k % len(menu)] for k in range(n_types)]


def generate_economy(
    n: int,
    seed: int,
    m: int = 4,
    type_space: Sequence[TradingType] | None = None,
    delta: float = 0.1,
    principal_share: float = 0.0,
    principal: str = "P0",
) -> Economy:
    """An i.i.d.-style economy of n identities over the type space.

    The first len(type_space) identities cycle through the menu so every
    endowment good is present (capacities stay positive); the rest draw
    uniformly.  When principal_share > 0 the first ceil(share * n)
    identities belong to `principal`; everyone else is their own principal.
    """
    space = list(type_space) if type_space is not None else default_type_space(m)
    if not space:
        raise EconomyError("empty type space")
    if n < len(space):
        picks = [space[k % len(space)] for k in range(n)]
    else:
        rng = np.random.default_rng(seed)
        picks = [space[k % len(space)] for k in range(len(space))]
        picks += [space[int(i)] for i in rng.integers(0, len(space), size=n - len(space))]
    realized = [t.realize(m) for t in picks]

    caps = [0] * m
    for t in picks:
        caps[t.endow] += t.units

    block = int(np.ceil(principal_share * n)) if principal_share > 0 else 0
    identities = []
    ownership = {}
    for k, t in enumerate(realized):
        iid = f"a{k}"
        identities.append((iid, t))
        ownership[iid] = principal if k < block else f"h{k}"
    return make_economy(m, caps, identities, ownership, delta)


def preference_menu(e: Economy, type_space: Sequence[TradingType] | None = None) -> list[IdentityType]:
    """Misreport donors: the realized preference side of the type space."""
    space = list(type_space) if type_space is not None else default_type_space(e.m)
    return [t.realize(e.m) for t in space]


def self_demand_economy(n: int = 4, m: int = 2, delta: float = 0.05) -> Economy:
    """Every identity's sole acceptable bundle is its endowment: demand is
    constant in prices, every simplex point is feasible, and the regularity
    assumptions fail by construction."""
    identities = []
    ownership = {}
    caps = [0] * m
    for k in range(n):
        g = k % m
        caps[g] += 1
        b = Bundle.unit(m, g)
        t = IdentityType(Lottery.degenerate(b), frozenset([b]), WeakOrder.of([[b]]))
        iid = f"s{k}"
        identities.append((iid, t))
        ownership[iid] = f"h{k}"
    return make_economy(m, caps, identities, ownership, delta)


def corpus_generate(
    template: dict,
    count: int,
    seed: int,
    out_dir: str | Path,
) -> list[Path]:
    """Write `count` economy spec files drawn from the template.

    Template keys: n, m, delta, n_types, principal_share.  Each file embeds
    the per-economy seed so any spec can be regenerated independently.
    """
    n = int(template.get("n", 20))
    m = int(template.get("m", 4))
    n_types = int(template.get("n_types", 6))
    delta = float(template.get("delta", 0.1))
    share = float(template.get("principal_share", 0.0))
    if n_types < 1:
        raise EconomyError("type space must be non-empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    space = default_type_space(m, n_types)
    paths = []
    for k in range(count):
        econ_seed = int(np.random.SeedSequence((seed, k)).generate_state(1)[0])
        e = generate_economy(n, econ_seed, m, space, delta, principal_share=share)
        spec = economy_to_spec(e)
        spec["meta"] = {"seed": econ_seed, "index": k, "template": dict(template)}
        path = out / f"economy_{k:04d}.json"
        path.write_text(json.dumps(spec, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        paths.append(path)
    return paths
