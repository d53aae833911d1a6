"""Construction and search of Sybil attacks.

Identity splits, coordinated misreports, unbounded-mass economy sequences,
and brute/random search over attack families for profitable deviations.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .economy import (
    Bundle,
    Economy,
    EconomyError,
    IdentityType,
    Lottery,
    SybilAttack,
    WeakOrder,
    empty_attack,
    make_economy,
)

TOL = 1e-9


def _split_ids(original: str, count: int) -> list[str]:
    """1 -> [1a, 1b, ...]; falls back to numeric suffixes past 26 pieces."""
    if count <= len(string.ascii_lowercase):
        return [f"{original}{string.ascii_lowercase[k]}" for k in range(count)]
    return [f"{original}_{k}" for k in range(count)]


def apply_attack(e: Economy, a: SybilAttack) -> Economy:
    """Perturb an economy by one principal's attack.

    Split attacks replace an identity with several new ones owned by the
    same principal; each piece's endowment is the share-scaled original
    lottery (zero bundle absorbing the leftover weight), so the aggregate
    expected endowment is conserved exactly.  Out-of-set endowment bundles
    are appended to the reported acceptable set as a bottom class.
    """
    if a.is_empty:
        return e
    if a.kind == "misreport":
        retyping = {}
        for iid, reps in a.replacements.items():
            if len(reps) != 1 or abs(reps[0][0] - 1.0) > TOL:
                raise EconomyError("misreport replacements must be a single full-weight type")
            retyping[iid] = reps[0][1]
        return coordinated_misreport(
            e, a.principal, retyping, allow_endowment_misreport=a.misreport_endowments
        )
    if a.kind != "split":
        raise EconomyError(f"apply_attack cannot apply kind {a.kind!r} directly")

    known = dict(e.identities)
    for iid in a.replacements:
        if iid not in known:
            raise EconomyError(f"attack references unknown identity {iid!r}")
        if e.ownership[iid] != a.principal:
            raise EconomyError(f"identity {iid!r} is not owned by principal {a.principal!r}")

    identities: list[tuple[str, IdentityType]] = []
    ownership = dict(e.ownership)
    for iid, t in e.identities:
        if iid not in a.replacements:
            identities.append((iid, t))
            continue
        reps = a.replacements[iid]
        shares = [w for w, _ in reps]
        if abs(sum(shares) - 1.0) > TOL:
            raise EconomyError(f"endowment shares for {iid!r} sum to {sum(shares):.9g}, expected 1")
        del ownership[iid]
        for new_id, (share, reported) in zip(_split_ids(iid, len(reps)), reps):
            endow = t.endowment.scaled(share, e.m)
            identities.append((new_id, reported.with_appended_endowment(endow)))
            ownership[new_id] = a.principal
    return make_economy(
        e.m, e.capacities, identities, ownership, e.delta, e.good_names, check_endowments=True
    )


def coordinated_misreport(
    e: Economy,
    principal: str,
    retyping: dict[str, IdentityType],
    allow_endowment_misreport: bool = False,
) -> Economy:
    """Retype identities of one principal, keeping ids and (by default)
    true endowments.  The W1 distance between the empirical distributions
    before and after is at most the principal's identity share."""
    for iid in retyping:
        if iid not in set(e.ids):
            raise EconomyError(f"retyping references unknown identity {iid!r}")
        if e.ownership[iid] != principal:
            raise EconomyError(f"cannot retype {iid!r}: owned by {e.ownership[iid]!r}, not {principal!r}")
    identities: list[tuple[str, IdentityType]] = []
    endow_misreported = False
    for iid, t in e.identities:
        if iid not in retyping:
            identities.append((iid, t))
            continue
        reported = retyping[iid]
        if allow_endowment_misreport:
            endow_misreported = endow_misreported or reported.endowment != t.endowment
            identities.append((iid, reported))
        else:
            identities.append((iid, reported.with_appended_endowment(t.endowment)))
    return make_economy(
        e.m,
        e.capacities,
        identities,
        dict(e.ownership),
        e.delta,
        e.good_names,
        check_endowments=not endow_misreported,
    )


def reported_type(true: IdentityType, donor: IdentityType) -> IdentityType:
    """Semi-anonymous misreport: the donor's (acceptable set, order) with the
    true endowment kept, endowment-only bundles appended at the bottom."""
    return donor.with_appended_endowment(true.endowment)


def sybil_mass_type(m: int, designated_good: int, beta: float) -> IdentityType:
    """A Sybil reporting beta expected units of the designated good as its
    endowment, with the unit bundle of that good as its sole real want.

    The reported endowment floor makes E[x_i]_j >= beta at every price (the
    endowment is always affordable), realizing the demand premise of the
    non-existence audit as a configuration input.
    """
    if not 0 < beta <= 1:
        raise EconomyError("beta must lie in (0, 1]")
    unit = Bundle.unit(m, designated_good)
    zero = Bundle.zero(m)
    endow = Lottery.from_pairs({unit: beta, zero: 1.0 - beta})
    order = WeakOrder.of([[unit]]).appended_bottom([zero] if beta < 1 else [])
    return IdentityType(endow, order.universe, order)


def unbounded_sybil_sequence(
    base: Economy,
    principal: str,
    growth: Sequence[int],
    designated_good: int,
    beta: float,
) -> Iterator[tuple[Economy, frozenset[str]]]:
    """Lazy sequence of economies with |S_k| Sybils of one principal.

    Capacities stay fixed at the base vector; Sybil endowment claims add
    beta per Sybil so the endowment-feasibility equality no longer holds
    and the build check is relaxed for these perturbed economies.
    """
    if list(growth) != sorted(set(growth)) or any(g < 1 for g in growth):
        raise EconomyError("growth schedule must be strictly increasing and positive")
    if not 0 <= designated_good < base.m:
        raise EconomyError("designated good outside the economy")
    t_sybil = sybil_mass_type(base.m, designated_good, beta)
    for size in growth:
        ids = [f"sybil{j}" for j in range(size)]
        identities = tuple(base.identities) + tuple((sid, t_sybil) for sid in ids)
        ownership = dict(base.ownership)
        for sid in ids:
            ownership[sid] = principal
        econ = make_economy(
            base.m,
            base.capacities,
            identities,
            ownership,
            base.delta,
            base.good_names,
            check_endowments=False,
        )
        yield econ, frozenset(ids)


SEARCH_MODES = ("exhaustive", "random")


@dataclass
class AttackFamily:
    """An enumerable set of candidate attacks by one principal."""

    kind: str  # "splits" | "misreports"
    principal: str
    candidates: tuple[SybilAttack, ...]
    search: str = "exhaustive"
    random_draws: int = 0

    def __post_init__(self):
        if self.kind not in ("splits", "misreports"):
            raise EconomyError(f"unknown family kind {self.kind!r}")
        if self.search not in SEARCH_MODES:
            raise EconomyError(f"unknown search mode {self.search!r}")
        for cand in self.candidates:
            if cand.principal != self.principal:
                raise EconomyError("family candidates must all belong to the family principal")


@dataclass
class SearchResult:
    best_attack: SybilAttack | None
    best_gain: float
    evaluated: int
    skipped: int
    gains: list[float] = field(default_factory=list)


def attack_search(
    e: Economy,
    fam: AttackFamily,
    objective: Callable[[SybilAttack, Economy], float | None],
    budget: int,
    seed: int = 0,
) -> SearchResult:
    """Argmax of the objective over evaluated candidates.

    The objective maps (attack, attacked economy) to the principal's utility
    delta, or None when it cannot be evaluated (e.g. solver non-convergence);
    such candidates are skipped and counted.  Deterministic given the seed.
    """
    if budget < 1:
        raise EconomyError("search budget must be >= 1")
    rng = np.random.default_rng(seed)
    if fam.search == "exhaustive":
        pool = list(fam.candidates)[:budget]
    else:
        draws = fam.random_draws or budget
        idx = rng.integers(0, len(fam.candidates), size=min(draws, budget))
        pool = [fam.candidates[int(i)] for i in idx]

    best: SybilAttack | None = None
    best_gain = -np.inf
    evaluated = 0
    skipped = 0
    gains: list[float] = []
    for cand in pool:
        attacked = apply_attack(e, cand)
        gain = objective(cand, attacked)
        if gain is None:
            skipped += 1
            continue
        evaluated += 1
        gains.append(float(gain))
        if gain > best_gain:
            best, best_gain = cand, float(gain)
    if best is None:
        return SearchResult(None, float("nan"), evaluated, skipped, gains)
    return SearchResult(best, best_gain, evaluated, skipped, gains)


def misreport_family(
    e: Economy,
    principal: str,
    menu: Iterable[IdentityType],
    max_retyped: int | None = None,
    include_empty: bool = True,
) -> AttackFamily:
    """All uniform retypings of the principal's identities to menu types,
    one candidate per (subset size, menu type), plus the empty attack."""
    owned = e.owned_by(principal)
    if not owned:
        raise EconomyError(f"principal {principal!r} owns no identities")
    limit = len(owned) if max_retyped is None else min(max_retyped, len(owned))
    candidates: list[SybilAttack] = []
    if include_empty:
        candidates.append(empty_attack(principal))
    for count in range(1, limit + 1):
        chosen = owned[:count]
        for t in menu:
            candidates.append(
                SybilAttack(
                    principal=principal,
                    kind="misreport",
                    replacements={iid: ((1.0, t),) for iid in chosen},
                )
            )
    return AttackFamily("misreports", principal, tuple(candidates))
