"""Verification of the quantitative robustness claims.

Cardinal score representations, principal utilities, the price and welfare
bound checks, strategyproofness-in-the-large gain curves, the tail utility
bound and the deterrence design inequality.  Every bound check consumes
empirically estimated constants, never asserted ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .attacks import AttackFamily, apply_attack, coordinated_misreport, reported_type
from .demand import budget_matrix, demand_masses
from .diagnostics import (
    BadRegionConfig,
    RegularityEstimates,
    detect_bad_region,
    estimate_LZ,
    estimate_gamma,
    estimate_utility_lipschitz,
    sample_price_pairs,
)
from .economy import (
    Bundle,
    Economy,
    EconomyError,
    IdentityType,
    Lottery,
    SybilAttack,
    infiltration_rate,
)
from .solver import EquilibriumResult, SolverConfig, solve_brace

SCALES = ("rank", "borda", "custom")
BOUND_SLACK = 1e-6


@dataclass
class CardinalUtility:
    """Per-identity cardinal scores consistent with the ordinal types.

    Scores live in [0, 1], strictly decrease across indifference classes and
    are equal within a class.  Bundles outside an identity's acceptable set
    score zero.
    """

    scores: dict[str, dict[Bundle, float]]
    scale: str = "custom"

    def __post_init__(self):
        if self.scale not in SCALES:
            raise EconomyError(f"unknown utility scale {self.scale!r}")

    @classmethod
    def rank(cls, e: Economy) -> "CardinalUtility":
        """Normalized rank scores: class j of K scores (K - 1 - j)/(K - 1)."""
        tables: dict[str, dict[Bundle, float]] = {}
        for iid, t in e.identities:
            K = t.order.n_classes
            table = {}
            for j, cls_ in enumerate(t.order.classes):
                s = 1.0 if K == 1 else (K - 1 - j) / (K - 1)
                for b in cls_:
                    table[b] = s
            tables[iid] = table
        return cls(tables, "rank")

    @classmethod
    def borda(cls, e: Economy) -> "CardinalUtility":
        """Scores proportional to the number of strictly worse bundles."""
        tables: dict[str, dict[Bundle, float]] = {}
        for iid, t in e.identities:
            sizes = [len(c) for c in t.order.classes]
            total = sum(sizes)
            below = total
            table = {}
            for cls_, size in zip(t.order.classes, sizes):
                below -= size
                s = 1.0 if total == 1 else below / (total - 1)
                for b in cls_:
                    table[b] = s
            tables[iid] = table
        return cls(tables, "borda")

    def score(self, identity: str, bundle: Bundle) -> float:
        return self.scores[identity].get(bundle, 0.0)

    def check_consistent(self, e: Economy) -> None:
        """Exhaustive order-consistency check: sign of score differences must
        match the weak order on every acceptable pair."""
        for iid, t in e.identities:
            table = self.scores.get(iid)
            if table is None:
                raise EconomyError(f"no scores for identity {iid!r}")
            for b in t.acceptable:
                if b not in table:
                    raise EconomyError(f"identity {iid!r}: bundle {b} unscored")
                if not 0.0 <= table[b] <= 1.0:
                    raise EconomyError(f"identity {iid!r}: score for {b} outside [0, 1]")
            bundles = sorted(t.acceptable)
            for x in bundles:
                for y in bundles:
                    dr = t.order.rank(x) - t.order.rank(y)
                    ds = table[x] - table[y]
                    if dr < 0 and ds <= 0:
                        raise EconomyError(f"identity {iid!r}: {x} preferred to {y} but not scored higher")
                    if dr == 0 and abs(ds) > 1e-12:
                        raise EconomyError(f"identity {iid!r}: indifferent bundles {x}, {y} scored apart")


def lottery_score(lot: Lottery, table: dict[Bundle, float]) -> float:
    """Expected score of a lottery; unacceptable bundles score zero."""
    return float(sum(p * table.get(b, 0.0) for b, p in lot.outcomes))


def principal_utility(
    e: Economy,
    principal: str,
    p: np.ndarray,
    u: CardinalUtility,
    mc_draws: int = 256,
    seed: int = 0,
) -> float:
    """U_p: sum over owned identities of the expected score of their random
    demand at prices p, Monte Carlo averaged over budget relaxations.

    Deterministic given the seed.  A principal owning no identity scores 0.
    """
    if principal not in set(e.ownership.values()):
        raise EconomyError(f"unknown principal {principal!r}")
    owned = e.owned_by(principal)
    if not owned:
        return 0.0
    rng = np.random.default_rng(seed)
    draws = budget_matrix(e.n, e.delta, mc_draws, rng)
    col = {iid: k for k, (iid, _) in enumerate(e.identities)}
    total = 0.0
    for iid in owned:
        t = e.type_of(iid)
        table = u.scores[iid]
        pi, residual, reps, (k_min, cheapest), _ = demand_masses(t, p, draws[:, col[iid]])
        mean_pi = pi.mean(axis=0)
        val = float(residual.mean()) * table.get(cheapest, 0.0)
        for k, b in enumerate(reps):
            val += float(mean_pi[k]) * table.get(b, 0.0)
        total += val
    return total


# ---------------------------------------------------------------------------
# Bound reports
# ---------------------------------------------------------------------------


@dataclass
class BoundReport:
    observed: float
    bound: float
    alpha: float
    constants_used: RegularityEstimates
    usable: bool = True
    satisfied: bool = field(init=False)
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        self.satisfied = bool(self.observed <= self.bound + BOUND_SLACK)

    def to_dict(self) -> dict:
        return {
            "observed": self.observed,
            "bound": self.bound,
            "alpha": self.alpha,
            "satisfied": self.satisfied,
            "usable": self.usable,
            "constants": self.constants_used.to_dict(),
            **self.detail,
        }


def check_price_bound(
    base: Economy,
    attack: SybilAttack,
    est: RegularityEstimates,
    cfg: SolverConfig | None = None,
) -> BoundReport:
    """Observed equilibrium price displacement against (L_Z/gamma) * alpha."""
    cfg = cfg or SolverConfig()
    alpha = infiltration_rate(attack, base)
    r0 = solve_brace(base, cfg)
    attacked = apply_attack(base, attack)
    r1 = solve_brace(attacked, cfg)
    observed = float(np.linalg.norm(r1.prices - r0.prices))
    report = BoundReport(
        observed=observed,
        bound=est.price_coefficient * alpha,
        alpha=alpha,
        constants_used=est,
        usable=r0.converged and r1.converged,
    )
    report.detail = {
        "p_base": [float(x) for x in r0.prices],
        "p_attacked": [float(x) for x in r1.prices],
        "base_converged": r0.converged,
        "attacked_converged": r1.converged,
    }
    return report


def check_welfare_bound(
    base: Economy,
    attack: SybilAttack,
    est: RegularityEstimates,
    u: CardinalUtility,
    cfg: SolverConfig | None = None,
    mc_draws: int = 256,
) -> BoundReport:
    """Attacking principal's price-channel utility shift against
    (L * L_Z / gamma) * alpha.

    The utility function is the principal's reduced form on the base
    economy, evaluated at the two equilibrium price vectors; the bound is a
    statement about that fixed function of prices.
    """
    cfg = cfg or SolverConfig()
    alpha = infiltration_rate(attack, base)
    r0 = solve_brace(base, cfg)
    attacked = apply_attack(base, attack)
    r1 = solve_brace(attacked, cfg)
    u0 = principal_utility(base, attack.principal, r0.prices, u, mc_draws, cfg.seed)
    u1 = principal_utility(base, attack.principal, r1.prices, u, mc_draws, cfg.seed)
    report = BoundReport(
        observed=u1 - u0,
        bound=est.welfare_coefficient * alpha,
        alpha=alpha,
        constants_used=est,
        usable=r0.converged and r1.converged,
    )
    report.detail = {"u_base": u0, "u_attacked": u1}
    return report


def estimate_regularity(
    e: Economy,
    u: CardinalUtility,
    lz_sampler: Callable[[np.random.Generator], Economy],
    lz_samples: int = 12,
    pair_count: int = 12,
    pair_radius: float = 0.1,
    mc_draws: int = 128,
    seed: int = 0,
    center: np.ndarray | None = None,
    principals: Iterable[str] | None = None,
) -> RegularityEstimates:
    """One-stop estimation of (L_Z, gamma, L_p, L) around an economy."""
    rng = np.random.default_rng(seed)
    pairs = sample_price_pairs(e.m, pair_count, rng, center=center, radius=pair_radius)
    grid = [p for p, _ in pairs[: max(3, pair_count // 3)]]
    if center is not None:
        grid.append(np.asarray(center, dtype=float))
    lz = estimate_LZ(e, lz_sampler, grid, samples=lz_samples, seed=seed, mc_draws=mc_draws)
    gamma = estimate_gamma(e, pairs, mc_draws=mc_draws, seed=seed)

    def util(principal: str, p: np.ndarray) -> float:
        return principal_utility(e, principal, p, u, mc_draws, seed)

    lp = estimate_utility_lipschitz(e, util, pairs, principals=principals)
    return RegularityEstimates(
        L_Z_hat=lz.value,
        gamma_hat=gamma,
        L_p_hat=lp,
        L_hat=max(lp.values()) if lp else 0.0,
        sample_counts={"lz": lz.samples, "pairs": pair_count, "mc_draws": mc_draws},
    )


# ---------------------------------------------------------------------------
# Strategyproofness-in-the-large gain curves
# ---------------------------------------------------------------------------


@dataclass
class SplRow:
    n: int
    identity_gain: float
    identity_se: float
    principal_gain: float
    principal_se: float
    replications: int

    def to_dict(self) -> dict:
        return vars(self).copy()


def true_score_gain(
    base: Economy,
    base_result: EquilibriumResult,
    attacked: Economy,
    attacked_result: EquilibriumResult,
    identities: Sequence[str],
    u_true: CardinalUtility,
) -> float:
    """Sum over identities of the true-score change in received lotteries.

    Received bundles follow the reported demand; they are valued by the
    identities' true scores, with unacceptable bundles worth zero.
    """
    gain = 0.0
    for iid in identities:
        table = u_true.scores[iid]
        gain += lottery_score(attacked_result.allocation[iid], table)
        gain -= lottery_score(base_result.allocation[iid], table)
    return gain


def reduced_form_gain(
    base: Economy,
    principal: str,
    p_base: np.ndarray,
    p_attacked: np.ndarray,
    u: CardinalUtility,
    mc_draws: int = 128,
    seed: int = 0,
) -> float:
    """V_p(mu') - V_p(mu): the principal's reduced-form utility, a fixed
    function of prices built from the base types, evaluated at the two
    equilibrium price vectors."""
    return principal_utility(base, principal, p_attacked, u, mc_draws, seed) - principal_utility(
        base, principal, p_base, u, mc_draws, seed
    )


def spl_curves(
    generator: Callable[[int, int], Economy],
    n_list: Sequence[int],
    menu: Callable[[Economy], Sequence[IdentityType]],
    replications: int = 10,
    identity_samples: int = 12,
    principal: str = "P0",
    principal_deviations: int = 6,
    cfg: SolverConfig | None = None,
    mc_draws: int = 128,
    seed: int = 0,
) -> list[SplRow]:
    """Identity-level and principal-level maximal misreport gains per market size.

    generator(n, rep_seed) must produce an economy where `principal` owns a
    fixed-share block of identities; other identities each belong to their
    own principal.  Gains are reduced-form: the deviator's truthful utility
    evaluated at the deviation's equilibrium prices minus at the base prices.
    Each row records the max over sampled single-identity misreports and over
    sampled coordinated block retypings, averaged over replications (truthful
    reporting is always available, so maxima are never negative).
    Non-converged deviation solves are skipped.
    """
    cfg = cfg or SolverConfig()
    rows = []
    for n in n_list:
        id_maxima = []
        pr_maxima = []
        for rep in range(replications):
            rep_seed = seed * 1_000_003 + n * 101 + rep
            e = generator(n, rep_seed)
            u = CardinalUtility.rank(e)
            base_res = solve_brace(e, cfg)
            donors = list(menu(e))
            rng = np.random.default_rng(rep_seed + 7)

            best_id = 0.0  # truthful report is always available
            others = [iid for iid in e.ids if e.ownership[iid] != principal]
            picks = rng.choice(len(others), size=min(identity_samples, len(others)), replace=False)
            for k in picks:
                iid = others[int(k)]
                t_true = e.type_of(iid)
                donor = donors[int(rng.integers(len(donors)))]
                rep_type = reported_type(t_true, donor)
                if rep_type == t_true:
                    continue
                attacked = coordinated_misreport(e, e.ownership[iid], {iid: rep_type})
                res = solve_brace(attacked, cfg)
                if not res.converged:
                    continue
                gain = reduced_form_gain(
                    e, e.ownership[iid], base_res.prices, res.prices, u, mc_draws, cfg.seed
                )
                best_id = max(best_id, gain)
            id_maxima.append(best_id)

            best_pr = 0.0
            block = e.owned_by(principal)
            donor_order = rng.permutation(len(donors))
            for j in range(min(principal_deviations, len(donors))):
                donor = donors[int(donor_order[j])]
                retyping = {}
                for iid in block:
                    rep_type = reported_type(e.type_of(iid), donor)
                    if rep_type != e.type_of(iid):
                        retyping[iid] = rep_type
                if not retyping:
                    continue
                attacked = coordinated_misreport(e, principal, retyping)
                res = solve_brace(attacked, cfg)
                if not res.converged:
                    continue
                gain = reduced_form_gain(
                    e, principal, base_res.prices, res.prices, u, mc_draws, cfg.seed
                )
                best_pr = max(best_pr, gain)
            pr_maxima.append(best_pr)

        id_arr = np.asarray(id_maxima)
        pr_arr = np.asarray(pr_maxima)
        rows.append(
            SplRow(
                n=n,
                identity_gain=float(id_arr.mean()),
                identity_se=float(id_arr.std(ddof=1) / math.sqrt(len(id_arr))) if len(id_arr) > 1 else 0.0,
                principal_gain=float(pr_arr.mean()),
                principal_se=float(pr_arr.std(ddof=1) / math.sqrt(len(pr_arr))) if len(pr_arr) > 1 else 0.0,
                replications=replications,
            )
        )
    return rows


def fit_identity_gain_constant(rows: Sequence[SplRow], eps: float = 0.1) -> float:
    """K fitted from the identity-gain curve: max_n gain(n) * n^(1/2 - eps)."""
    if not 0 < eps < 0.5:
        raise EconomyError("eps must lie in (0, 1/2)")
    return max(r.identity_gain * r.n ** (0.5 - eps) for r in rows)


# ---------------------------------------------------------------------------
# Tail bound and deterrence
# ---------------------------------------------------------------------------


@dataclass
class TailReport:
    eps_hat: float
    mean_gain: float
    gain_se: float
    rhs: float
    satisfied: bool
    trials: int
    bad_trials: int

    def to_dict(self) -> dict:
        return vars(self).copy()


def tail_bound_check(
    ensemble: Callable[[np.random.Generator], Economy],
    alpha: float,
    attack_sampler: Callable[[Economy, np.random.Generator], SybilAttack],
    C_U: float,
    U_bar: float,
    trials: int,
    seed: int = 0,
    cfg: SolverConfig | None = None,
    bad_cfg: BadRegionConfig | None = None,
) -> TailReport:
    """Empirical check of the conditional utility-gain decomposition.

    eps_hat is the fraction of sampled economies flagged by the bad-region
    detector; the bound is C_U * alpha * (1 - eps_hat) + 2 * U_bar * eps_hat,
    compared against the mean observed gain with a two-standard-error
    Monte Carlo tolerance.
    """
    if trials < 30:
        raise EconomyError("tail bound check needs at least 30 trials")
    cfg = cfg or SolverConfig()
    gains = []
    bad = 0
    for k in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence((seed, k)))
        e = ensemble(rng)
        report = detect_bad_region(e, bad_cfg)
        if report.in_bad_region:
            bad += 1
        attack = attack_sampler(e, rng)
        u = CardinalUtility.rank(e)
        base_res = solve_brace(e, cfg)
        attacked = apply_attack(e, attack)
        att_res = solve_brace(attacked, cfg)
        gains.append(
            reduced_form_gain(e, attack.principal, base_res.prices, att_res.prices, u, cfg.mc_draws, cfg.seed)
        )
    gains_arr = np.asarray(gains)
    eps_hat = bad / trials
    mean_gain = float(gains_arr.mean())
    se = float(gains_arr.std(ddof=1) / math.sqrt(trials))
    rhs = C_U * alpha * (1.0 - eps_hat) + 2.0 * U_bar * eps_hat
    return TailReport(
        eps_hat=eps_hat,
        mean_gain=mean_gain,
        gain_se=se,
        rhs=rhs,
        satisfied=mean_gain <= rhs + 2.0 * se,
        trials=trials,
        bad_trials=bad,
    )


def deterrence_threshold(
    k: int, n: int, K_eps: float, eps: float, L: float, L_Z: float, gamma: float
) -> float:
    """Minimal system cost deterring a k-identity Sybil strategy:
    k * K(eps) * n^(-1/2+eps) + (L*L_Z/gamma) * (k/n)."""
    if n < 1:
        raise EconomyError("n must be >= 1")
    if not 0 < eps < 0.5:
        raise EconomyError("eps must lie in (0, 1/2)")
    if gamma <= 0:
        raise EconomyError("gamma must be positive")
    if k == 0:
        return 0.0
    return k * K_eps * n ** (-0.5 + eps) + (L * L_Z / gamma) * (k / n)


@dataclass
class DeterrenceRow:
    k: int
    gain: float
    cost: float
    net: float


@dataclass
class DeterrenceReport:
    max_net_gain: float
    deterred: bool
    rows: list[DeterrenceRow]
    evaluated: int
    skipped: int

    def to_dict(self) -> dict:
        return {
            "max_net_gain": self.max_net_gain,
            "deterred": self.deterred,
            "evaluated": self.evaluated,
            "skipped": self.skipped,
            "rows": [vars(r) for r in self.rows],
        }


def attack_size(a: SybilAttack, e: Economy) -> int:
    """Identities a Sybil strategy maintains: new or retyped count."""
    if a.kind == "split":
        return sum(len(reps) for reps in a.replacements.values())
    if a.kind == "misreport":
        return len(a.replacements)
    return a.sybil_count


def misreport_gain_objective(
    base: Economy, cfg: SolverConfig | None = None
) -> Callable[[SybilAttack, Economy], float | None]:
    """True-score gain of the attacking principal's identities.

    Received lotteries follow the reported demand but are valued by the
    identities' true (base) scores.  Non-converged attacked solves are not
    evaluable and yield None, so search skips them.
    """
    cfg = cfg or SolverConfig()
    base_res = solve_brace(base, cfg)
    u_true = CardinalUtility.rank(base)

    def objective(a: SybilAttack, attacked: Economy) -> float | None:
        if a.is_empty:
            return 0.0
        res = solve_brace(attacked, cfg)
        if not res.converged:
            return None
        owned = base.owned_by(a.principal)
        return true_score_gain(base, base_res, attacked, res, owned, u_true)

    return objective


def reduced_gain_objective(
    base: Economy,
    u: CardinalUtility | None = None,
    cfg: SolverConfig | None = None,
    mc_draws: int = 128,
) -> Callable[[SybilAttack, Economy], float | None]:
    """Reduced-form price-channel gain of the attacking principal.

    Non-converged attacked solves are not evaluable and yield None.
    """
    cfg = cfg or SolverConfig()
    u = u or CardinalUtility.rank(base)
    base_res = solve_brace(base, cfg)

    def objective(a: SybilAttack, attacked: Economy) -> float | None:
        if a.is_empty:
            return 0.0
        res = solve_brace(attacked, cfg)
        if not res.converged:
            return None
        return reduced_form_gain(base, a.principal, base_res.prices, res.prices, u, mc_draws, cfg.seed)

    return objective


def reported_rank_gain_objective(
    base: Economy, cfg: SolverConfig | None = None
) -> Callable[[SybilAttack, Economy], float | None]:
    """Reported rank-utility gain, the canonical split-attack measure.

    Each economy's identities are scored by their own reported orders; the
    gain is the attacking principal's score total after minus before.  The
    prices at solver termination are the measurement even when the attacked
    run reports non-convergence (a fabricated demand against zero capacity
    never clears, which is itself the finding).
    """
    cfg = cfg or SolverConfig()
    base_res = solve_brace(base, cfg)
    u_base = CardinalUtility.rank(base)

    def objective(a: SybilAttack, attacked: Economy) -> float | None:
        if a.is_empty:
            return 0.0
        res = solve_brace(attacked, cfg)
        u_att = CardinalUtility.rank(attacked)
        ids = [i for i in attacked.ids if attacked.ownership[i] == a.principal]
        after = sum(lottery_score(res.allocation[i], u_att.scores[i]) for i in ids)
        before = sum(
            lottery_score(base_res.allocation[i], u_base.scores[i])
            for i in base.owned_by(a.principal)
        )
        return after - before

    return objective


def deterrence_check(
    base: Economy,
    fam: AttackFamily,
    c_sys: Callable[[int, int], float],
    objective: Callable[[SybilAttack, Economy], float | None],
    mc_tolerance: float = 0.0,
) -> DeterrenceReport:
    """Max over the family of (gain - C_sys(k, n)); deterred iff the max net
    gain is at most the Monte Carlo tolerance.  Unevaluable candidates are
    skipped and counted."""
    rows: list[DeterrenceRow] = []
    skipped = 0
    best_net = -np.inf
    evaluated = 0
    for cand in fam.candidates:
        attacked = apply_attack(base, cand)
        gain = objective(cand, attacked)
        if gain is None:
            skipped += 1
            continue
        evaluated += 1
        k = attack_size(cand, base)
        cost = float(c_sys(k, base.n))
        net = gain - cost
        rows.append(DeterrenceRow(k=k, gain=float(gain), cost=cost, net=float(net)))
        best_net = max(best_net, net)
    return DeterrenceReport(
        max_net_gain=float(best_net),
        deterred=bool(best_net <= mc_tolerance),
        rows=rows,
        evaluated=evaluated,
        skipped=skipped,
    )
