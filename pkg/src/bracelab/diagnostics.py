"""Empirical estimation of the regularity constants and bad-region detection.

The quantitative bounds need three measured inputs: the Lipschitz constant
of excess demand in the type distribution (L_Z), the strong-monotonicity
modulus of excess demand in prices (gamma), and the Lipschitz constants of
principal utilities in prices (L_p).  Estimation always precedes bound
checking; no constant is ever asserted from theory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .demand import budget_matrix
from .economy import Economy, EconomyError, empirical_distribution, w1_discrete
from .solver import (
    EquilibriumResult,
    SolverConfig,
    excess_demand,
    project_to_simplex,
    random_prices,
    solve_brace,
    uniform_prices,
)

BAD_REASONS = ("non_convergence", "gamma_degenerate", "multiple_equilibria")


@dataclass
class LZEstimate:
    value: float
    samples: int
    witness: dict = field(default_factory=dict)


def sample_price_pairs(
    m: int,
    count: int,
    rng: np.random.Generator,
    center: np.ndarray | None = None,
    radius: float = 0.15,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Distinct price pairs in a simplex neighborhood of `center`."""
    c = uniform_prices(m) if center is None else np.asarray(center, dtype=float)
    pairs = []
    while len(pairs) < count:
        d1 = rng.normal(size=m) * radius
        d2 = rng.normal(size=m) * radius
        p = project_to_simplex(c + d1)
        q = project_to_simplex(c + d2)
        if np.linalg.norm(p - q) > 1e-6:
            pairs.append((p, q))
    return pairs


def estimate_gamma(
    e: Economy,
    p_pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    mc_draws: int = 256,
    seed: int = 0,
) -> float:
    """Strong-monotonicity modulus: min over pairs of
    -<Z(p) - Z(q), p - q> / ||p - q||^2, with common random numbers.

    A negative estimate signals that the monotonicity assumption fails and
    is reported as-is.
    """
    if not p_pairs:
        raise EconomyError("gamma estimation needs at least one price pair")
    rng = np.random.default_rng(seed)
    draws = budget_matrix(e.n, e.delta, mc_draws, rng)
    worst = np.inf
    for p, q in p_pairs:
        dp = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
        norm2 = float(dp @ dp)
        if norm2 <= 1e-18:
            raise EconomyError("gamma estimation requires distinct price pairs")
        dz = excess_demand(e, p, draws=draws) - excess_demand(e, q, draws=draws)
        worst = min(worst, -float(dz @ dp) / norm2)
    return float(worst)


def estimate_LZ(
    e: Economy,
    neighborhood: Callable[[np.random.Generator], Economy],
    p_grid: Sequence[np.ndarray],
    samples: int = 20,
    seed: int = 0,
    mc_draws: int = 256,
) -> LZEstimate:
    """Lipschitz constant of Z in the empirical type distribution.

    `neighborhood` draws perturbed economies near e; the estimate is the max
    over (perturbation, grid price) of ||Z(p, mu) - Z(p, nu)|| / W1(mu, nu).
    Perturbations that leave the distribution unchanged are skipped; if all
    of them do, the sampler violates its contract and we raise.
    """
    if samples < 1 or not p_grid:
        raise EconomyError("estimate_LZ needs samples >= 1 and a non-empty price grid")
    rng = np.random.default_rng(seed)
    mu = empirical_distribution(e)
    best = LZEstimate(0.0, 0)
    usable = 0
    for s in range(samples):
        perturbed = neighborhood(rng)
        w1 = w1_discrete(mu, empirical_distribution(perturbed))
        if w1 <= 1e-12:
            continue
        usable += 1
        draws_rng = np.random.default_rng(seed + 1000 + s)
        draws_a = budget_matrix(e.n, e.delta, mc_draws, draws_rng)
        if perturbed.n == e.n:
            draws_b = draws_a  # common random numbers when sizes match
        else:
            draws_b = budget_matrix(perturbed.n, perturbed.delta, mc_draws, np.random.default_rng(seed + 1000 + s))
        for p in p_grid:
            dz = excess_demand(e, p, draws=draws_a) - excess_demand(perturbed, p, draws=draws_b)
            ratio = float(np.linalg.norm(dz)) / w1
            if ratio > best.value:
                best = LZEstimate(ratio, 0, {"sample": s, "w1": w1, "p": [float(x) for x in p]})
    if usable == 0:
        raise EconomyError("perturbation sampler produced only W1 = 0 economies")
    best.samples = usable
    return best


@dataclass
class RegularityEstimates:
    """Measured stand-ins for the regularity constants."""

    L_Z_hat: float
    gamma_hat: float
    L_p_hat: dict[str, float]
    L_hat: float
    sample_counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.L_p_hat:
            expected = max(self.L_p_hat.values())
            if abs(self.L_hat - expected) > 1e-9:
                raise EconomyError("L_hat must equal the max of the per-principal constants")

    @property
    def price_coefficient(self) -> float:
        """L_Z / gamma, the price-response slope.  Infinite when the
        monotonicity estimate is degenerate (the bound carries no force)."""
        if self.gamma_hat <= 0.0:
            return float("inf")
        return self.L_Z_hat / self.gamma_hat

    @property
    def welfare_coefficient(self) -> float:
        """L * L_Z / gamma, the welfare-response slope (C_U)."""
        if self.gamma_hat <= 0.0:
            return float("inf")
        return self.L_hat * self.L_Z_hat / self.gamma_hat

    def to_dict(self) -> dict:
        return {
            "L_Z_hat": self.L_Z_hat,
            "gamma_hat": self.gamma_hat,
            "L_p_hat": dict(self.L_p_hat),
            "L_hat": self.L_hat,
            "sample_counts": dict(self.sample_counts),
        }


def estimate_utility_lipschitz(
    e: Economy,
    utility: Callable[[str, np.ndarray], float],
    p_pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    principals: Iterable[str] | None = None,
) -> dict[str, float]:
    """Max |U_p(p) - U_p(q)| / ||p - q|| per principal over sampled pairs."""
    if not p_pairs:
        raise EconomyError("utility Lipschitz estimation needs price pairs")
    out: dict[str, float] = {}
    for principal in principals if principals is not None else e.principals:
        worst = 0.0
        for p, q in p_pairs:
            gap = np.linalg.norm(np.asarray(p) - np.asarray(q))
            if gap <= 1e-12:
                continue
            du = abs(utility(principal, p) - utility(principal, q))
            worst = max(worst, du / float(gap))
        out[principal] = worst
    return out


# ---------------------------------------------------------------------------
# Bad-region detection
# ---------------------------------------------------------------------------


@dataclass
class BadRegionConfig:
    restarts: int = 3
    gamma_min: float = 1e-3
    spread_threshold: float = 0.05
    gamma_pairs: int = 10
    gamma_radius: float = 0.1
    # Dirichlet concentration for the random starts; the regularity being
    # probed is local, so restarts scatter around the canonical start point
    # (about 0.1 apart on the simplex at the default) and must contract to
    # one equilibrium for the economy to count as clean.
    start_concentration: float = 20.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 3:
            raise EconomyError("bad-region detection needs at least 3 restarts")
        if self.start_concentration <= 0:
            raise EconomyError("start concentration must be positive")


@dataclass
class BadRegionReport:
    in_bad_region: bool
    reasons: frozenset[str]
    gamma_estimate: float
    price_spread: float
    results: list[EquilibriumResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "in_bad_region": self.in_bad_region,
            "reasons": sorted(self.reasons),
            "gamma_estimate": self.gamma_estimate,
            "price_spread": self.price_spread,
        }


def detect_bad_region(e: Economy, cfg: BadRegionConfig | None = None) -> BadRegionReport:
    """Probe for regularity failure: restart disagreement, non-convergence,
    or a degenerate monotonicity modulus near the equilibrium."""
    cfg = cfg or BadRegionConfig()
    rng = np.random.default_rng(cfg.seed)
    results: list[EquilibriumResult] = []
    for k in range(cfg.restarts):
        scfg = SolverConfig(
            eta0=cfg.solver.eta0,
            tol=cfg.solver.tol,
            max_iter=cfg.solver.max_iter,
            mc_draws=cfg.solver.mc_draws,
            tol_p=cfg.solver.tol_p,
            seed=cfg.solver.seed,
            step_decay=cfg.solver.step_decay,
            max_stalls=cfg.solver.max_stalls,
            start=rng.dirichlet(np.full(e.m, cfg.start_concentration)),
        )
        results.append(solve_brace(e, scfg))

    reasons: set[str] = set()
    if any(not r.converged for r in results):
        reasons.add("non_convergence")
    converged = [r.prices for r in results if r.converged]
    spread = 0.0
    for i in range(len(converged)):
        for j in range(i + 1, len(converged)):
            spread = max(spread, float(np.linalg.norm(converged[i] - converged[j])))
    if spread > cfg.spread_threshold:
        reasons.add("multiple_equilibria")

    center = converged[0] if converged else uniform_prices(e.m)
    pairs = sample_price_pairs(e.m, cfg.gamma_pairs, rng, center=center, radius=cfg.gamma_radius)
    gamma_hat = estimate_gamma(e, pairs, mc_draws=cfg.solver.mc_draws, seed=cfg.seed)
    if gamma_hat < cfg.gamma_min:
        reasons.add("gamma_degenerate")

    return BadRegionReport(
        in_bad_region=bool(reasons),
        reasons=frozenset(reasons),
        gamma_estimate=gamma_hat,
        price_spread=spread,
        results=results,
    )
