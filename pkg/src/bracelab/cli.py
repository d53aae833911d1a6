"""brace-lab: batch experiment runner.

Subcommands ingest economy/attack JSON files, run a named scenario and emit
a CSV row set, a JSON report and a rendered figure into the output
directory.  Unsatisfied bounds and non-deterrence are findings (exit 0);
malformed inputs are errors (exit 2).  Identical (scenario, seed) reruns
reproduce the output files byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import (
    AttackFamily,
    apply_attack,
    attack_search,
    coordinated_misreport,
    reported_type,
    unbounded_sybil_sequence,
)
from .bounds import (
    CardinalUtility,
    check_price_bound,
    check_welfare_bound,
    deterrence_check,
    deterrence_threshold,
    estimate_regularity,
    principal_utility,
    reduced_gain_objective,
    reported_rank_gain_objective,
    spl_curves,
    tail_bound_check,
)
from .corpus import corpus_generate, generate_economy, preference_menu, self_demand_economy
from .diagnostics import BadRegionConfig, detect_bad_region, estimate_gamma, sample_price_pairs
from .economy import (
    Bundle,
    Economy,
    EconomyError,
    IdentityType,
    Lottery,
    SybilAttack,
    WeakOrder,
    build_economy,
    empty_attack,
    infiltration_rate,
)
from .fairness import envy_free_sd, find_jef_lift_counterexample, jef_check
from .scenarios import example_one_economy, example_one_family, example_one_split
from .solver import SolverConfig, feasibility_audit, solve_brace, verify_clearing
from . import plots

SCENARIO_KINDS = (
    "solve",
    "attack",
    "price-bound",
    "welfare-bound",
    "spl",
    "fairness",
    "nonexistence",
    "tail",
    "deterrence",
    "corpus",
)


@dataclass
class Scenario:
    name: str
    kind: str
    inputs: dict[str, str]
    params: dict
    seed: int

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise EconomyError(f"unknown scenario kind {self.kind!r}")
        if self.seed is None:
            raise EconomyError("a seed is mandatory for every scenario")


@dataclass
class RunRecord:
    scenario: Scenario
    outputs: list[str]
    wall_time: float
    tool_version: str
    config_hash: str

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.name,
            "kind": self.scenario.kind,
            "seed": self.scenario.seed,
            "outputs": self.outputs,
            "wall_time": self.wall_time,
            "tool_version": self.tool_version,
            "config_hash": self.config_hash,
        }


def config_digest(scenario: Scenario) -> str:
    blob = json.dumps(
        {"kind": scenario.kind, "inputs": scenario.inputs, "params": scenario.params, "seed": scenario.seed},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.9g}"
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_economy(ref: str) -> Economy:
    if ref == "canonical":
        return example_one_economy()
    with open(ref, encoding="utf-8") as fh:
        return build_economy(json.load(fh))


def _parse_type(spec: dict, m: int, endowment: Lottery | None = None) -> IdentityType:
    acceptable = [Bundle.of(b) for b in spec["acceptable"]]
    order = WeakOrder.of([[Bundle.of(b) for b in cls_] for cls_ in spec["order"]])
    if endowment is None:
        if "endowment" in spec:
            endowment = Lottery.from_pairs(
                [(Bundle.of(e["bundle"]), float(e["prob"])) for e in spec["endowment"]]
            )
        else:
            endowment = Lottery.degenerate(next(iter(order.classes[0])))
    base = IdentityType(Lottery.degenerate(next(iter(order.classes[0]))), order.universe, order)
    del acceptable
    return base.with_appended_endowment(endowment)


def load_attack(ref: str, e: Economy) -> SybilAttack:
    if ref == "canonical-split":
        return example_one_split()
    if ref == "empty":
        return empty_attack(e.principals[0])
    with open(ref, encoding="utf-8") as fh:
        spec = json.load(fh)
    kind = spec["kind"]
    principal = spec["principal"]
    if kind == "split":
        replacements = {}
        for iid, reps in spec["replacements"].items():
            replacements[iid] = tuple(
                (float(r["share"]), _parse_type(r["type"], e.m)) for r in reps
            )
        return SybilAttack(principal=principal, kind="split", replacements=replacements)
    if kind == "misreport":
        replacements = {}
        for iid, tspec in spec["retyping"].items():
            endow = None if spec.get("misreport_endowments") else e.type_of(iid).endowment
            replacements[iid] = ((1.0, _parse_type(tspec, e.m, endow)),)
        return SybilAttack(
            principal=principal,
            kind="misreport",
            replacements=replacements,
            misreport_endowments=bool(spec.get("misreport_endowments", False)),
        )
    if kind == "mass-sequence-step":
        return SybilAttack(
            principal=principal,
            kind="mass-sequence-step",
            sybil_count=int(spec["schedule"][-1]),
            designated_good=int(spec["designated_good"]),
            beta=float(spec["beta"]),
        )
    raise EconomyError(f"unknown attack kind {kind!r}")


def solver_config(args, seed: int) -> SolverConfig:
    return SolverConfig(
        eta0=args.eta0,
        tol=args.tol,
        max_iter=args.max_iter,
        restarts=args.restarts,
        mc_draws=args.mc_draws,
        seed=seed,
    )


def economy_menu(e: Economy) -> list[IdentityType]:
    """Misreport donors drawn from the economy's own realized types."""
    seen: dict[IdentityType, None] = {}
    for _, t in e.identities:
        seen.setdefault(t, None)
    return list(seen)


def default_lz_sampler(e: Economy, menu: list[IdentityType]):
    def sampler(rng: np.random.Generator) -> Economy:
        iid = e.ids[int(rng.integers(e.n))]
        donor = menu[int(rng.integers(len(menu)))]
        rep = reported_type(e.type_of(iid), donor)
        if rep == e.type_of(iid):
            return e
        return coordinated_misreport(e, e.ownership[iid], {iid: rep})

    return sampler


# ---------------------------------------------------------------------------
# Scenario runners (one per kind)
# ---------------------------------------------------------------------------


def _run_solve(s: Scenario, out: Path, digest: str) -> list[Path]:
    e = load_economy(s.inputs["economy"])
    cfg = SolverConfig(**s.params["solver"])
    res = solve_brace(e, cfg)
    clearing = verify_clearing(e, res, tol=10 * cfg.tol, tol_p=cfg.tol_p)
    rows = [
        [g.good, g.price, g.expected_demand, g.relaxed_capacity, g.slack, g.feasible, s.seed, digest]
        for g in clearing.per_good
    ]
    paths = [
        write_csv(out / "solve.csv",
                  ["good", "price", "expected_demand", "relaxed_capacity", "slack", "feasible", "seed", "config_hash"],
                  rows),
        write_json(out / "solve.json",
                   {"result": res.to_dict(), "clearing": clearing.to_dict(), "seed": s.seed, "config_hash": digest}),
        plots.price_bars(e.good_names, {"prices": list(res.prices)}, out / "solve.png"),
    ]
    return paths


def _run_attack(s: Scenario, out: Path, digest: str) -> list[Path]:
    e = load_economy(s.inputs["economy"])
    attack = load_attack(s.inputs["attack"], e)
    cfg = SolverConfig(**s.params["solver"])
    alpha = infiltration_rate(attack, e)
    base_res = solve_brace(e, cfg)
    attacked = apply_attack(e, attack)
    att_res = solve_brace(attacked, cfg)
    rank_obj = reported_rank_gain_objective(e, cfg)
    reported_gain = rank_obj(attack, attacked) if not attack.is_empty else 0.0
    u = CardinalUtility.rank(e)
    reduced = principal_utility(e, attack.principal, att_res.prices, u, cfg.mc_draws, cfg.seed) - principal_utility(
        e, attack.principal, base_res.prices, u, cfg.mc_draws, cfg.seed
    )
    dp = float(np.linalg.norm(att_res.prices - base_res.prices))
    rows = [[e.n, alpha, dp, reported_gain, reduced, att_res.converged, s.seed, digest]]
    paths = [
        write_csv(out / "attack.csv",
                  ["n", "alpha", "price_shift", "reported_rank_gain", "reduced_form_gain", "attacked_converged",
                   "seed", "config_hash"],
                  rows),
        write_json(out / "attack.json",
                   {"alpha": alpha, "price_shift": dp, "reported_rank_gain": reported_gain,
                    "reduced_form_gain": reduced, "base": base_res.to_dict(), "attacked": att_res.to_dict(),
                    "seed": s.seed, "config_hash": digest}),
        plots.price_bars(e.good_names,
                         {"base": list(base_res.prices), "attacked": list(att_res.prices)},
                         out / "attack.png"),
    ]
    return paths


def _estimates_for(e: Economy, cfg: SolverConfig, seed: int, pair_radius: float = 0.03):
    menu = economy_menu(e)
    u = CardinalUtility.rank(e)
    res = solve_brace(e, cfg)
    est = estimate_regularity(
        e, u, default_lz_sampler(e, menu),
        lz_samples=10, pair_count=10, pair_radius=pair_radius,
        mc_draws=cfg.mc_draws, seed=seed, center=res.prices,
    )
    return est, u, res


def _run_estimate(s: Scenario, out: Path, digest: str) -> list[Path]:
    e = load_economy(s.inputs["economy"])
    cfg = SolverConfig(**s.params["solver"])
    est, u, res = _estimates_for(e, cfg, s.seed)
    rng = np.random.default_rng(s.seed)
    pairs = sample_price_pairs(e.m, 30, rng, center=res.prices, radius=0.03)
    quotients = [estimate_gamma(e, [pair], mc_draws=cfg.mc_draws, seed=s.seed) for pair in pairs]
    rows = [
        ["L_Z_hat", est.L_Z_hat, s.seed, digest],
        ["gamma_hat", est.gamma_hat, s.seed, digest],
        ["L_hat", est.L_hat, s.seed, digest],
    ]
    paths = [
        write_csv(out / "estimate.csv", ["constant", "value", "seed", "config_hash"], rows),
        write_json(out / "estimate.json", {"estimates": est.to_dict(), "seed": s.seed, "config_hash": digest}),
        plots.gamma_quotients(quotients, 1e-3, out / "estimate.png"),
    ]
    return paths


def _run_bound(s: Scenario, out: Path, digest: str, which: str) -> list[Path]:
    e = load_economy(s.inputs["economy"])
    attack = load_attack(s.inputs["attack"], e)
    cfg = SolverConfig(**s.params["solver"])
    est, u, _ = _estimates_for(e, cfg, s.seed)
    bad = detect_bad_region(e, BadRegionConfig(solver=cfg, seed=s.seed))
    if which == "price":
        report = check_price_bound(e, attack, est, cfg)
    else:
        report = check_welfare_bound(e, attack, est, u, cfg, mc_draws=cfg.mc_draws)
    rows = [[e.n, report.alpha, report.observed, report.bound, report.satisfied,
             1.0 if bad.in_bad_region else 0.0, s.seed, digest]]
    stem = f"{which}_bound"
    paths = [
        write_csv(out / f"{stem}.csv",
                  ["n", "alpha", "observed", "bound", "satisfied", "eps_hat", "seed", "config_hash"], rows),
        write_json(out / f"{stem}.json",
                   {"report": report.to_dict(), "bad_region": bad.to_dict(), "seed": s.seed,
                    "config_hash": digest}),
        plots.bound_scatter([report.observed], [report.bound], [not bad.in_bad_region],
                            out / f"{stem}.png", xlabel=f"observed {which} shift"),
    ]
    return paths


def _run_spl(s: Scenario, out: Path, digest: str) -> list[Path]:
    p = s.params
    cfg = SolverConfig(**p["solver"])
    share = p["share"]
    delta = p["delta"]

    def gen(n: int, rep_seed: int) -> Economy:
        return generate_economy(n, rep_seed, delta=delta, principal_share=share)

    rows = spl_curves(
        gen, p["n_list"], preference_menu,
        replications=p["replications"], identity_samples=p["identity_samples"],
        principal_deviations=p["principal_deviations"], cfg=cfg, seed=s.seed,
    )
    csv_rows = [
        [r.n, r.identity_gain, r.identity_se, r.principal_gain, r.principal_se, r.replications, s.seed, digest]
        for r in rows
    ]
    paths = [
        write_csv(out / "spl.csv",
                  ["n", "identity_gain", "identity_se", "principal_gain", "principal_se", "replications",
                   "seed", "config_hash"], csv_rows),
        write_json(out / "spl.json", {"rows": [r.to_dict() for r in rows], "seed": s.seed, "config_hash": digest}),
        plots.spl_curve_plot(rows, out / "spl.png"),
    ]
    return paths


def _run_fairness(s: Scenario, out: Path, digest: str) -> list[Path]:
    e = load_economy(s.inputs["economy"])
    if "allocation" in s.inputs:
        with open(s.inputs["allocation"], encoding="utf-8") as fh:
            raw = json.load(fh)
        allocation = {iid: Bundle.of(b) for iid, b in raw.items()}
    else:
        allocation = {
            iid: max(e.type_of(iid).endowment.support)
            for iid in e.ids
        }
    endowments = {}
    for iid in e.ids:
        exp = e.type_of(iid).endowment.expectation()
        endowments[iid] = Bundle.of(np.rint(exp).astype(int))
    orders = {iid: e.type_of(iid).order.appended_bottom(
        [allocation[iid]] if allocation[iid] not in e.type_of(iid).order.universe else []
    ) for iid in e.ids}
    report = jef_check(allocation, endowments, orders, trigger=s.params["trigger"])
    rows = [
        [v.envier, v.envied, v.triggered, v.passed,
         v.witness_good if v.witness_good is not None else "", s.seed, digest]
        for v in report.pairs
    ]
    paths = [
        write_csv(out / "fairness.csv",
                  ["envier", "envied", "triggered", "passed", "witness_good", "seed", "config_hash"], rows),
        write_json(out / "fairness.json", {"report": report.to_dict(), "seed": s.seed, "config_hash": digest}),
        plots.fairness_matrix(list(e.ids), report.pairs, out / "fairness.png"),
    ]
    return paths


def _run_nonexistence(s: Scenario, out: Path, digest: str) -> list[Path]:
    e = load_economy(s.inputs["economy"])
    p = s.params
    cfg = SolverConfig(**p["solver"])
    schedule = p["schedule"]
    good = p["designated_good"]
    beta = p["beta"]
    principal = p.get("principal") or e.principals[0]
    seq = list(unbounded_sybil_sequence(e, principal, schedule, good, beta))
    first = feasibility_audit(seq, beta, good, e.delta)
    rows = []
    sizes, lhs = [], []
    for k, (econ, sybils) in enumerate(seq, start=1):
        share = len(sybils) / econ.n
        claimed = beta * len(sybils)
        sizes.append(k)
        lhs.append(claimed)
        rows.append([k, len(sybils), share, claimed, (1 + e.delta) * e.capacities[good],
                     first is not None and k >= first, s.seed, digest])
    last_econ, _ = seq[-1]
    res = solve_brace(last_econ, cfg)
    clearing = verify_clearing(last_econ, res, tol=10 * cfg.tol, tol_p=cfg.tol_p)
    paths = [
        write_csv(out / "nonexistence.csv",
                  ["k", "sybils", "sybil_share", "claimed_demand", "relaxed_capacity", "violates",
                   "seed", "config_hash"], rows),
        write_json(out / "nonexistence.json",
                   {"first_violation": first, "last_solve": res.to_dict(),
                    "last_clearing": clearing.to_dict(), "seed": s.seed, "config_hash": digest}),
        plots.nonexistence_plot(sizes, lhs, (1 + e.delta) * e.capacities[good], first,
                                out / "nonexistence.png"),
    ]
    return paths


def _tail_trial(args) -> tuple[bool, float]:
    (k, seed, mix, n, share, delta, cfg_kwargs, alpha) = args
    rng = np.random.default_rng(np.random.SeedSequence((seed, k)))
    cfg = SolverConfig(**cfg_kwargs)
    if rng.random() < mix:
        e = self_demand_economy(n, 4, delta)
        block = [iid for iid in e.ids][: max(1, int(np.ceil(alpha * n)))]
        ownership = dict(e.ownership)
        for iid in block:
            ownership[iid] = "P0"
        e = Economy(e.m, e.capacities, e.identities, ownership, e.delta, e.good_names)
    else:
        e = generate_economy(n, int(rng.integers(2**31)), delta=delta, principal_share=alpha)
    bad = detect_bad_region(e, BadRegionConfig(solver=cfg, seed=seed))
    menu = economy_menu(e)
    block = e.owned_by("P0")
    donor = menu[int(rng.integers(len(menu)))]
    retyping = {}
    for iid in block:
        rep = reported_type(e.type_of(iid), donor)
        if rep != e.type_of(iid):
            retyping[iid] = rep
    u = CardinalUtility.rank(e)
    base = solve_brace(e, cfg)
    if retyping:
        attacked = coordinated_misreport(e, "P0", retyping)
        att = solve_brace(attacked, cfg)
        gain = principal_utility(e, "P0", att.prices, u, cfg.mc_draws, cfg.seed) - principal_utility(
            e, "P0", base.prices, u, cfg.mc_draws, cfg.seed
        )
    else:
        gain = 0.0
    return bad.in_bad_region, float(gain)


def _run_tail(s: Scenario, out: Path, digest: str) -> list[Path]:
    p = s.params
    trials = p["trials"]
    alpha = p["alpha"]
    tasks = [
        (k, s.seed, p["mix"], p["n"], p["share"], p["delta"], p["solver"], alpha)
        for k in range(trials)
    ]
    if p.get("parallel"):
        with ProcessPoolExecutor() as pool:
            outcomes = list(pool.map(_tail_trial, tasks))
    else:
        outcomes = [_tail_trial(t) for t in tasks]
    bads = [b for b, _ in outcomes]
    gains = np.asarray([g for _, g in outcomes])
    eps_hat = sum(bads) / trials
    C_U = p["c_u"]
    rhs = C_U * alpha * (1 - eps_hat) + 2.0 * p["u_bar"] * eps_hat
    se = float(gains.std(ddof=1) / np.sqrt(trials))
    mean_gain = float(gains.mean())
    satisfied = mean_gain <= rhs + 2 * se
    rows = [[trials, alpha, mean_gain, rhs, satisfied, eps_hat, s.seed, digest]]
    paths = [
        write_csv(out / "tail.csv",
                  ["n", "alpha", "observed", "bound", "satisfied", "eps_hat", "seed", "config_hash"], rows),
        write_json(out / "tail.json",
                   {"eps_hat": eps_hat, "mean_gain": mean_gain, "se": se, "rhs": rhs,
                    "satisfied": satisfied, "gains": [float(g) for g in gains],
                    "seed": s.seed, "config_hash": digest}),
        plots.tail_hist(list(gains), rhs, out / "tail.png"),
    ]
    return paths


def _run_deterrence(s: Scenario, out: Path, digest: str) -> list[Path]:
    e = load_economy(s.inputs["economy"])
    p = s.params
    cfg = SolverConfig(**p["solver"])
    principal = p.get("principal") or e.principals[0]
    menu = economy_menu(e)
    owned = e.owned_by(principal)
    candidates = [empty_attack(principal)]
    for count in range(1, len(owned) + 1):
        for donor in menu:
            replacements = {}
            for iid in owned[:count]:
                rep = reported_type(e.type_of(iid), donor)
                if rep != e.type_of(iid):
                    replacements[iid] = ((1.0, rep),)
            if replacements:
                candidates.append(SybilAttack(principal=principal, kind="misreport", replacements=replacements))
    fam = AttackFamily("misreports", principal, tuple(candidates))
    est, u, _ = _estimates_for(e, cfg, s.seed)
    if p["csys"] == "zero":
        c_sys = lambda k, n: 0.0
    else:
        c_sys = lambda k, n: deterrence_threshold(
            k, n, p["k_eps"], p["eps"], est.L_hat, est.L_Z_hat, max(est.gamma_hat, 1e-9)
        )
    objective = reduced_gain_objective(e, u, cfg, cfg.mc_draws)
    report = deterrence_check(e, fam, c_sys, objective, mc_tolerance=p["mc_tolerance"])
    rows = [[r.k, r.gain, r.cost, r.net, s.seed, digest] for r in report.rows]
    paths = [
        write_csv(out / "deterrence.csv", ["k", "gain", "cost", "net", "seed", "config_hash"], rows),
        write_json(out / "deterrence.json",
                   {"report": report.to_dict(), "constants": est.to_dict(), "seed": s.seed,
                    "config_hash": digest}),
        plots.deterrence_plot(report.rows, out / "deterrence.png"),
    ]
    return paths


def _run_corpus(s: Scenario, out: Path, digest: str) -> list[Path]:
    p = s.params
    template = {k: p[k] for k in ("n", "m", "n_types", "delta", "principal_share")}
    files = corpus_generate(template, p["count"], s.seed, out)
    rows = [[f.name, s.seed, digest] for f in files]
    manifest = write_csv(out / "corpus_manifest.csv", ["file", "seed", "config_hash"], rows)
    return [manifest] + files


def run_scenario(s: Scenario, out_dir: str | Path) -> RunRecord:
    """Dispatch a scenario to its pipeline; returns the reproducibility record."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = config_digest(s)
    start = time.perf_counter()
    runner = {
        "solve": _run_solve,
        "attack": _run_attack,
        "price-bound": lambda sc, o, d: _run_bound(sc, o, d, "price"),
        "welfare-bound": lambda sc, o, d: _run_bound(sc, o, d, "welfare"),
        "spl": _run_spl,
        "fairness": _run_fairness,
        "nonexistence": _run_nonexistence,
        "tail": _run_tail,
        "deterrence": _run_deterrence,
        "corpus": _run_corpus,
    }[s.kind]
    paths = runner(s, out, digest)
    elapsed = time.perf_counter() - start
    return RunRecord(
        scenario=s,
        outputs=[str(p) for p in paths],
        wall_time=elapsed,
        tool_version=__version__,
        config_hash=digest,
    )


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_shared(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, required=True, help="base RNG seed (mandatory)")
    parser.add_argument("--out-dir", default="out", help="output directory")
    parser.add_argument("--mc-draws", type=int, default=128)
    parser.add_argument("--tol", type=float, default=1e-4)
    parser.add_argument("--eta0", type=float, default=0.1)
    parser.add_argument("--max-iter", type=int, default=100_000)
    parser.add_argument("--restarts", type=int, default=1)
    parser.add_argument("--parallel", action="store_true", help="run independent trials concurrently")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brace-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="compute relaxed equilibrium prices for an economy")
    p_solve.add_argument("--economy", required=True, help="economy spec file, or 'canonical'")
    _add_shared(p_solve)

    p_attack = sub.add_parser("attack", help="attack pipelines")
    attack_sub = p_attack.add_subparsers(dest="attack_command", required=True)
    p_attack_run = attack_sub.add_parser("run", help="apply an attack and compare equilibria")
    p_attack_run.add_argument("--economy", required=True)
    p_attack_run.add_argument("--attack", required=True, help="attack spec file, 'canonical-split' or 'empty'")
    _add_shared(p_attack_run)

    p_bounds = sub.add_parser("bounds", help="regularity estimation and bound checks")
    bounds_sub = p_bounds.add_subparsers(dest="bounds_command", required=True)
    for name in ("estimate", "price", "welfare"):
        bp = bounds_sub.add_parser(name)
        bp.add_argument("--economy", required=True)
        if name != "estimate":
            bp.add_argument("--attack", required=True)
        _add_shared(bp)

    p_spl = sub.add_parser("spl", help="strategyproofness-in-the-large curves")
    spl_sub = p_spl.add_subparsers(dest="spl_command", required=True)
    p_curve = spl_sub.add_parser("curve")
    p_curve.add_argument("--n-list", default="20,50,100,200")
    p_curve.add_argument("--replications", type=int, default=10)
    p_curve.add_argument("--share", type=float, default=0.3)
    p_curve.add_argument("--delta", type=float, default=0.1)
    p_curve.add_argument("--identity-samples", type=int, default=10)
    p_curve.add_argument("--principal-deviations", type=int, default=6)
    _add_shared(p_curve)

    p_fair = sub.add_parser("fairness", help="envy-freeness checks")
    fair_sub = p_fair.add_subparsers(dest="fairness_command", required=True)
    p_check = fair_sub.add_parser("check")
    p_check.add_argument("--economy", required=True)
    p_check.add_argument("--allocation", help="JSON map identity -> bundle; defaults to endowments")
    p_check.add_argument("--trigger", choices=("set-inclusion", "p-valuation"), default="set-inclusion")
    _add_shared(p_check)
    p_lift = fair_sub.add_parser("lift-search", help="search for an identity-pass/principal-fail instance")
    p_lift.add_argument("--max-identities", type=int, default=4)
    _add_shared(p_lift)

    p_non = sub.add_parser("nonexistence", help="unbounded Sybil mass feasibility audit")
    p_non.add_argument("--economy", required=True)
    p_non.add_argument("--schedule", default="1,2,3,4,5,6,7,8,9,10")
    p_non.add_argument("--beta", type=float, default=0.5)
    p_non.add_argument("--good", type=int, default=0)
    p_non.add_argument("--principal", default=None)
    _add_shared(p_non)

    p_tail = sub.add_parser("tail", help="conditional utility-gain bound on a mixed ensemble")
    p_tail.add_argument("--trials", type=int, default=30)
    p_tail.add_argument("--alpha", type=float, default=0.1)
    p_tail.add_argument("--mix", type=float, default=0.2, help="fraction of degenerate economies")
    p_tail.add_argument("--n", type=int, default=30)
    p_tail.add_argument("--share", type=float, default=0.1)
    p_tail.add_argument("--delta", type=float, default=0.1)
    p_tail.add_argument("--c-u", type=float, default=10.0, help="welfare slope constant C_U")
    p_tail.add_argument("--u-bar", type=float, default=1.0)
    _add_shared(p_tail)

    p_det = sub.add_parser("deterrence", help="design inequality check")
    det_sub = p_det.add_subparsers(dest="deterrence_command", required=True)
    p_det_check = det_sub.add_parser("check")
    p_det_check.add_argument("--economy", required=True)
    p_det_check.add_argument("--principal", default=None)
    p_det_check.add_argument("--csys", choices=("threshold", "zero"), default="threshold")
    p_det_check.add_argument("--k-eps", type=float, default=1.0)
    p_det_check.add_argument("--eps", type=float, default=0.1)
    p_det_check.add_argument("--mc-tolerance", type=float, default=0.0)
    _add_shared(p_det_check)

    p_corpus = sub.add_parser("corpus", help="generate economy spec files")
    p_corpus.add_argument("--count", type=int, default=10)
    p_corpus.add_argument("--n", type=int, default=20)
    p_corpus.add_argument("--m", type=int, default=4)
    p_corpus.add_argument("--n-types", type=int, default=6)
    p_corpus.add_argument("--delta", type=float, default=0.1)
    p_corpus.add_argument("--principal-share", type=float, default=0.0)
    _add_shared(p_corpus)

    return parser


def scenario_from_args(args) -> Scenario:
    solver = {
        "eta0": args.eta0,
        "tol": args.tol,
        "max_iter": args.max_iter,
        "restarts": args.restarts,
        "mc_draws": args.mc_draws,
        "seed": args.seed,
    }
    if args.command == "solve":
        return Scenario("solve", "solve", {"economy": args.economy}, {"solver": solver}, args.seed)
    if args.command == "attack":
        return Scenario("attack-run", "attack", {"economy": args.economy, "attack": args.attack},
                        {"solver": solver}, args.seed)
    if args.command == "bounds":
        if args.bounds_command == "estimate":
            return Scenario("bounds-estimate", "price-bound", {"economy": args.economy},
                            {"solver": solver, "estimate_only": True}, args.seed)
        kind = "price-bound" if args.bounds_command == "price" else "welfare-bound"
        return Scenario(f"bounds-{args.bounds_command}", kind,
                        {"economy": args.economy, "attack": args.attack}, {"solver": solver}, args.seed)
    if args.command == "spl":
        return Scenario("spl-curve", "spl", {}, {
            "solver": solver,
            "n_list": [int(x) for x in args.n_list.split(",")],
            "replications": args.replications,
            "share": args.share,
            "delta": args.delta,
            "identity_samples": args.identity_samples,
            "principal_deviations": args.principal_deviations,
        }, args.seed)
    if args.command == "fairness":
        if args.fairness_command == "lift-search":
            return Scenario("fairness-lift", "fairness", {}, {
                "solver": solver, "lift_search": True, "max_identities": args.max_identities,
            }, args.seed)
        inputs = {"economy": args.economy}
        if args.allocation:
            inputs["allocation"] = args.allocation
        return Scenario("fairness-check", "fairness", inputs,
                        {"solver": solver, "trigger": args.trigger}, args.seed)
    if args.command == "nonexistence":
        return Scenario("nonexistence", "nonexistence", {"economy": args.economy}, {
            "solver": solver,
            "schedule": [int(x) for x in args.schedule.split(",")],
            "beta": args.beta,
            "designated_good": args.good,
            "principal": args.principal,
        }, args.seed)
    if args.command == "tail":
        return Scenario("tail", "tail", {}, {
            "solver": solver, "trials": args.trials, "alpha": args.alpha, "mix": args.mix,
            "n": args.n, "share": args.share, "delta": args.delta,
            "c_u": args.c_u, "u_bar": args.u_bar, "parallel": args.parallel,
        }, args.seed)
    if args.command == "deterrence":
        return Scenario("deterrence-check", "deterrence", {"economy": args.economy}, {
            "solver": solver, "principal": args.principal, "csys": args.csys,
            "k_eps": args.k_eps, "eps": args.eps, "mc_tolerance": args.mc_tolerance,
        }, args.seed)
    if args.command == "corpus":
        return Scenario("corpus", "corpus", {}, {
            "count": args.count, "n": args.n, "m": args.m, "n_types": args.n_types,
            "delta": args.delta, "principal_share": args.principal_share,
        }, args.seed)
    raise EconomyError(f"unhandled command {args.command!r}")


def _run_estimate_only(s: Scenario, out: Path) -> RunRecord:
    digest = config_digest(s)
    start = time.perf_counter()
    paths = _run_estimate(s, out, digest)
    return RunRecord(s, [str(p) for p in paths], time.perf_counter() - start, __version__, digest)


def _run_lift_search(s: Scenario, out: Path) -> RunRecord:
    digest = config_digest(s)
    start = time.perf_counter()
    hit = find_jef_lift_counterexample(max_identities=s.params["max_identities"])
    found = hit is not None
    rows = [[found, s.params["max_identities"], s.seed, digest]]
    paths = [
        write_csv(out / "lift_search.csv", ["found", "max_identities", "seed", "config_hash"], rows),
        write_json(out / "lift_search.json", {
            "found": found,
            "description": hit.describe() if hit else "no instance found at these sizes",
            "seed": s.seed, "config_hash": digest,
        }),
    ]
    return RunRecord(s, [str(p) for p in paths], time.perf_counter() - start, __version__, digest)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        scenario = scenario_from_args(args)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if scenario.params.get("estimate_only"):
            record = _run_estimate_only(scenario, out)
        elif scenario.params.get("lift_search"):
            record = _run_lift_search(scenario, out)
        else:
            record = run_scenario(scenario, out)
    except (EconomyError, OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(record.to_dict(), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
