"""Matplotlib figure rendering for the CLI report paths.

Every reporting subcommand writes a PNG next to its CSV/JSON output.  All
figures use the Agg backend and fixed geometry so repeated runs produce
identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGSIZE = (6.4, 4.2)
DPI = 120


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def price_bars(good_names: Sequence[str], price_sets: dict[str, Sequence[float]], path) -> Path:
    """Grouped bars of one or more price vectors (e.g. pre/post attack)."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    m = len(good_names)
    width = 0.8 / max(len(price_sets), 1)
    for k, (label, prices) in enumerate(price_sets.items()):
        ax.bar(np.arange(m) + k * width, prices, width=width, label=label)
    ax.set_xticks(np.arange(m) + 0.4 - width / 2)
    ax.set_xticklabels(good_names)
    ax.set_ylabel("price")
    ax.legend()
    return _save(fig, path)


def bound_scatter(observed, bound, clean, path, xlabel="observed", title="") -> Path:
    """Observed vs bound, with the y=x satisfaction line; bad-region trials
    marked separately."""
    observed = np.asarray(observed, dtype=float)
    bound = np.asarray(bound, dtype=float)
    clean = np.asarray(clean, dtype=bool)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    finite = np.isfinite(bound)
    if np.any(clean & finite):
        ax.scatter(observed[clean & finite], bound[clean & finite], s=18, label="clean")
    if np.any(~clean & finite):
        ax.scatter(observed[~clean & finite], bound[~clean & finite], s=18, marker="x", label="bad region")
    lim = max(float(np.max(observed, initial=0.0)), float(np.max(bound[finite], initial=0.0)), 1e-6)
    ax.plot([0, lim], [0, lim], lw=1, color="gray")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("bound")
    if title:
        ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def spl_curve_plot(rows, path) -> Path:
    """Identity vs principal maximal gains against market size (log-log)."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ns = [r.n for r in rows]
    ax.errorbar(ns, [max(r.identity_gain, 1e-9) for r in rows],
                yerr=[r.identity_se for r in rows], marker="o", label="identity-level")
    ax.errorbar(ns, [max(r.principal_gain, 1e-9) for r in rows],
                yerr=[r.principal_se for r in rows], marker="s", label="principal-level")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("identities n")
    ax.set_ylabel("max misreport gain")
    ax.legend()
    return _save(fig, path)


def nonexistence_plot(sizes, lhs, rhs, violation_index, path) -> Path:
    """beta*|S_k| against the relaxed capacity, with the first violation marked."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.plot(sizes, lhs, marker="o", label="beta * |S_k|")
    ax.axhline(rhs, color="gray", lw=1, label="(1+delta) * c_j")
    if violation_index is not None:
        ax.axvline(sizes[violation_index - 1], color="red", lw=1, linestyle="--",
                   label=f"first violation k={violation_index}")
    ax.set_xlabel("step k")
    ax.set_ylabel("claimed demand")
    ax.legend()
    return _save(fig, path)


def tail_hist(gains, rhs, path) -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.hist(gains, bins=20)
    ax.axvline(float(np.mean(gains)), color="black", lw=1, label="mean gain")
    ax.axvline(rhs, color="red", lw=1, linestyle="--", label="conditional bound")
    ax.set_xlabel("attack gain")
    ax.set_ylabel("trials")
    ax.legend()
    return _save(fig, path)


def deterrence_plot(rows, path) -> Path:
    """Net gain per attack size with the deterrence line at zero."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ks = [r.k for r in rows]
    nets = [r.net for r in rows]
    ax.scatter(ks, nets, s=20)
    ax.axhline(0.0, color="red", lw=1)
    ax.set_xlabel("identities maintained k")
    ax.set_ylabel("gain - C_sys(k, n)")
    return _save(fig, path)


def fairness_matrix(ids, verdicts, path) -> Path:
    """Pairwise envy verdicts: 0 pass, 1 fail, NaN untriggered."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    n = len(ids)
    grid = np.full((n, n), np.nan)
    index = {iid: k for k, iid in enumerate(ids)}
    for v in verdicts:
        if v.triggered:
            grid[index[v.envier], index[v.envied]] = 0.0 if v.passed else 1.0
    im = ax.imshow(grid, cmap="RdYlGn_r", vmin=0, vmax=1)
    ax.set_xticks(range(n))
    ax.set_xticklabels(ids, rotation=90)
    ax.set_yticks(range(n))
    ax.set_yticklabels(ids)
    ax.set_xlabel("envied")
    ax.set_ylabel("envier")
    fig.colorbar(im, ax=ax, shrink=0.8)
    return _save(fig, path)


def gamma_quotients(quotients, gamma_min, path) -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.hist(quotients, bins=20)
    ax.axvline(gamma_min, color="red", lw=1, linestyle="--", label="gamma_min")
    ax.set_xlabel("monotonicity quotient")
    ax.set_ylabel("price pairs")
    ax.legend()
    return _save(fig, path)
