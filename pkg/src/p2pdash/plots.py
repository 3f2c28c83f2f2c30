"""Figure rendering for run artifacts.

Every function takes a MetricsLog (or its peer records) and writes one SVG.
Output is byte-stable for a given run: the Agg backend, a fixed hashsalt
and a scrubbed Date field keep matplotlib from injecting anything that
varies between invocations.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import ccdf_points, empirical_cdf  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "p2pdash"

_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd")
_METADATA = {"Date": None}


def _label(cfg, j):
    return f"overlay {j} ({cfg.rates[j - 1]} kbit/s)"


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_METADATA)
    plt.close(fig)
    return path


def _series(log, field):
    """field: 1 counts, 2 sigma, 3 eff, 4 dr."""
    times = [r[0] for r in log.rows]
    K = log.cfg.n_overlays
    per = []
    for j in range(K):
        per.append([r[field][j] for r in log.rows])
    return times, per


def plot_populations(log, path):
    times, per = _series(log, 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    for j, series in enumerate(per, start=1):
        ax.plot(times, series, color=_COLORS[(j - 1) % len(_COLORS)],
                label=_label(log.cfg, j))
    ax.set_xlabel("time (s)")
    ax.set_ylabel("members")
    ax.set_title("Overlay membership")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def _plot_indicator(log, field, name, path, hline=None, clip=None):
    times, per = _series(log, field)
    fig, ax = plt.subplots(figsize=(7, 4))
    for j, series in enumerate(per, start=1):
        xs, ys = [], []
        for t, v in zip(times, series):
            if v is None:
                continue
            if clip is not None and v > clip:
                v = clip
            xs.append(t)
            ys.append(v)
        ax.plot(xs, ys, color=_COLORS[(j - 1) % len(_COLORS)],
                label=_label(log.cfg, j))
    if hline is not None:
        ax.axhline(hline, color="black", linewidth=0.8, linestyle="--")
    ax.set_xlabel("time (s)")
    ax.set_ylabel(name)
    ax.set_title(name)
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_resource_index(log, path):
    return _plot_indicator(log, 2, "resource index", path, hline=1.0, clip=5.0)


def plot_efficiency(log, path):
    return _plot_indicator(log, 3, "bandwidth efficiency", path,
                           hline=1.0, clip=5.0)


def plot_delivery(log, path):
    return _plot_indicator(log, 4, "delivery ratio", path)


def plot_satisfaction(log, path):
    times = [r[0] for r in log.rows]
    fracs = []
    for r in log.rows:
        total = sum(r[1])
        fracs.append(r[5] / total if total else 0.0)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(times, fracs, color=_COLORS[0])
    ax.set_xlabel("time (s)")
    ax.set_ylabel("satisfied fraction")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Desired-rate satisfaction")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_hops_pmf(log, path):
    pmf = {}
    for rec in log.peer_records:
        rate = rec["desired_rate"]
        pmf.setdefault(rate, {}).setdefault(rec["hops"], 0)
        pmf[rate][rec["hops"]] += 1
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(1, len(pmf))
    for i, rate in enumerate(sorted(pmf)):
        counts = pmf[rate]
        total = sum(counts.values())
        hops = sorted(counts)
        xs = [h + i * width for h in hops]
        ax.bar(xs, [counts[h] / total for h in hops], width=width,
               color=_COLORS[i % len(_COLORS)], label=f"{rate} kbit/s")
    ax.set_xlabel("overlay hops per peer")
    ax.set_ylabel("probability")
    ax.set_title("Hop count distribution by desired rate")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3, axis="y")
    return _save(fig, path)


def plot_residence_ccdf(log, path):
    total, stint = [], []
    for rec in log.peer_records:
        if rec["lifetime"] <= 0 or rec["desired_stints"] == 0:
            continue
        total.append(rec["desired_time"] / rec["lifetime"])
        stint.append(rec["desired_time"] / rec["desired_stints"]
                     / rec["lifetime"])
    fig, ax = plt.subplots(figsize=(7, 4))
    for values, name, color in ((total, "total share", _COLORS[0]),
                                (stint, "mean stint share", _COLORS[1])):
        if not values:
            continue
        points = ccdf_points(sorted(values))
        ax.step([p[0] for p in points], [p[1] for p in points],
                where="post", color=color, label=name)
    ax.set_xlabel("fraction of lifetime at desired rate")
    ax.set_ylabel("P(share > x)")
    ax.set_title("Residence at the desired overlay")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_switch_delay_cdf(log, path):
    cfg = log.cfg
    per_dest = {}
    for rec in log.peer_records:
        for _, dest, delay in rec["switch_delays"]:
            per_dest.setdefault(dest, []).append(delay)
    fig, ax = plt.subplots(figsize=(7, 4))
    drawn = False
    for dest in sorted(per_dest):
        values = sorted(per_dest[dest])
        hi = values[-1] if values else 1.0
        grid = [i * hi / 200 for i in range(201)] if hi > 0 else [0.0, 1.0]
        ys = empirical_cdf(values, grid)
        ax.plot(grid, ys, color=_COLORS[(dest - 1) % len(_COLORS)],
                label=_label(cfg, dest))
        drawn = True
    ax.set_xlabel("switch delay (s)")
    ax.set_ylabel("CDF")
    ax.set_title("Time from decision to playback in the target overlay")
    if drawn:
        ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


FIGURES = (
    ("populations.svg", plot_populations),
    ("resource_index.svg", plot_resource_index),
    ("efficiency.svg", plot_efficiency),
    ("delivery.svg", plot_delivery),
    ("satisfaction.svg", plot_satisfaction),
    ("hops_pmf.svg", plot_hops_pmf),
    ("residence_ccdf.svg", plot_residence_ccdf),
    ("switch_delay_cdf.svg", plot_switch_delay_cdf),
)


def render_all(log, out_dir):
    written = []
    for name, fn in FIGURES:
        written.append(fn(log, os.path.join(out_dir, name)))
    return written
