"""Run metrics: time series, per-peer records, summaries and exports.

The per-second trace carries, for every overlay, membership, resource
index, efficiency and the mean delivery ratio of its playing members, plus
the system-wide satisfied-peer count.  Summaries average the trailing
steady-state window; distribution metrics (hop counts, residence shares,
switching delays) come from per-peer records collected at departure or at
the end of the run.
"""

from __future__ import annotations

import csv
import json
import math
import os
from statistics import mean, pstdev

SCHEMA_VERSION = 1


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return repr(value) if isinstance(value, float) else str(value)


class MetricsLog:
    """Chronological record of one run."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.rows = []            # (time, counts, sigma, eff, dr, satisfied)
        self.delay_marks = []     # (time, delay_sum tuple, delay_count tuple)
        self.peer_records = []

    def add_row(self, time, counts, sigma, eff, dr, satisfied,
                delay_sum, delay_count):
        self.rows.append((time, tuple(counts), tuple(sigma), tuple(eff),
                          tuple(dr), satisfied))
        self.delay_marks.append((time, tuple(delay_sum), tuple(delay_count)))

    def add_peer_record(self, record):
        self.peer_records.append(record)

    # Summaries ------------------------------------------------------------

    def steady_rows(self, start_time):
        return [r for r in self.rows if r[0] >= start_time - 1e-9]

    def summarize(self):
        cfg = self.cfg
        K = cfg.n_overlays
        start = max(0.0, cfg.duration - cfg.measure_window)
        rows = self.steady_rows(start)
        if not rows:
            rows = self.rows[-1:] if self.rows else []

        populations = []
        sigma_mean = []
        eff_mean = []
        dr_mean = []
        for j in range(K):
            populations.append(mean([r[1][j] for r in rows]) if rows else 0.0)
            finite_s = [r[2][j] for r in rows if not math.isinf(r[2][j])]
            finite_e = [r[3][j] for r in rows if not math.isinf(r[3][j])]
            drs = [r[4][j] for r in rows if r[4][j] is not None]
            sigma_mean.append(mean(finite_s) if finite_s else None)
            eff_mean.append(mean(finite_e) if finite_e else None)
            dr_mean.append(mean(drs) if drs else None)

        weighted = weighted_delivery(dr_mean, populations)

        period = cfg.satisfaction_period
        sat_rows = [r for r in rows
                    if abs(r[0] / period - round(r[0] / period)) < 1e-6]
        if not sat_rows:
            sat_rows = rows
        sat_values = []
        sat_fracs = []
        for r in sat_rows:
            total = sum(r[1])
            sat_values.append(r[5])
            sat_fracs.append(r[5] / total if total else 0.0)

        delay_mean = self._window_delay_means(start)

        return {
            "measure_start": start,
            "populations": populations,
            "sigma_mean": sigma_mean,
            "eff_mean": eff_mean,
            "dr_mean": dr_mean,
            "weighted_delivery": weighted,
            "satisfaction_mean": mean(sat_values) if sat_values else 0.0,
            "satisfaction_frac": mean(sat_fracs) if sat_fracs else 0.0,
            "playback_delay_mean": delay_mean,
            "hops_pmf": hops_pmf(self.peer_records, self.cfg.rates),
            "residence": residence_summary(self.peer_records),
            "switching": switching_summary(self.peer_records, K),
            "peers_seen": len(self.peer_records),
        }

    def _window_delay_means(self, start):
        if not self.delay_marks:
            return [None] * self.cfg.n_overlays
        first = self.delay_marks[0]
        for mark in self.delay_marks:
            if mark[0] >= start - 1e-9:
                first = mark
                break
        last = self.delay_marks[-1]
        out = []
        for j in range(self.cfg.n_overlays):
            num = last[1][j + 1] - first[1][j + 1]
            den = last[2][j + 1] - first[2][j + 1]
            out.append(num / den if den > 0 else None)
        return out

    # Export -----------------------------------------------------------------

    def csv_header(self):
        cols = ["time"]
        for j in range(1, self.cfg.n_overlays + 1):
            cols.extend([f"n_{j}", f"sigma_{j}", f"eff_{j}", f"dr_{j}"])
        cols.append("satisfaction")
        return cols

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.csv_header())
            for time, counts, sigma, eff, dr, satisfied in self.rows:
                row = [_fmt(float(time))]
                for j in range(self.cfg.n_overlays):
                    row.extend([str(counts[j]), _fmt(sigma[j]),
                                _fmt(eff[j]), _fmt(dr[j])])
                row.append(str(satisfied))
                writer.writerow(row)

    def write_peers(self, path):
        with open(path, "w") as fh:
            json.dump(self.peer_records, fh, sort_keys=True, indent=None,
                      separators=(",", ":"), allow_nan=False)
            fh.write("\n")


# Distribution helpers ---------------------------------------------------------


def weighted_delivery(dr_mean, populations):
    """Delivery ratio averaged over overlays, weighted by mean membership."""
    num = 0.0
    den = 0.0
    for dr, pop in zip(dr_mean, populations):
        if dr is None or pop <= 0:
            continue
        num += dr * pop
        den += pop
    return num / den if den > 0 else None


def hops_pmf(peer_records, rates):
    """Hop-count pmf per desired rate: rate -> {hops: probability}."""
    buckets = {}
    for rec in peer_records:
        buckets.setdefault(rec["desired_rate"], []).append(rec["hops"])
    out = {}
    for rate in rates:
        hops = buckets.get(rate)
        if not hops:
            continue
        pmf = {}
        for h in hops:
            pmf[h] = pmf.get(h, 0) + 1
        total = len(hops)
        out[str(rate)] = {str(h): pmf[h] / total for h in sorted(pmf)}
    return out


def mean_hops(peer_records, rate):
    hops = [rec["hops"] for rec in peer_records if rec["desired_rate"] == rate]
    return mean(hops) if hops else None


def residence_summary(peer_records):
    """Lifetime shares spent at the desired rate, for peers that reached it.

    total_share: accumulated time in the desired overlay over lifetime;
    stint_share: mean consecutive stay over lifetime.
    """
    total_shares = []
    stint_shares = []
    excluded = 0
    for rec in peer_records:
        if rec["desired_stints"] <= 0 or rec["lifetime"] <= 0:
            excluded += 1
            continue
        total_shares.append(rec["desired_time"] / rec["lifetime"])
        stint_shares.append(
            rec["desired_time"] / rec["desired_stints"] / rec["lifetime"])
    return {
        "total_share": sorted(total_shares),
        "stint_share": sorted(stint_shares),
        "never_reached": excluded,
    }


def switching_summary(peer_records, n_overlays):
    """Per-destination switching delays and their zero-delay fraction."""
    delays = {j: [] for j in range(1, n_overlays + 1)}
    for rec in peer_records:
        for _time, dest, delay in rec["switch_delays"]:
            delays[dest].append(delay)
    out = {}
    for j, values in delays.items():
        if not values:
            continue
        values.sort()
        zero = sum(1 for v in values if v <= 1e-9)
        out[str(j)] = {
            "count": len(values),
            "zero_fraction": zero / len(values),
            "mean": mean(values),
            "delays": values,
        }
    return out


def empirical_cdf(values, grid):
    """Fraction of values <= x for each x in grid (values need not be sorted)."""
    values = sorted(values)
    n = len(values)
    out = []
    k = 0
    for x in grid:
        while k < n and values[k] <= x + 1e-12:
            k += 1
        out.append(k / n if n else 0.0)
    return out


def ccdf_points(sorted_values):
    """(value, survival fraction) pairs for a sorted sample."""
    n = len(sorted_values)
    return [(v, (n - i) / n) for i, v in enumerate(sorted_values)]


def peak_time(times, values, smooth=10):
    """Time of the (smoothed) maximum of a series."""
    if not times:
        return None
    if smooth > 1 and len(values) >= smooth:
        acc = []
        run = sum(values[:smooth])
        acc.append(run)
        for i in range(smooth, len(values)):
            run += values[i] - values[i - smooth]
            acc.append(run)
        best = max(range(len(acc)), key=lambda i: (acc[i], -i))
        return times[best + smooth - 1]
    best = max(range(len(values)), key=lambda i: (values[i], -i))
    return times[best]


# Campaign aggregation ---------------------------------------------------------


def aggregate_runs(run_summaries):
    """Mean and standard deviation of the headline scalars across runs."""
    def collect(key):
        vals = [s[key] for s in run_summaries if s.get(key) is not None]
        return vals

    out = {"runs": len(run_summaries)}
    for key in ("satisfaction_frac", "satisfaction_mean", "weighted_delivery"):
        vals = collect(key)
        if vals:
            out[key + "_mean"] = mean(vals)
            out[key + "_std"] = pstdev(vals) if len(vals) > 1 else 0.0
    K = len(run_summaries[0]["populations"]) if run_summaries else 0
    pop_means = []
    dr_means = []
    for j in range(K):
        pops = [s["populations"][j] for s in run_summaries]
        pop_means.append(mean(pops))
        drs = [s["dr_mean"][j] for s in run_summaries if s["dr_mean"][j] is not None]
        dr_means.append(mean(drs) if drs else None)
    out["populations_mean"] = pop_means
    out["dr_mean"] = dr_means
    return out


def write_summary(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def load_summary(path):
    with open(path) as fh:
        return json.load(fh)


# Artifact reloading -------------------------------------------------------------


def _parse_cell(text):
    if text == "":
        return None
    if text == "inf":
        return math.inf
    return float(text)


def load_run(run_dir):
    """Rebuild a MetricsLog from a run directory (for re-plotting)."""
    from .config import RunConfig

    run_dir = str(run_dir)
    cfg = RunConfig.from_file(os.path.join(run_dir, "config.json"))
    log = MetricsLog(cfg)
    K = cfg.n_overlays
    with open(os.path.join(run_dir, "timeseries.csv"), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != log.csv_header():
            raise ValueError(f"unexpected timeseries columns in {run_dir}")
        for row in reader:
            time = float(row[0])
            counts, sigma, eff, dr = [], [], [], []
            for j in range(K):
                base = 1 + 4 * j
                counts.append(int(row[base]))
                sigma.append(_parse_cell(row[base + 1]))
                eff.append(_parse_cell(row[base + 2]))
                dr.append(_parse_cell(row[base + 3]))
            satisfied = int(row[1 + 4 * K])
            log.rows.append((time, tuple(counts), tuple(sigma), tuple(eff),
                             tuple(dr), satisfied))
    peers_path = os.path.join(run_dir, "peers.json")
    if os.path.exists(peers_path):
        with open(peers_path) as fh:
            log.peer_records = json.load(fh)
    return log
