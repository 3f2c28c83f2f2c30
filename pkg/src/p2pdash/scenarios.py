"""Population synthesis and arrival processes.

Peers come in capacity classes (upload, download, share).  A scenario maps
each peer to the representation rate it desires:

- conservative: the highest rate its own upload can sustain;
- uniform: a uniform pick among the rates below its download capacity;
- aggressive: the highest rate below its download capacity.

The initial population arrives over a short ramp with exponential spacing;
afterwards every departure spawns a replacement with freshly drawn class
and desire, keeping the population size steady.  A flash crowd injects a
burst of additional arrivals at a constant rate.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import draw_exponential


@dataclass(frozen=True)
class PeerProfile:
    class_idx: int          # 1-based position in the class table
    upload: float
    download: float
    desired_rate: int


def expected_class_counts(n, classes):
    """Deterministic class counts matching the shares (largest remainder)."""
    raw = [n * share for _up, _down, share in classes]
    counts = [int(x) for x in raw]
    short = n - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (raw[i] - counts[i], -i),
                   reverse=True)
    for i in order[:short]:
        counts[i] += 1
    return counts


def draw_class(rng, classes):
    """One class index (1-based) drawn per the share column."""
    u = rng.random()
    acc = 0.0
    for idx, (_up, _down, share) in enumerate(classes, start=1):
        acc += share
        if u < acc:
            return idx
    return len(classes)


def desired_rate(scenario, upload, download, rates, rng):
    if scenario == "conservative":
        fitting = [r for r in rates if r <= upload]
        return fitting[-1] if fitting else rates[0]
    if scenario == "uniform":
        fitting = [r for r in rates if r < download]
        if not fitting:
            return rates[0]
        return fitting[rng.randrange(len(fitting))]
    if scenario == "aggressive":
        fitting = [r for r in rates if r < download]
        return fitting[-1] if fitting else rates[0]
    raise ValueError(f"unknown scenario {scenario!r}")


def make_profile(cfg, rng, class_idx=None):
    """Draw one peer profile; the class is drawn unless given explicitly."""
    if class_idx is None:
        class_idx = draw_class(rng, cfg.classes)
    upload, download, _share = cfg.classes[class_idx - 1]
    rate = desired_rate(cfg.scenario, upload, download, cfg.rates, rng)
    return PeerProfile(class_idx, upload, download, rate)


def arrival_class_sequence(n, classes, rng):
    """Class indices for n arrivals: exact proportions, shuffled order."""
    counts = expected_class_counts(n, classes)
    seq = [idx
           for idx, count in enumerate(counts, start=1)
           for _ in range(count)]
    rng.shuffle(seq)
    return seq


def expected_population(cfg):
    """Deterministic roster with exact class proportions.

    Uniform-scenario desires are spread deterministically too: within each
    class, peers cycle through the fitting rates in order.
    """
    counts = expected_class_counts(cfg.n_peers, cfg.classes)
    roster = []
    for class_idx, count in enumerate(counts, start=1):
        upload, download, _share = cfg.classes[class_idx - 1]
        if cfg.scenario == "uniform":
            fitting = [r for r in cfg.rates if r < download] or [cfg.rates[0]]
            for i in range(count):
                roster.append(PeerProfile(class_idx, upload, download,
                                          fitting[i % len(fitting)]))
        else:
            rate = desired_rate(cfg.scenario, upload, download, cfg.rates, None)
            roster.extend(PeerProfile(class_idx, upload, download, rate)
                          for _ in range(count))
    return roster


def ramp_arrival_times(cfg, rng):
    """Exactly n_peers arrival offsets with exponential interarrival times
    whose mean spreads the population over the ramp."""
    mean = cfg.ramp_duration / cfg.n_peers
    times = []
    t = 0.0
    for _ in range(cfg.n_peers):
        t += draw_exponential(rng, mean)
        times.append(t)
    return times


def flash_arrival_times(cfg):
    """Flash-crowd arrivals, evenly spaced over the flash ramp."""
    if cfg.flash_n <= 0:
        return []
    step = cfg.flash_ramp / cfg.flash_n
    return [cfg.flash_time + i * step for i in range(cfg.flash_n)]


def desired_rate_totals(roster, rates):
    """Peers desiring each rate, indexed like `rates`."""
    totals = [0] * len(rates)
    for p in roster:
        totals[rates.index(p.desired_rate)] += 1
    return totals
