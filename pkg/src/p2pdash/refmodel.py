"""Exact reference model for peer-to-overlay assignment.

Static question: place every peer in one overlay, never above the rate it
desires, such that every overlay's nominal supply (source capacity plus
member uploads) covers its nominal demand (members times rate), maximizing
the number of satisfied peers (those placed exactly at their desired rate).

Peers with equal (upload, desired rate) are interchangeable, so the search
runs over integer counts per (group, overlay).  Optimality is certified by
an integer-programming solve; a brute-force enumerator over per-peer
assignments provides an independent oracle for small instances.  Because
alternative optima may park unsatisfied peers in different overlays, every
reported solution is canonicalized by a second solve that keeps the
satisfied counts fixed and pushes everyone else as low as the capacity
constraints allow.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp


class InfeasibleInstanceError(ValueError):
    """The instance cannot host its own population."""


@dataclass(frozen=True)
class IlpInstance:
    uploads: tuple            # kbit/s per peer
    desired: tuple            # desired rate per peer, values from `rates`
    rates: tuple              # strictly increasing overlay rates
    server_caps: tuple        # source capacity per overlay

    @property
    def n_peers(self):
        return len(self.uploads)

    @property
    def n_overlays(self):
        return len(self.rates)

    def allowed_overlays(self, i):
        """Overlays peer i may join (1-based): rate no higher than desired."""
        return [j for j in range(1, self.n_overlays + 1)
                if self.rates[j - 1] <= self.desired[i]]

    def groups(self):
        """Mapping (upload, desired) -> peer indices, in input order."""
        out = {}
        for i, key in enumerate(zip(self.uploads, self.desired)):
            out.setdefault(key, []).append(i)
        return out

    def to_dict(self):
        return {
            "uploads": list(self.uploads),
            "desired": list(self.desired),
            "rates": list(self.rates),
            "server_caps": list(self.server_caps),
        }

    @classmethod
    def from_dict(cls, d):
        return build_instance(
            list(zip(d["uploads"], d["desired"])),
            tuple(d["rates"]), tuple(d["server_caps"]),
        )


def build_instance(peers, rates, server_caps) -> IlpInstance:
    """Build an instance from (upload, desired rate) pairs.

    Rejects desires outside the rate ladder and populations that overlay 1
    cannot host on its own, since overlay 1 is every peer's fallback.
    """
    rates = tuple(rates)
    server_caps = tuple(server_caps)
    if len(server_caps) != len(rates):
        raise ValueError("one server capacity per overlay is required")
    if any(rates[i] >= rates[i + 1] for i in range(len(rates) - 1)):
        raise ValueError("rates must be strictly increasing")
    uploads = tuple(p[0] for p in peers)
    desired = tuple(p[1] for p in peers)
    rate_set = set(rates)
    for i, r in enumerate(desired):
        if r not in rate_set:
            raise ValueError(f"peer {i} desires rate {r} outside the ladder {rates}")
    slack = server_caps[0] + sum(uploads) - rates[0] * len(uploads)
    if slack < 0:
        raise InfeasibleInstanceError(
            f"overlay 1 cannot host the whole population (slack {slack})"
        )
    return IlpInstance(uploads, desired, rates, server_caps)


@dataclass
class Assignment:
    overlay_of: list          # 1-based overlay per peer, input order
    satisfied: int
    counts: tuple             # members per overlay, index j-1

    def to_dict(self):
        return {
            "overlay_of": list(self.overlay_of),
            "satisfied": self.satisfied,
            "counts": list(self.counts),
        }


def validate_assignment(instance, assignment):
    """Re-evaluate the model constraints; raises AssertionError on breach."""
    K = instance.n_overlays
    counts = [0] * K
    slack = [instance.server_caps[j] for j in range(K)]
    satisfied = 0
    for i, j in enumerate(assignment.overlay_of):
        assert 1 <= j <= K, f"peer {i} outside overlay range: {j}"
        rate = instance.rates[j - 1]
        assert rate <= instance.desired[i], \
            f"peer {i} above its desired rate in overlay {j}"
        counts[j - 1] += 1
        slack[j - 1] += instance.uploads[i] - rate
        if rate == instance.desired[i]:
            satisfied += 1
    for j in range(K):
        assert slack[j] >= -1e-9, f"overlay {j + 1} oversubscribed by {-slack[j]}"
    assert tuple(counts) == tuple(assignment.counts), "count vector mismatch"
    assert satisfied == assignment.satisfied, "satisfaction count mismatch"
    return True


# Integer-programming machinery ------------------------------------------


def _solve_counts(instance, objective, extra_constraints=(), fixed_satisfied=None):
    """MILP over group-by-overlay count variables.

    objective: dict (group key, overlay j) -> cost (minimized).
    extra_constraints: rows (coeff dict, lower bound) over the same pairs.
    fixed_satisfied: optional dict group key -> required satisfied count.
    Returns dict (group key, j) -> count.
    """
    groups = instance.groups()
    keys = list(groups)
    pairs = []
    for key in keys:
        _upload, des = key
        for j in range(1, instance.n_overlays + 1):
            if instance.rates[j - 1] <= des:
                pairs.append((key, j))
    idx = {pair: k for k, pair in enumerate(pairs)}
    n = len(pairs)
    if n == 0:
        return {}

    cost = np.zeros(n)
    for pair, c in objective.items():
        cost[idx[pair]] = c

    rows = []
    lbs = []
    ubs = []
    for key in keys:
        row = np.zeros(n)
        for j in range(1, instance.n_overlays + 1):
            k = idx.get((key, j))
            if k is not None:
                row[k] = 1.0
        size = len(groups[key])
        rows.append(row)
        lbs.append(size)
        ubs.append(size)
    for j in range(1, instance.n_overlays + 1):
        row = np.zeros(n)
        rate = instance.rates[j - 1]
        for key in keys:
            k = idx.get((key, j))
            if k is not None:
                row[k] = key[0] - rate
        rows.append(row)
        lbs.append(-float(instance.server_caps[j - 1]))
        ubs.append(np.inf)
    for coeffs, lower in extra_constraints:
        row = np.zeros(n)
        for pair, v in coeffs.items():
            row[idx[pair]] = v
        rows.append(row)
        lbs.append(lower)
        ubs.append(np.inf)

    upper = np.array([len(groups[key]) for key, _j in pairs], dtype=float)
    lower = np.zeros(n)
    if fixed_satisfied is not None:
        for key, k_sat in fixed_satisfied.items():
            rate_j = instance.rates.index(key[1]) + 1
            k = idx[(key, rate_j)]
            lower[k] = k_sat
            upper[k] = k_sat

    res = milp(
        cost,
        constraints=LinearConstraint(np.vstack(rows), np.array(lbs), np.array(ubs)),
        integrality=np.ones(n),
        bounds=Bounds(lower, upper),
        options={"mip_rel_gap": 0.0},
    )
    if not res.success:
        raise InfeasibleInstanceError(f"count program unsolvable: {res.message}")
    values = np.rint(res.x).astype(int)
    return {pair: int(v) for pair, v in zip(pairs, values)}


def _expand(instance, placement):
    """Deterministic per-peer assignment from group-by-overlay counts.

    Within each group (input order) the satisfied slots come first, then the
    remaining overlays in ascending order.
    """
    groups = instance.groups()
    overlay_of = [0] * instance.n_peers
    counts = [0] * instance.n_overlays
    satisfied = 0
    for key, members in groups.items():
        _upload, des = key
        des_j = instance.rates.index(des) + 1
        slots = []
        k_sat = placement.get((key, des_j), 0)
        slots.extend([des_j] * k_sat)
        for j in range(1, instance.n_overlays + 1):
            if j == des_j:
                continue
            slots.extend([j] * placement.get((key, j), 0))
        for peer_idx, j in zip(members, slots):
            overlay_of[peer_idx] = j
            counts[j - 1] += 1
            if j == des_j:
                satisfied += 1
    return Assignment(overlay_of, satisfied, tuple(counts))


def _satisfaction_objective(instance):
    obj = {}
    for key in instance.groups():
        _upload, des = key
        des_j = instance.rates.index(des) + 1
        obj[(key, des_j)] = -1.0
    return obj


def _canonical_objective(instance):
    obj = {}
    for key in instance.groups():
        _upload, des = key
        for j in range(1, instance.n_overlays + 1):
            if instance.rates[j - 1] <= des:
                obj[(key, j)] = float(j)
    return obj


def _satisfied_counts(instance, placement):
    out = {}
    for key in instance.groups():
        _upload, des = key
        des_j = instance.rates.index(des) + 1
        out[key] = placement.get((key, des_j), 0)
    return out


def solve_max_satisfaction(instance) -> Assignment:
    """Optimal assignment, canonicalized.

    First solve maximizes the satisfied count; the second, with satisfied
    counts pinned, places everyone else as low in the rate ladder as the
    capacity constraints allow, so equal instances yield equal assignments.
    """
    if instance.n_peers == 0:
        return Assignment([], 0, (0,) * instance.n_overlays)
    stage_a = _solve_counts(instance, _satisfaction_objective(instance))
    best = sum(_satisfied_counts(instance, stage_a).values())
    sat_row = {pair: 1.0 for pair in _satisfaction_objective(instance)}
    stage_b = _solve_counts(
        instance,
        _canonical_objective(instance),
        extra_constraints=[(sat_row, float(best))],
    )
    assignment = _expand(instance, stage_b)
    validate_assignment(instance, assignment)
    assert assignment.satisfied == best
    return assignment


# Brute-force oracle -------------------------------------------------------


def brute_force_oracle(instance, budget=10 ** 7):
    """Enumerate all per-peer assignments.

    Returns (best satisfied count, sorted set of optimal count vectors).
    Rejects instances whose full K^N space exceeds the budget.
    """
    K = instance.n_overlays
    N = instance.n_peers
    if K ** N > budget:
        raise ValueError(f"instance too large to enumerate: {K}^{N} > {budget}")
    allowed = [instance.allowed_overlays(i) for i in range(N)]
    rates = instance.rates
    caps = instance.server_caps
    uploads = instance.uploads
    desired = instance.desired
    best = -1
    best_counts = set()
    for combo in itertools.product(*allowed):
        slack = list(caps)
        counts = [0] * K
        satisfied = 0
        for i, j in enumerate(combo):
            rate = rates[j - 1]
            slack[j - 1] += uploads[i] - rate
            counts[j - 1] += 1
            if rate == desired[i]:
                satisfied += 1
        if any(s < 0 for s in slack):
            continue
        if satisfied > best:
            best = satisfied
            best_counts = {tuple(counts)}
        elif satisfied == best:
            best_counts.add(tuple(counts))
    return best, sorted(best_counts)


# Uniqueness ----------------------------------------------------------------


@dataclass
class UniquenessReport:
    unique: bool
    base_counts: tuple
    resolve_counts: list = field(default_factory=list)

    def to_dict(self):
        return {
            "unique": self.unique,
            "base_counts": list(self.base_counts),
            "resolve_counts": [list(c) for c in self.resolve_counts],
        }


def _resolve_with_weights(instance, weights, best):
    """Maximize total weight of the satisfied peers, keeping optimality.

    Within a group the heaviest peers win the satisfied slots, so the solve
    reduces to choosing per-group satisfied counts k_g with objective
    sum of the k_g largest weights, linearized over sorted unit variables.
    """
    groups = instance.groups()
    keys = list(groups)
    unit_cost = []
    unit_group = []
    for key in keys:
        ws = sorted((weights[i] for i in groups[key]), reverse=True)
        unit_cost.extend(-w for w in ws)
        unit_group.extend([key] * len(ws))
    n_units = len(unit_cost)

    pairs = []
    for key in keys:
        _upload, des = key
        for j in range(1, instance.n_overlays + 1):
            if instance.rates[j - 1] <= des:
                pairs.append((key, j))
    idx = {pair: n_units + k for k, pair in enumerate(pairs)}
    n = n_units + len(pairs)

    cost = np.zeros(n)
    cost[:n_units] = unit_cost

    rows = []
    lbs = []
    ubs = []
    # Units chosen in a group == its satisfied placement count.
    for key in keys:
        row = np.zeros(n)
        for u in range(n_units):
            if unit_group[u] == key:
                row[u] = 1.0
        des_j = instance.rates.index(key[1]) + 1
        row[idx[(key, des_j)]] = -1.0
        rows.append(row)
        lbs.append(0.0)
        ubs.append(0.0)
    # Overlay placements exhaust each group.
    for key in keys:
        row = np.zeros(n)
        for j in range(1, instance.n_overlays + 1):
            k = idx.get((key, j))
            if k is not None:
                row[k] = 1.0
        size = len(groups[key])
        rows.append(row)
        lbs.append(size)
        ubs.append(size)
    # Capacity per overlay.
    for j in range(1, instance.n_overlays + 1):
        row = np.zeros(n)
        rate = instance.rates[j - 1]
        for key in keys:
            k = idx.get((key, j))
            if k is not None:
                row[k] = key[0] - rate
        rows.append(row)
        lbs.append(-float(instance.server_caps[j - 1]))
        ubs.append(np.inf)
    # Total satisfaction stays optimal.
    row = np.zeros(n)
    for key in keys:
        des_j = instance.rates.index(key[1]) + 1
        row[idx[(key, des_j)]] = 1.0
    rows.append(row)
    lbs.append(float(best))
    ubs.append(np.inf)

    lower = np.zeros(n)
    upper = np.ones(n)
    for pair in pairs:
        upper[idx[pair]] = len(groups[pair[0]])

    res = milp(
        cost,
        constraints=LinearConstraint(np.vstack(rows), np.array(lbs), np.array(ubs)),
        integrality=np.ones(n),
        bounds=Bounds(lower, upper),
        options={"mip_rel_gap": 0.0},
    )
    if not res.success:
        raise InfeasibleInstanceError(f"re-solve unsolvable: {res.message}")
    values = np.rint(res.x).astype(int)
    return {pair: int(values[idx[pair]]) for pair in pairs}


def check_uniqueness(instance, resolves=10, seed=0) -> UniquenessReport:
    """Probe for alternative optima with randomized preference weights.

    Each re-solve keeps the satisfied count optimal while maximizing a
    random per-peer weighting of who gets satisfied, then is canonicalized
    the same way as the base solve.  The verdict compares per-overlay
    member counts.
    """
    base = solve_max_satisfaction(instance)
    if instance.n_peers == 0:
        return UniquenessReport(True, base.counts)
    rng = random.Random(f"{seed}:uniqueness")
    sat_row = {pair: 1.0 for pair in _satisfaction_objective(instance)}
    report = UniquenessReport(True, base.counts)
    for _ in range(resolves):
        weights = [rng.random() for _ in range(instance.n_peers)]
        placement = _resolve_with_weights(instance, weights, base.satisfied)
        canonical = _solve_counts(
            instance,
            _canonical_objective(instance),
            extra_constraints=[(sat_row, float(base.satisfied))],
            fixed_satisfied=_satisfied_counts(instance, placement),
        )
        counts = _expand(instance, canonical).counts
        report.resolve_counts.append(counts)
        if counts != base.counts:
            report.unique = False
    return report


# Serialization helpers ------------------------------------------------------


def save_assignment(path, instance, assignment, report=None):
    doc = {
        "instance": instance.to_dict(),
        "assignment": assignment.to_dict(),
    }
    if report is not None:
        doc["uniqueness"] = report.to_dict()
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
