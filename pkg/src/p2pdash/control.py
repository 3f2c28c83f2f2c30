"""Distributed rate switching: local indicator smoothing and the per-peer
decision between staying, moving one overlay up, or one overlay down.

Each peer ticks independently (phase-offset across peers).  The upward path
is gated on the peer's own upload or on the health of the next overlay; the
downward path protects viewing quality and fires only when both the
delivery ratio and the request window state have degraded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

UP = 1
STAY = 0
DOWN = -1


@dataclass(frozen=True)
class SwitchDecision:
    direction: int          # UP, STAY or DOWN
    target: int             # overlay to join (current overlay when staying)
    reason: str
    arm_up: bool = False    # candidate passed the upward gate; confirm next tick


def update_ewma(previous: float, raw: float, weight: float) -> float:
    """Exponentially weighted average; `weight` multiplies the fresh sample."""
    return weight * raw + (1.0 - weight) * previous


def projected_resource_index(sigma, members, rate, upload, server_capacity):
    """Resource index the overlay would show with one more member aboard.

    The upward gate asks whether the target can accommodate a new peer, so
    the candidate counts itself: its upload joins the supply and its demand
    joins the denominator.  A weak joiner therefore cannot push a marginal
    overlay below balance, while a joiner whose upload covers the rate never
    hurts the index.
    """
    if not math.isfinite(sigma):
        return (server_capacity + upload) / rate
    supply = sigma * members * rate + upload
    return supply / ((members + 1) * rate)


def rate_switch_decision(j, desired_rate, upload, dr, rws, armed,
                         snapshot, cfg) -> SwitchDecision:
    """Pure decision for a peer currently in overlay j (1-based).

    dr and rws are the smoothed local indicators; snapshot carries the
    latest per-overlay resource index and efficiency; armed says whether
    this peer already passed the upward gate on its previous tick.

    An unsatisfied peer with enough upload to sustain its current overlay
    defers the upward move while that overlay is undersupplied, but a
    quality collapse still demotes it.

    The upward gate prices candidates by what they will do to the target.
    Efficiency is a health reading in both branches: delivery saturates at
    real-time need, so it answers "is the overlay serving its members now",
    while capacity headroom is the resource index's question.  A peer
    merely passing through (it desires a rate beyond the next overlay, so
    it stays for a single control period) reads the raw indicators.  A peer
    that would settle in the next overlay is lasting load, so its capacity
    check counts itself into the index, and the whole gate must pass on two
    consecutive ticks: a surplus that a passing migrant carries in and out
    again within one control period opens and closes inside the
    confirmation window, so it can no longer admit permanent members the
    overlay cannot sustain on its own.
    """
    rates = cfg.rates
    rate = rates[j - 1]
    deferred = False
    if rate < desired_rate:
        sigma_here = snapshot.sigma[j - 1]
        if sigma_here < 1.0 and upload >= rate:
            deferred = True
        elif j < len(rates):
            next_rate = rates[j]
            if upload > next_rate:
                return SwitchDecision(UP, j + 1, "migrate-rich")
            if desired_rate > next_rate:
                sigma_ahead = snapshot.sigma[j]
                eff_ahead = snapshot.eff[j]
                if sigma_ahead > 1.0 and eff_ahead > cfg.e_thres:
                    return SwitchDecision(UP, j + 1, "migrate-healthy-target")
            else:
                projected = projected_resource_index(
                    snapshot.sigma[j], snapshot.counts[j], next_rate,
                    upload, cfg.server_capacity(j + 1))
                eff_ahead = snapshot.eff[j]
                if projected > 1.0 and eff_ahead > cfg.e_thres:
                    if armed:
                        return SwitchDecision(
                            UP, j + 1, "migrate-healthy-target")
                    return SwitchDecision(STAY, j, "hold", arm_up=True)
    if dr < cfg.dr_thres and rws < cfg.rws_thres and j > 1:
        return SwitchDecision(DOWN, j - 1, "downgrade-quality")
    if rate == desired_rate:
        return SwitchDecision(STAY, j, "satisfied")
    if deferred:
        return SwitchDecision(STAY, j, "deferred-sigma")
    return SwitchDecision(STAY, j, "hold")


class RateSwitchController:
    """Per-peer periodic control: smooth indicators, decide, migrate."""

    def __init__(self, swarm, monitor, cfg):
        self.swarm = swarm
        self.monitor = monitor
        self.cfg = cfg

    def tick(self, peer, now):
        swarm = self.swarm
        cfg = self.cfg
        swarm.advance_playback(peer, now)
        dr_raw = peer.dr_latest if peer.dr_latest is not None else 1.0
        rws_raw = swarm.request_window_state(peer)
        peer.dr_ewma = update_ewma(peer.dr_ewma, dr_raw, cfg.w_d)
        peer.rws_ewma = update_ewma(peer.rws_ewma, rws_raw, cfg.w_w)
        armed = now - peer.up_armed_at <= 1.5 * cfg.delta_t
        decision = rate_switch_decision(
            peer.overlay_j, peer.desired_rate, peer.upload,
            peer.dr_ewma, peer.rws_ewma, armed,
            self.monitor.live_snapshot(now), cfg,
        )
        peer.up_armed_at = now if decision.arm_up else -math.inf
        if decision.direction != STAY:
            swarm.migrate(peer, decision.target, now)
        return decision
