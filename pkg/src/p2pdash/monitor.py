"""Overlay-wide indicators published by the source.

For overlay j, the resource index compares nominal supply (source capacity
plus member uploads) against nominal demand (membership times the overlay
rate); the efficiency makes the same comparison with the upload actually
delivered over the trailing indicator interval.  An empty overlay reports
both as infinity: with nobody to serve, the overlay counts as healthy,
which lets pioneers ignite it.

Both indicators are kept current between publication epochs.  The resource
index is pure membership arithmetic, so the source recomputes it on demand;
the delivered-bits window advances every transfer round, so the efficiency
a decision reads is never staler than one round.  The once-per-period
snapshot exists for the log: it samples the same live values on a fixed
clock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

HEALTHY_EMPTY = math.inf


@dataclass(frozen=True)
class Snapshot:
    time: float
    counts: tuple       # members per overlay, index j-1
    sigma: tuple        # resource index per overlay, index j-1
    eff: tuple          # efficiency per overlay, index j-1


def compute_resource_index(server_capacity, sum_upload, members, rate):
    if members == 0:
        return HEALTHY_EMPTY
    return (server_capacity + sum_upload) / (members * rate)


def compute_efficiency(server_delivered, sum_delivered, members, rate):
    if members == 0:
        return HEALTHY_EMPTY
    return (server_delivered + sum_delivered) / (members * rate)


class Monitor:
    """Reads overlay state into per-overlay indicator snapshots."""

    def __init__(self, swarm, cfg):
        self.swarm = swarm
        self.cfg = cfg
        self.period = cfg.indicator_period
        self.snapshot = Snapshot(
            0.0,
            (0,) * cfg.n_overlays,
            (HEALTHY_EMPTY,) * cfg.n_overlays,
            (HEALTHY_EMPTY,) * cfg.n_overlays,
        )

    def _live_state(self):
        period = self.period
        counts = []
        sigmas = []
        effs = []
        for j in range(1, self.swarm.n_overlays + 1):
            ov = self.swarm.overlays[j]
            n = len(ov.member_list)
            counts.append(n)
            sigmas.append(compute_resource_index(
                ov.server.capacity, ov.sum_upload, n, ov.rate))
            effs.append(compute_efficiency(
                0.0, ov.flow_sum / period, n, ov.rate))
        return tuple(counts), tuple(sigmas), tuple(effs)

    def live_snapshot(self, now):
        """Indicator state as of the latest membership change and round."""
        counts, sigmas, effs = self._live_state()
        return Snapshot(now, counts, sigmas, effs)

    def tick(self, now):
        """Publish the periodic snapshot the indicator log records."""
        counts, sigmas, effs = self._live_state()
        self.snapshot = Snapshot(now, counts, sigmas, effs)
        return self.snapshot
