"""Single-run orchestration: wiring of clock, swarm, control and metrics.

Peers arrive over the initial ramp (plus an optional flash crowd), run
their periodic protocol ticks, and depart after exponential sessions with
immediate replacement so the population stays level.  In "p2p-dash" mode
everyone enters overlay 1 and the rate switching controller migrates peers
step by step; the iso modes pin peers to a fixed overlay (their desired
one, or the reference-model assignment) and never migrate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import scenarios
from .config import RunConfig
from .control import RateSwitchController
from .engine import Engine, draw_exponential
from .metrics import MetricsLog
from .monitor import Monitor
from .swarm import Swarm


@dataclass
class RunResult:
    cfg: RunConfig
    seed: int
    log: MetricsLog
    summary: dict


class Simulation:
    def __init__(self, cfg: RunConfig, seed=None):
        cfg.validate()
        self.cfg = cfg
        self.seed = cfg.seed if seed is None else seed
        self.engine = Engine(self.seed)
        self.swarm = Swarm(self.engine, cfg)
        self.monitor = Monitor(self.swarm, cfg)
        self.controller = RateSwitchController(self.swarm, self.monitor, cfg)
        self.log = MetricsLog(cfg)
        self.population_rng = self.engine.stream("population")
        self.session_rng = self.engine.stream("session")
        self.control_rng = self.engine.stream("control-phase")
        self.assign_rng = self.engine.stream("assign")
        self._ilp_distribution = None
        if cfg.mode == "iso-ilp":
            self._ilp_distribution = self._build_ilp_distribution()

    # Mode plumbing --------------------------------------------------------

    def _build_ilp_distribution(self):
        from . import refmodel

        cfg = self.cfg
        roster = scenarios.expected_population(cfg)
        instance = refmodel.build_instance(
            [(p.upload, p.desired_rate) for p in roster],
            cfg.rates,
            tuple(cfg.server_capacity(j) for j in range(1, cfg.n_overlays + 1)),
        )
        assignment = refmodel.solve_max_satisfaction(instance)
        dist = {}
        for profile, j in zip(roster, assignment.overlay_of):
            key = (profile.upload, profile.desired_rate)
            dist.setdefault(key, []).append(j)
        return {key: sorted(js) for key, js in dist.items()}

    def _initial_overlay(self, profile):
        cfg = self.cfg
        if cfg.mode == "p2p-dash":
            return 1
        if cfg.mode == "iso-desired":
            return cfg.rates.index(profile.desired_rate) + 1
        key = (profile.upload, profile.desired_rate)
        js = self._ilp_distribution.get(key)
        if not js:
            return cfg.rates.index(profile.desired_rate) + 1
        return js[self.assign_rng.randrange(len(js))]

    # Peer lifecycle ---------------------------------------------------------

    def _spawn_peer(self, class_idx=None):
        now = self.engine.now
        cfg = self.cfg
        profile = scenarios.make_profile(cfg, self.population_rng,
                                         class_idx=class_idx)
        peer = self.swarm.create_peer(
            profile.class_idx, profile.upload, profile.download,
            profile.desired_rate, now)
        self.swarm.join_overlay(peer, self._initial_overlay(profile), now)

        if math.isfinite(cfg.mean_session):
            session = draw_exponential(self.session_rng, cfg.mean_session)
            self.engine.schedule(now + session, lambda: self._depart(peer))

        self._start_periodic(peer, self.swarm.buffer_map_tick, cfg.buffer_map_period)
        self._start_periodic(peer, self.swarm.request_tick, cfg.request_period)
        self._start_periodic(peer, self.swarm.measure_delivery_ratio, cfg.t_tilde)
        if cfg.mode == "p2p-dash":
            phase = self.control_rng.uniform(0.0, cfg.delta_t)
            self._start_periodic(peer, self.controller.tick, cfg.delta_t,
                                 first_delay=phase)
        return peer

    def _start_periodic(self, peer, fn, period, first_delay=None):
        engine = self.engine

        def handler():
            if not peer.active:
                return
            fn(peer, engine.now)
            if peer.active:
                engine.schedule_after(period, handler)

        engine.schedule_after(period if first_delay is None else first_delay,
                              handler)

    def _depart(self, peer):
        if not peer.active:
            return
        now = self.engine.now
        self.swarm.depart(peer, now)
        self.log.add_peer_record(self._peer_record(peer, now, departed=True))
        # The replacement arrives in the same capacity class, holding the
        # population mix at the scenario's proportions; its desired rate is
        # drawn afresh.
        self._spawn_peer(class_idx=peer.class_idx)

    def _peer_record(self, peer, end_time, departed):
        residence = dict(peer.residence)
        desired_time = peer.desired_time
        stints = peer.desired_stints
        if peer.active and peer.overlay_j is not None:
            j = peer.overlay_j
            residence[j] = residence.get(j, 0.0) + (end_time - peer.overlay_since)
            if peer.stint_start is not None:
                desired_time += end_time - peer.stint_start
                stints += 1
        return {
            "id": peer.id,
            "class_idx": peer.class_idx,
            "desired_rate": peer.desired_rate,
            "arrival": peer.arrival_time,
            "departed": departed,
            "lifetime": end_time - peer.arrival_time,
            "hops": peer.hops,
            "started": peer.play_started,
            "switch_delays": [[t, dest, delay]
                              for t, dest, delay in peer.switch_delays],
            "residence": {str(j): s for j, s in sorted(residence.items())},
            "desired_time": desired_time,
            "desired_stints": stints,
        }

    # Global ticks -------------------------------------------------------------

    def _monitor_tick(self):
        now = self.engine.now
        snapshot = self.monitor.tick(now)
        swarm = self.swarm
        dr = []
        for j in range(1, self.cfg.n_overlays + 1):
            values = [p.dr_latest for p in swarm.overlays[j].member_list
                      if p.dr_latest is not None]
            dr.append(sum(values) / len(values) if values else None)
        self.log.add_row(
            now, snapshot.counts, snapshot.sigma, snapshot.eff, dr,
            swarm.satisfaction_count(),
            tuple(swarm.delay_sum), tuple(swarm.delay_count),
        )
        self.engine.schedule_after(self.cfg.indicator_period, self._monitor_tick)

    def _transfer_tick(self):
        dt = self.cfg.transfer_round
        self.swarm.transfer_round(self.engine.now, dt)
        self.engine.schedule_after(dt, self._transfer_tick)

    # Run ------------------------------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.cfg
        engine = self.engine
        churn_rng = engine.stream("churn")
        ramp_times = scenarios.ramp_arrival_times(cfg, churn_rng)
        ramp_classes = scenarios.arrival_class_sequence(
            len(ramp_times), cfg.classes, self.population_rng)
        for t, cidx in zip(ramp_times, ramp_classes):
            engine.schedule(t, lambda c=cidx: self._spawn_peer(class_idx=c))
        flash_times = scenarios.flash_arrival_times(cfg)
        flash_classes = scenarios.arrival_class_sequence(
            len(flash_times), cfg.classes, self.population_rng)
        for t, cidx in zip(flash_times, flash_classes):
            engine.schedule(t, lambda c=cidx: self._spawn_peer(class_idx=c))
        engine.schedule(cfg.transfer_round, self._transfer_tick)
        engine.schedule(cfg.indicator_period, self._monitor_tick)
        engine.run_until(cfg.duration)

        for peer in self.swarm.peers.values():
            if peer.active:
                self.swarm.advance_playback(peer, cfg.duration)
                self.log.add_peer_record(
                    self._peer_record(peer, cfg.duration, departed=False))
        summary = self.log.summarize()
        summary["seed"] = self.seed
        return RunResult(cfg, self.seed, self.log, summary)


def run_single(cfg: RunConfig, seed=None) -> RunResult:
    return Simulation(cfg, seed=seed).run()


def run_campaign(cfg: RunConfig):
    """cfg.runs independent runs seeded root, root+1, ... (one result each)."""
    return [run_single(cfg, seed=cfg.seed + i) for i in range(cfg.runs)]
