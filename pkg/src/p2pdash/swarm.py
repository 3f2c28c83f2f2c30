"""Multi-overlay mesh-pull swarm: membership, chunk exchange, playback.

One overlay exists per representation rate.  Chunk ids are a global media
timeline shared by all overlays (chunk k covers the same media interval in
every representation); chunk k becomes available at the source at
(k + 1) * chunk_duration.  Peers pull missing chunks from neighbors
rarest-first inside a sliding request window, with the per-overlay source
uplink as provider of last resort.  Transfers are fluid: every round, each
uplink spreads capacity * round_length bits FIFO over its queue and each
downlink caps its aggregate intake, scaling receipts proportionally when
oversubscribed.
"""

from __future__ import annotations

import math
from collections import deque
from itertools import zip_longest

_EPS = 1e-9

# Optional diagnostics sink; scripts may set this to a Counter to collect
# request/transfer tallies.  Left as None in normal runs.
STATS = None


class TransferEntry:
    """One queued chunk request on an uplink; receiver tracks partial bits."""

    __slots__ = ("cid", "size", "requester", "uplink", "overlay_j", "done",
                 "cancelled", "fresh")

    def __init__(self, cid, size, requester, uplink, overlay_j, fresh=False):
        self.cid = cid
        self.size = size
        self.requester = requester
        self.uplink = uplink
        self.overlay_j = overlay_j
        self.done = False
        self.cancelled = False
        self.fresh = fresh

    @property
    def live(self):
        return not (self.done or self.cancelled)


class Uplink:
    """Upload endpoint (peer or source) with a FIFO request queue."""

    __slots__ = ("token", "capacity", "queue", "live_count", "live_fresh",
                 "bits_sent", "owner")

    def __init__(self, token, capacity, owner=None):
        self.token = token
        self.capacity = capacity
        self.queue = deque()
        self.live_count = 0
        self.live_fresh = 0
        self.bits_sent = 0.0
        self.owner = owner            # serving peer, None for the source


class Peer:
    __slots__ = (
        "id", "class_idx", "upload", "download", "desired_rate",
        "overlay_j", "neighbors", "uplink",
        "buffer", "partial", "in_flight",
        "window_right", "held_in_window", "no_missing_upto", "prune_upto",
        "last_map",
        "play_started", "play_pos", "next_deadline", "consec_upto",
        "render_deadline", "up_armed_at",
        "dr_on_time", "dr_due", "dr_latest", "dr_ewma", "rws_ewma",
        "active", "arrival_time", "first_join_time", "overlay_since",
        "hops", "migrations", "residence", "desired_time", "desired_stints",
        "stint_start", "switch_pending", "switch_delays", "events",
    )

    def __init__(self, pid, class_idx, upload, download, desired_rate, token):
        self.id = pid
        self.class_idx = class_idx
        self.upload = float(upload)
        self.download = float(download)
        self.desired_rate = desired_rate
        self.overlay_j = None
        self.neighbors = {}
        self.uplink = Uplink(token, float(upload), owner=self)
        self.buffer = {}          # chunk id -> (receipt time, representation j)
        self.partial = {}         # chunk id -> bits received so far
        self.in_flight = {}       # chunk id -> (TransferEntry, retry deadline)
        self.window_right = -1
        self.held_in_window = 0
        self.no_missing_upto = -1
        self.prune_upto = 0
        self.last_map = None      # (broadcast time, newest id)
        self.play_started = False
        self.play_pos = 0
        self.next_deadline = 0.0
        self.render_deadline = math.inf
        self.up_armed_at = -math.inf
        self.consec_upto = 0
        self.dr_on_time = 0
        self.dr_due = 0
        self.dr_latest = None     # last completed measurement, None before playout
        self.dr_ewma = 1.0
        self.rws_ewma = 1.0
        self.active = True
        self.arrival_time = 0.0
        self.first_join_time = None
        self.overlay_since = 0.0
        self.hops = 0
        self.migrations = []      # (time, from j, to j)
        self.residence = {}       # overlay j -> accumulated seconds
        self.desired_time = 0.0
        self.desired_stints = 0
        self.stint_start = None
        self.switch_pending = None   # (migration time, destination j)
        self.switch_delays = []      # (time, destination j, delay seconds)
        self.events = []             # periodic event handles, cancelled on departure

    def window_left(self, window_chunks):
        """Exclusive lower bound of the request window."""
        return self.window_right - window_chunks


class Overlay:
    """One representation's swarm: members plus the source uplink."""

    def __init__(self, j, rate, chunk_size, server_capacity, server_token,
                 flow_bins):
        self.j = j
        self.rate = rate
        self.chunk_size = chunk_size
        self.server = Uplink(server_token, server_capacity)
        self.members = {}
        self.member_list = []
        self.member_pos = {}
        self.sum_upload = 0.0
        # Delivered bits (source and members together) per transfer round,
        # kept over the trailing indicator interval so the efficiency reading
        # is never staler than one round.
        self.round_flow = 0.0
        self.flow_bins = deque([0.0] * flow_bins, maxlen=flow_bins)
        self.flow_sum = 0.0

    def push_flow_bin(self):
        self.flow_sum += self.round_flow - self.flow_bins[0]
        self.flow_bins.append(self.round_flow)
        self.round_flow = 0.0

    def add_member(self, peer):
        self.members[peer.id] = peer
        self.member_pos[peer.id] = len(self.member_list)
        self.member_list.append(peer)
        self.sum_upload += peer.upload

    def remove_member(self, peer):
        del self.members[peer.id]
        pos = self.member_pos.pop(peer.id)
        last = self.member_list.pop()
        if last is not peer:
            self.member_list[pos] = last
            self.member_pos[last.id] = pos
        self.sum_upload -= peer.upload


def inherit_segments(buffer, chunks_per_segment):
    """Return the subset of a buffer whose segments are completely received.

    A segment is inheritable only when every one of its chunks is present;
    fragments of partially received segments are discarded.
    """
    counts = {}
    for cid in buffer:
        seg = cid // chunks_per_segment
        counts[seg] = counts.get(seg, 0) + 1
    return {
        cid: rec for cid, rec in buffer.items()
        if counts[cid // chunks_per_segment] == chunks_per_segment
    }


class Swarm:
    """Protocol state machine for all overlays of one run."""

    def __init__(self, engine, cfg):
        self.engine = engine
        self.cfg = cfg
        self.rates = cfg.rates
        self.n_overlays = cfg.n_overlays
        self.chunk_duration = cfg.chunk_duration
        self.window_chunks = cfg.window_chunks
        self.startup_chunks = cfg.startup_chunks
        self.urgent_chunks = cfg.urgent_chunks
        self.seed_chunks = cfg.seed_chunks
        self.fetch_ahead_chunks = cfg.fetch_ahead_chunks
        flow_bins = int(round(cfg.indicator_period / cfg.transfer_round))
        self.overlays = {
            j: Overlay(j, cfg.rates[j - 1], cfg.chunk_size(j),
                       cfg.server_capacity(j), server_token=j - 1,
                       flow_bins=flow_bins)
            for j in range(1, cfg.n_overlays + 1)
        }
        self.peers = {}
        self.active_uplinks = {}
        self._next_token = cfg.n_overlays
        self._next_pid = 0
        self.neighbor_rng = engine.stream("neighbors")
        self.request_rng = engine.stream("request")
        # Per-overlay playback delay accumulators (index j, 1-based).
        self.delay_sum = [0.0] * (cfg.n_overlays + 1)
        self.delay_count = [0] * (cfg.n_overlays + 1)

    # Stream timeline ----------------------------------------------------

    def newest_generated(self, now):
        """Highest chunk id fully available at the source at `now`."""
        return int((now + _EPS) / self.chunk_duration) - 1

    def generation_time(self, cid):
        return (cid + 1) * self.chunk_duration

    # Peer lifecycle -----------------------------------------------------

    def create_peer(self, class_idx, upload, download, desired_rate, now):
        peer = Peer(self._next_pid, class_idx, upload, download, desired_rate,
                    token=self._next_token)
        self._next_pid += 1
        self._next_token += 1
        peer.arrival_time = now
        self.peers[peer.id] = peer
        return peer

    def join_overlay(self, peer, j, now):
        """Enter overlay j; adjacent-only when migrating from another overlay."""
        if peer.overlay_j is not None:
            if abs(peer.overlay_j - j) != 1:
                raise ValueError(
                    f"peer {peer.id} may only move to an adjacent overlay "
                    f"({peer.overlay_j} -> {j})"
                )
        ov = self.overlays[j]
        migrating = peer.overlay_j is not None
        peer.overlay_j = j
        ov.add_member(peer)
        peer.overlay_since = now
        if self.rates[j - 1] == peer.desired_rate:
            peer.stint_start = now

        want = min(self.cfg.neighbor_count, len(ov.member_list) - 1)
        if want > 0:
            self._link_neighbors(peer, ov, want)

        newest = self.newest_generated(now)
        peer.window_right = max(peer.window_right, newest)
        self._rescan_window(peer)
        peer.prune_upto = max(peer.prune_upto,
                              peer.window_right - 2 * self.window_chunks)

        if peer.first_join_time is None:
            peer.first_join_time = now
            peer.play_pos = max(0, peer.window_right - self.startup_chunks)
            peer.consec_upto = peer.play_pos
            self._advance_consecutive(peer)
            peer.render_deadline = now + self.cfg.startup_timeout
        else:
            peer.switch_pending = (now, j)
            if not peer.play_started:
                # Rendering is paused for re-buffering.  When nothing held
                # would be skipped, pick the spot the usual distance behind
                # live so requests land on chunks the residents still hold;
                # a buffer that kept media across the move (inheritance)
                # anchors the position instead.  Either way, cap how long
                # the screen may stay dark before playout is forced.
                anchor = max(peer.play_pos, 0,
                             peer.window_right - self.startup_chunks)
                buffer = peer.buffer
                if not any(cid in buffer
                           for cid in range(max(peer.play_pos, 0), anchor)):
                    peer.play_pos = anchor
                peer.render_deadline = now + self.cfg.startup_timeout
            peer.consec_upto = peer.play_pos
            self._advance_consecutive(peer)
            self._check_buffer_goals(peer, now)

    def leave_overlay(self, peer, now):
        """Withdraw from the current overlay, cancelling transfers both ways."""
        ov = self.overlays[peer.overlay_j]
        self.advance_playback(peer, now)
        # Incoming: retract every outstanding request of this peer.
        for entry, _expiry in peer.in_flight.values():
            self._cancel_entry(entry)
        peer.in_flight.clear()
        peer.partial.clear()
        # Outgoing: drop the upload queue and free the requesters to retry.
        for entry in peer.uplink.queue:
            if entry.live:
                entry.cancelled = True
                fl = entry.requester.in_flight.get(entry.cid)
                if fl is not None and fl[0] is entry:
                    del entry.requester.in_flight[entry.cid]
        peer.uplink.queue.clear()
        peer.uplink.live_count = 0
        peer.uplink.live_fresh = 0
        self.active_uplinks.pop(peer.uplink.token, None)
        for nb in list(peer.neighbors.values()):
            nb.neighbors.pop(peer.id, None)
        peer.neighbors.clear()
        ov.remove_member(peer)
        j = peer.overlay_j
        peer.residence[j] = peer.residence.get(j, 0.0) + (now - peer.overlay_since)
        if peer.stint_start is not None:
            peer.desired_time += now - peer.stint_start
            peer.desired_stints += 1
            peer.stint_start = None
        peer.overlay_j = None

    def migrate(self, peer, new_j, now):
        old_j = peer.overlay_j
        self.leave_overlay(peer, now)
        if self.cfg.inherit_buffer:
            peer.buffer = inherit_segments(peer.buffer, self.cfg.chunks_per_segment)
        else:
            peer.buffer.clear()
        peer.last_map = None
        # Delivery measurements describe the representation they were taken
        # at; a fresh interval starts here.  The smoothed control state
        # (dr_ewma, rws_ewma) deliberately survives the move.
        peer.dr_on_time = 0
        peer.dr_due = 0
        peer.dr_latest = None
        # A representation switch re-buffers: rendering pauses until enough
        # consecutive media of the new representation sits ahead of the
        # playout position (or the startup timeout forces the issue).
        # Deadlines stop accruing while the screen is paused, so the
        # one-time cost of the move never reads as delivery failure.
        peer.play_started = False
        peer.up_armed_at = -math.inf
        self.join_overlay(peer, new_j, now)
        peer.hops += 1
        peer.migrations.append((now, old_j, new_j))

    def depart(self, peer, now):
        if not peer.active:
            return
        self.leave_overlay(peer, now)
        peer.active = False
        peer.buffer.clear()
        for handle in peer.events:
            handle.cancel()
        peer.events.clear()

    # Neighbor management ------------------------------------------------

    def _link_neighbors(self, peer, ov, want):
        members = ov.member_list
        pos = ov.member_pos[peer.id]
        last = len(members) - 1
        members[pos], members[last] = members[last], members[pos]
        ov.member_pos[members[pos].id] = pos
        ov.member_pos[peer.id] = last
        chosen = self.neighbor_rng.sample(members[:last], want)
        for nb in chosen:
            peer.neighbors[nb.id] = nb
            nb.neighbors[peer.id] = peer

    def _repair_neighbors(self, peer, ov):
        want = min(self.cfg.neighbor_count, len(ov.member_list) - 1)
        need = want - len(peer.neighbors)
        if need <= 0:
            return
        rng = self.neighbor_rng
        members = ov.member_list
        picked = 0
        attempts = 0
        limit = 8 * need + 20
        while picked < need and attempts < limit:
            attempts += 1
            nb = members[rng.randrange(len(members))]
            if nb.id == peer.id or nb.id in peer.neighbors:
                continue
            peer.neighbors[nb.id] = nb
            nb.neighbors[peer.id] = peer
            picked += 1
        if picked < need:
            pool = [m for m in members
                    if m.id != peer.id and m.id not in peer.neighbors]
            for nb in rng.sample(pool, min(need - picked, len(pool))):
                peer.neighbors[nb.id] = nb
                nb.neighbors[peer.id] = peer

    # Window bookkeeping -------------------------------------------------

    def _rescan_window(self, peer):
        """Recount window occupancy from scratch (join and migration path)."""
        left = peer.window_left(self.window_chunks)
        held = 0
        buffer = peer.buffer
        for cid in range(max(left + 1, 0), peer.window_right + 1):
            if cid in buffer:
                held += 1
        peer.held_in_window = held
        nm = left
        while (nm + 1) in buffer:
            nm += 1
        peer.no_missing_upto = nm

    def slide_window(self, peer, new_right, now):
        """Advance the request window; chunks falling off the left edge are
        abandoned (never re-requested) and eventually pruned."""
        if new_right <= peer.window_right:
            return
        W = self.window_chunks
        old_left = peer.window_right - W
        new_left = new_right - W
        buffer = peer.buffer
        for cid in range(max(old_left + 1, 0), new_left + 1):
            if cid in buffer:
                peer.held_in_window -= 1
            fl = peer.in_flight.pop(cid, None)
            if fl is not None:
                self._cancel_entry(fl[0])
        peer.window_right = new_right
        if peer.no_missing_upto < new_left:
            peer.no_missing_upto = new_left
        if not peer.play_started and peer.play_pos <= new_left:
            peer.play_pos = max(new_left + 1, 0)
            if peer.consec_upto < peer.play_pos:
                peer.consec_upto = peer.play_pos
                self._advance_consecutive(peer)
        horizon = new_left - W
        while peer.prune_upto < horizon and peer.prune_upto < peer.play_pos:
            buffer.pop(peer.prune_upto, None)
            peer.partial.pop(peer.prune_upto, None)
            peer.prune_upto += 1

    # Availability exchange ----------------------------------------------

    def buffer_map_tick(self, peer, now):
        """Broadcast window state to neighbors; they may advance their windows."""
        peer.last_map = (now, peer.window_right)
        for nb in peer.neighbors.values():
            if peer.window_right > nb.window_right:
                self.slide_window(nb, peer.window_right, now)

    def _holds(self, neighbor, cid, j):
        """Whether the neighbor can serve the chunk at this representation.

        Availability reflects the neighbor's current buffer rather than its
        last broadcast: a fresh replica starts serving requests right away
        instead of idling until the next map goes out.
        """
        rec = neighbor.buffer.get(cid)
        return rec is not None and rec[1] == j

    # Request scheduling ---------------------------------------------------

    def request_tick(self, peer, now):
        """Ask providers for every missing window chunk.

        Chunks due soon (within urgent_duration of the play position) are
        requested first in playback order; the rest follow rarest-first.
        Without the urgency band, near-deadline chunks are plentiful among
        neighbors, sort last, and keep landing at the tail of provider
        queues where the retry timeout expires them before service.
        """
        ov = self.overlays[peer.overlay_j]
        newest = self.newest_generated(now)
        self.slide_window(peer, newest, now)
        if not peer.play_started and now + _EPS >= peer.render_deadline:
            self.force_playout_start(peer, now)
        self._repair_neighbors(peer, ov)

        # Chunks behind the play position can no longer reach the screen;
        # fetching them would burn provider capacity on dead data.  Ahead
        # of it, requests stop a fixed headroom out: a peer that migrated
        # or fell behind refills just in time instead of demanding the whole
        # span up to the live edge at once, which keeps the one-time cost
        # of admitting it small.
        right = min(peer.window_right,
                    max(peer.play_pos, 0) + self.fetch_ahead_chunks)
        lo = max(peer.window_left(self.window_chunks) + 1, 0,
                 peer.no_missing_upto + 1, peer.play_pos)
        buffer = peer.buffer
        in_flight = peer.in_flight
        candidates = []
        j = peer.overlay_j
        neighbors = peer.neighbors
        stats = STATS
        for cid in range(lo, right + 1):
            if cid in buffer:
                continue
            fl = in_flight.get(cid)
            if fl is not None:
                entry, retry_at = fl
                if entry.live and retry_at > now + _EPS:
                    continue
                if stats is not None and entry.live:
                    stats[("tmo", j)] += 1
                    stats[("lost", j)] += peer.partial.get(cid, 0.0)
                self._cancel_entry(entry)
                del in_flight[cid]
            holders = [nb for nb in neighbors.values() if self._holds(nb, cid, j)]
            candidates.append((len(holders), cid, holders))
        if not candidates:
            return
        rng = self.request_rng
        # Mesh-available chunks: deadline order inside the urgent band,
        # rarest-first beyond it.  Chunks nobody holds yet can only come
        # from the source; their order is shuffled per peer so concurrent
        # requesters seed distinct chunks instead of forming a convoy that
        # makes the source unicast every chunk to every member.
        horizon = peer.play_pos + self.urgent_chunks
        urgent_mesh, urgent_seed, rest_mesh, rest_seed = [], [], [], []
        for cand in candidates:
            count, cid = cand[0], cand[1]
            if cid <= horizon:
                (urgent_mesh if count else urgent_seed).append(cand)
            else:
                (rest_mesh if count else rest_seed).append(cand)
        urgent_mesh.sort(key=lambda c: c[1])
        rest_mesh.sort(key=lambda c: (c[0], c[1]))
        rng.shuffle(urgent_seed)
        rng.shuffle(rest_seed)
        ordered = urgent_mesh + urgent_seed + rest_mesh + rest_seed
        # Pipelining caps: never enqueue work that cannot start before the
        # retry timeout.  A provider takes at most one timeout's worth of
        # queued chunks; a receiver keeps at most one timeout's worth of
        # requests in flight.  Anything beyond that would expire unserved
        # and waste the transfer progress it had accrued.  Half the source
        # queue is reserved for recently generated chunks so that catch-up
        # floods cannot crowd out the seeding of new data into the mesh.
        timeout = self.cfg.request_timeout
        chunk = ov.chunk_size
        budget = max(1, int(peer.download * timeout / chunk + _EPS))
        budget -= len(in_flight)
        server = ov.server
        server_slots = max(1, int(server.capacity * timeout / chunk + _EPS))
        fresh_quota = server_slots - server_slots // 2
        rescue_quota = server_slots // 2
        fresh_floor = newest - self.seed_chunks
        server_bias = self.cfg.server_bias

        def server_open(cid):
            if cid > newest:
                return False
            if cid > fresh_floor:
                return server.live_fresh < fresh_quota
            return server.live_count - server.live_fresh < rescue_quota

        for count, cid, holders in ordered:
            if budget <= 0:
                if stats is not None:
                    stats[("nobudget", j)] += 1
                break
            uplink = None
            if count == 0:
                if server_open(cid):
                    uplink = server
            else:
                best_load = math.inf
                ties = []
                for h in holders:
                    live = h.uplink.live_count
                    if live >= max(1, int(h.upload * timeout / chunk + _EPS)):
                        continue
                    load = live / h.upload
                    if load < best_load:
                        best_load, ties = load, [h]
                    elif load == best_load:
                        ties.append(h)
                if not ties:
                    if server_open(cid):
                        uplink = server
                else:
                    server_load = server.live_count / server.capacity
                    if (server_load * server_bias < best_load
                            and server_open(cid)):
                        uplink = server
                    else:
                        pick = ties[0] if len(ties) == 1 else ties[rng.randrange(len(ties))]
                        uplink = pick.uplink
            if uplink is None:
                if stats is not None:
                    stats[("skip_v0" if count == 0 else "skip_full", j)] += 1
                continue
            if stats is not None:
                stats[("iss_s" if uplink is server else "iss_m", j)] += 1
                stats[("vis", j)] += count
                stats[("cand", j)] += 1
            fresh = uplink is server and cid > fresh_floor
            entry = TransferEntry(cid, ov.chunk_size, peer, uplink, j, fresh)
            uplink.queue.append(entry)
            uplink.live_count += 1
            if fresh:
                uplink.live_fresh += 1
            self.active_uplinks.setdefault(uplink.token, uplink)
            in_flight[cid] = (entry, now + timeout)
            budget -= 1

    def _cancel_entry(self, entry):
        if entry.live:
            entry.cancelled = True
            entry.uplink.live_count -= 1
            if entry.fresh:
                entry.uplink.live_fresh -= 1

    # Fluid transfer rounds -----------------------------------------------

    def transfer_round(self, now, dt):
        """Allocate one round of upload/download capacity and complete chunks.

        Member uplinks serve their queued requests in chunk-id order (the id
        is the playback deadline, so this is earliest-deadline-first) up to
        capacity * dt; each receiver's aggregate intake is capped at
        download * dt, scaling concurrent receipts down proportionally when
        providers together offered more.  Provider budget that a receiver
        cap scaled away is re-offered further down the queue in another
        pass, so no uplink idles while it still has pending requests it
        could serve.  Deadline order keeps a saturated overlay degrading
        gracefully: the bits that miss are the ones farthest from playout.

        The source alternates between its two roles instead: seeding (young
        chunks, served newest first so every fan-out starts with maximal
        runway) and rescue (everything older, served deadline first).  Pure
        deadline order would let rescue monopolize the source, and a chunk
        would receive its first copy only once it was nearly due, leaving
        the mesh no time to multiply it.
        """
        up_budget = {}
        rx_budget = {}
        active = []
        order = {}
        for uplink in self.active_uplinks.values():
            if uplink.live_count:
                up_budget[uplink.token] = uplink.capacity * dt
                active.append(uplink)
                live = [e for e in uplink.queue if e.live]
                if uplink.owner is None:
                    seeding = sorted((e for e in live if e.fresh),
                                     key=lambda e: -e.cid)
                    rescue = sorted((e for e in live if not e.fresh),
                                    key=lambda e: e.cid)
                    merged = []
                    for pair in zip_longest(seeding, rescue):
                        for e in pair:
                            if e is not None:
                                merged.append(e)
                    order[uplink.token] = merged
                else:
                    live.sort(key=lambda e: e.cid)
                    order[uplink.token] = live
        for _ in range(8):
            if not active:
                break
            receipts = {}
            for uplink in active:
                budget = up_budget[uplink.token]
                for entry in order[uplink.token]:
                    if budget <= _EPS:
                        break
                    if not entry.live:
                        continue
                    req = entry.requester
                    rb = rx_budget.get(req)
                    if rb is None:
                        rb = rx_budget[req] = req.download * dt
                    if rb <= _EPS:
                        continue
                    need = entry.size - req.partial.get(entry.cid, 0.0)
                    grant = need if need <= budget else budget
                    budget -= grant
                    lst = receipts.get(req)
                    if lst is None:
                        receipts[req] = [(entry, grant)]
                    else:
                        lst.append((entry, grant))
            moved = 0.0
            for req, lst in receipts.items():
                if len(lst) == 1:
                    total = lst[0][1]
                else:
                    total = 0.0
                    for _entry, grant in lst:
                        total += grant
                cap = rx_budget[req]
                scale = 1.0 if total <= cap else cap / total
                taken = 0.0
                for entry, grant in lst:
                    bits = grant * scale
                    taken += bits
                    up_budget[entry.uplink.token] -= bits
                    entry.uplink.bits_sent += bits
                    self.overlays[entry.overlay_j].round_flow += bits
                    part = req.partial.get(entry.cid, 0.0) + bits
                    if part >= entry.size - _EPS:
                        self._complete_chunk(req, entry, now)
                    else:
                        req.partial[entry.cid] = part
                rx_budget[req] = cap - taken
                moved += taken
            if moved <= _EPS:
                break
            active = [u for u in active
                      if u.live_count and up_budget[u.token] > _EPS]
        for token in list(self.active_uplinks):
            uplink = self.active_uplinks[token]
            queue = uplink.queue
            if uplink.live_count == 0:
                queue.clear()
            else:
                while queue and not queue[0].live:
                    queue.popleft()
            if not queue:
                del self.active_uplinks[token]
        for ov in self.overlays.values():
            ov.push_flow_bin()

    def _complete_chunk(self, peer, entry, now):
        entry.done = True
        entry.uplink.live_count -= 1
        if entry.fresh:
            entry.uplink.live_fresh -= 1
        if STATS is not None:
            j = entry.overlay_j
            src = entry.uplink is self.overlays[j].server
            STATS[("done_s" if src else "done_m", j)] += 1
        cid = entry.cid
        peer.partial.pop(cid, None)
        fl = peer.in_flight.get(cid)
        if fl is not None and fl[0] is entry:
            del peer.in_flight[cid]
        if cid in peer.buffer:
            return
        peer.buffer[cid] = (now, entry.overlay_j)
        if peer.window_left(self.window_chunks) < cid <= peer.window_right:
            peer.held_in_window += 1
        if cid == peer.no_missing_upto + 1:
            nm = cid
            while (nm + 1) in peer.buffer:
                nm += 1
            peer.no_missing_upto = nm
        self.advance_playback(peer, now)
        if cid == peer.consec_upto:
            self._advance_consecutive(peer)
        self._check_buffer_goals(peer, now)

    # Playback --------------------------------------------------------------

    def _advance_consecutive(self, peer):
        buffer = peer.buffer
        c = peer.consec_upto
        while c in buffer:
            c += 1
        peer.consec_upto = c

    def _check_buffer_goals(self, peer, now):
        """Start playout / resolve a pending rate switch once enough
        consecutive media sits ahead of the playout position."""
        ready = peer.consec_upto - peer.play_pos >= self.startup_chunks
        if not peer.play_started and ready:
            self.start_playout(peer, now)
        if peer.switch_pending is not None and ready:
            t0, dest = peer.switch_pending
            peer.switch_delays.append((now, dest, now - t0))
            peer.switch_pending = None

    def start_playout(self, peer, now):
        if peer.play_started:
            return
        peer.play_started = True
        peer.next_deadline = now
        self.advance_playback(peer, now)

    def force_playout_start(self, peer, now):
        """Startup fallback: begin rendering from the oldest requestable
        chunk even without a full startup buffer."""
        if peer.play_started or not peer.active:
            return
        left = peer.window_left(self.window_chunks)
        peer.play_pos = max(peer.play_pos, left + 1, 0)
        if peer.consec_upto < peer.play_pos:
            peer.consec_upto = peer.play_pos
            self._advance_consecutive(peer)
        self.start_playout(peer, now)

    def advance_playback(self, peer, now):
        """Render every chunk whose deadline has passed; missing media is
        skipped and counted lost, never rebuffered."""
        if not peer.play_started:
            return
        j = peer.overlay_j
        buffer = peer.buffer
        cd = self.chunk_duration
        deadline = peer.next_deadline
        pos = peer.play_pos
        consec = peer.consec_upto
        on_time = 0
        due = 0
        while deadline <= now + _EPS:
            rec = buffer.get(pos)
            due += 1
            if rec is not None and rec[0] <= deadline + _EPS:
                on_time += 1
                if j is not None:
                    self.delay_sum[j] += deadline - self.generation_time(pos)
                    self.delay_count[j] += 1
            pos += 1
            deadline += cd
            if pos > consec:
                consec = pos
                while consec in buffer:
                    consec += 1
        peer.play_pos = pos
        peer.next_deadline = deadline
        peer.consec_upto = consec
        peer.dr_on_time += on_time
        peer.dr_due += due

    def measure_delivery_ratio(self, peer, now):
        """Close the current measurement interval and store its ratio.

        Before playout has produced any deadline the measurement is
        undefined and stays None (treated as perfect by the controller).
        """
        self.advance_playback(peer, now)
        if peer.dr_due > 0:
            peer.dr_latest = peer.dr_on_time / peer.dr_due
        else:
            peer.dr_latest = None
        peer.dr_on_time = 0
        peer.dr_due = 0
        return peer.dr_latest

    def request_window_state(self, peer):
        """Fraction of the request window already buffered."""
        return peer.held_in_window / self.window_chunks

    def satisfaction_count(self):
        n = 0
        for ov in self.overlays.values():
            rate = ov.rate
            for p in ov.member_list:
                if p.desired_rate == rate:
                    n += 1
        return n
