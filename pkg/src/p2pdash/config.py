"""Run configuration: defaults, validation, JSON loading, presets.

Every knob of a simulation run lives in one RunConfig so that artifacts can
embed the fully resolved configuration and a run can be reproduced from it.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

SCENARIOS = ("conservative", "uniform", "aggressive")
MODES = ("p2p-dash", "iso-desired", "iso-ilp")

# (upload kbit/s, download kbit/s, population share) per user class.
DEFAULT_CLASSES = (
    (704, 2048, 0.20),
    (1024, 8192, 0.21),
    (1500, 10000, 0.42),
    (10000, 50000, 0.17),
)


@dataclass
class RunConfig:
    # Stream and overlays
    rates: tuple = (700, 1500, 2500, 3500)      # kbit/s, one overlay per rate
    server_capacity_factor: float = 4.0          # C_S per overlay = factor * rate
    chunk_duration: float = 0.2                  # s of media per chunk
    chunks_per_segment: int = 10                 # chunks per addressable segment

    # Mesh-pull protocol
    window_duration: float = 20.0                # request window span, s
    neighbor_count: int = 15                     # target neighbor set size
    server_bias: float = 4.0                     # load handicap keeping the source a last resort
    buffer_map_period: float = 1.0               # s between availability broadcasts
    request_period: float = 1.0                  # s between request rounds
    request_timeout: float = 1.0                 # s before an unanswered request is retried
    transfer_round: float = 0.1                  # s per fluid allocation round
    seed_duration: float = 2.0                   # chunk age below which source requests count as seeding

    # Playback
    startup_buffer: float = 8.0                  # s of consecutive media before playout
    startup_timeout: float = 30.0                # s after first join when playout starts regardless
    urgent_duration: float = 4.0                 # s past the play position fetched deadline-first
    fetch_ahead: float = 20.0                    # s of media requested beyond the play position

    # Rate switching control
    delta_t: float = 4.0                         # s between control decisions per peer
    t_tilde: float = 5.0                         # s per delivery-ratio measurement
    dr_thres: float = 0.5
    rws_thres: float = 0.3
    e_thres: float = 0.9
    w_d: float = 1.0 / 3.0                       # weight of the fresh delivery-ratio sample
    w_w: float = 2.0 / 3.0                       # weight of the fresh window-state sample

    # Monitoring and metrics cadence
    indicator_period: float = 1.0                # s between overlay indicator snapshots
    satisfaction_period: float = 10.0            # s between satisfaction samples
    measure_window: float = 1500.0               # trailing s used for steady-state averages

    # Population and churn
    n_peers: int = 2000
    classes: tuple = DEFAULT_CLASSES
    ramp_duration: float = 20.0                  # s over which the initial population arrives
    mean_session: float = 1500.0                 # s, exponential; inf disables departures

    # Flash crowd (disabled unless flash_n > 0)
    flash_n: int = 0
    flash_time: float = 0.0
    flash_ramp: float = 30.0

    # Run identity
    scenario: str = "conservative"
    mode: str = "p2p-dash"
    inherit_buffer: bool = False                 # keep complete segments across migrations
    seed: int = 1
    duration: float = 3000.0
    runs: int = 1
    out_dir: str = "out"

    def validate(self) -> "RunConfig":
        r = self.rates
        if len(r) < 2 or any(r[i] >= r[i + 1] for i in range(len(r) - 1)):
            raise ValueError(f"rates must be strictly increasing, got {r}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}, expected one of {SCENARIOS}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        for name in ("chunk_duration", "window_duration", "buffer_map_period",
                     "request_period", "request_timeout", "transfer_round",
                     "delta_t", "t_tilde", "indicator_period", "satisfaction_period",
                     "duration", "ramp_duration"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("dr_thres", "rws_thres", "e_thres", "w_d", "w_w"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.n_peers <= 0:
            raise ValueError("n_peers must be positive")
        if self.chunks_per_segment <= 0:
            raise ValueError("chunks_per_segment must be positive")
        if self.neighbor_count <= 0:
            raise ValueError("neighbor_count must be positive")
        if self.server_bias <= 0:
            raise ValueError("server_bias must be positive")
        if self.seed_duration < 0:
            raise ValueError("seed_duration must be >= 0")
        if self.fetch_ahead <= 0:
            raise ValueError("fetch_ahead must be positive")
        if not self.mean_session > 0:
            raise ValueError("mean_session must be positive (use inf to disable churn)")
        ratio = self.indicator_period / self.transfer_round
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("indicator_period must be a multiple of transfer_round")
        if self.flash_n < 0:
            raise ValueError("flash_n must be >= 0")
        if self.flash_n > 0 and not 0 <= self.flash_time <= self.duration:
            raise ValueError("flash_time must fall within the run duration")
        shares = sum(c[2] for c in self.classes)
        if abs(shares - 1.0) > 1e-9:
            raise ValueError(f"class shares must sum to 1, got {shares}")
        if self.runs <= 0:
            raise ValueError("runs must be positive")
        return self

    # Derived quantities -------------------------------------------------

    @property
    def n_overlays(self) -> int:
        return len(self.rates)

    @property
    def window_chunks(self) -> int:
        return int(round(self.window_duration / self.chunk_duration))

    @property
    def startup_chunks(self) -> int:
        return int(round(self.startup_buffer / self.chunk_duration))

    @property
    def urgent_chunks(self) -> int:
        return int(round(self.urgent_duration / self.chunk_duration))

    @property
    def seed_chunks(self) -> int:
        return int(round(self.seed_duration / self.chunk_duration))

    @property
    def fetch_ahead_chunks(self) -> int:
        return int(round(self.fetch_ahead / self.chunk_duration))

    def server_capacity(self, j: int) -> float:
        """Upload capacity reserved by the source for overlay j (1-based)."""
        return self.server_capacity_factor * self.rates[j - 1]

    def chunk_size(self, j: int) -> float:
        """Chunk size in kbit for overlay j (1-based)."""
        return self.chunk_duration * self.rates[j - 1]

    # Serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["rates"] = list(self.rates)
        d["classes"] = [list(c) for c in self.classes]
        if math.isinf(self.mean_session):
            d["mean_session"] = None   # JSON-safe; from_dict maps it back to inf
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "rates" in kwargs:
            kwargs["rates"] = tuple(kwargs["rates"])
        if "classes" in kwargs:
            kwargs["classes"] = tuple(tuple(c) for c in kwargs["classes"])
        if "mean_session" in kwargs and kwargs["mean_session"] is None:
            kwargs["mean_session"] = float("inf")
        return cls(**kwargs).validate()

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# Scaled-down variants: protocol constants stay untouched, only population
# size and run length shrink so a run finishes on a workstation.
PRESET_OVERRIDES = {
    "desk": dict(
        n_peers=200,
        duration=1500.0,
        measure_window=600.0,
    ),
}


def desk_preset(**overrides) -> RunConfig:
    base = dict(PRESET_OVERRIDES["desk"])
    base.update(overrides)
    return RunConfig(**base).validate()


PRESETS = {"desk": desk_preset}
