"""Multi-overlay P2P live streaming simulator with distributed rate switching.

The package couples a deterministic discrete-event core with a mesh-pull
chunk exchange swarm, per-peer rate switching control driven by local and
overlay-wide indicators, an exact integer-programming reference model for
peer-to-overlay assignment, and scenario/metrics/plotting tooling around
them.
"""

__version__ = "0.1.0"

from .config import RunConfig, desk_preset  # noqa: E402,F401
from .simulation import RunResult, run_campaign, run_single  # noqa: E402,F401
