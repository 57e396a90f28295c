"""TCP master/worker execution of coded aggregation rounds."""

from .master import Master, QuorumPolicy, RoundResult, run_master
from .worker import run_worker

__all__ = ["Master", "QuorumPolicy", "RoundResult", "run_master", "run_worker"]
