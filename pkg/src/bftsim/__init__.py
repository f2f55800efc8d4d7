"""BFT finality library with a deterministic network simulator.

Two protocol modes share one block tree and one set of accountability
rules: the general framework carries explicit approve messages with
weighted proposers and subjective decision thresholds, while the lisk-bft
mode encodes all votes into two integer header fields. The simulator
replays scenarios tick by tick under partial synchrony; the checkers
re-derive safety, liveness and accountability verdicts from saved traces.
"""

from .blocktree import Block, BlockId, BlockTree, GENESIS_ID, ProposerId
from .checkers import (
    Verdict,
    check_accountability,
    check_liveness,
    check_safety,
    check_trace,
    verify_tally,
)
from .consensus import (
    ChainTally,
    DecisionTracker,
    Precommit,
    Prevote,
    ProposerSet,
    StaticWeights,
)
from .errors import BftSimError
from .liskbft import HeaderChain, LiskConfig, LiskHeader, quorum_count
from .scenario import Scenario
from .simnet import Trace, run

__all__ = [
    "Block",
    "BlockId",
    "BlockTree",
    "BftSimError",
    "ChainTally",
    "DecisionTracker",
    "GENESIS_ID",
    "HeaderChain",
    "LiskConfig",
    "LiskHeader",
    "Precommit",
    "Prevote",
    "ProposerId",
    "ProposerSet",
    "Scenario",
    "StaticWeights",
    "Trace",
    "Verdict",
    "check_accountability",
    "check_liveness",
    "check_safety",
    "check_trace",
    "quorum_count",
    "run",
    "verify_tally",
]
