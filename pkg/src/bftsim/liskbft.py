"""Header-encoded consensus: two integers per block stand in for all votes.

Each block header carries the proposer's largest previously proposed height
and the deepest quorum-prevoted height of the parent chain. A block then
implies a batch of prevotes (for the suffix of the chain the proposer has
not yet endorsed, clamped to its activity span and a fixed window) and all
precommits the included prevotes justify. Vote accounting reduces to
integer counters folded block by block, one immutable state per block, so
every branch query is a dictionary lookup.

The same header fields make misbehavior attributable: for any two blocks
by one proposer, honesty forces a small set of inequalities between the
header triples, and a violating pair is portable evidence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .blocktree import Block, BlockId, BlockTree, GENESIS_ID, ProposerId
from .consensus import Precommit, Prevote, ProposerSet
from .dynamics import ChangeEvent, RoundSchedule
from .errors import (
    DifferentAuthorsError,
    DuplicateBlockError,
    HeightMismatchError,
    InactiveAtHeightError,
    MalformedHeaderError,
    NotActiveError,
    UnknownParentError,
)


def quorum_count(members: int) -> int:
    """Smallest number of members strictly above two thirds of them."""
    return (2 * members) // 3 + 1


@dataclass(frozen=True)
class LiskConfig:
    proposer_count: int = 101
    blocks_per_round: int = 101
    # how far back implied votes may reach; chosen so a block can always be
    # finalized by the time this many descendants exist
    vote_window: int = 303
    activation_delay: int = 2

    @property
    def threshold(self) -> int:
        return quorum_count(self.proposer_count)


MAINNET = LiskConfig()
SMALL = LiskConfig(proposer_count=4, blocks_per_round=4, vote_window=13)


@dataclass(frozen=True)
class LiskHeader:
    previous_height: int  # author's largest previously proposed height, 0 if none
    prevoted_height: int  # deepest quorum-prevoted height of the parent chain


@dataclass
class DelegateState:
    """What a proposer must remember about itself between proposals."""

    proposer: ProposerId
    max_proposed_height: int = 0
    activity_start: int = 0  # first height of its current continuous activity span


class _ChainState:
    """Vote accounting for one chain prefix, folded from the parent's state."""

    __slots__ = (
        "prevote_count",
        "precommit_count",
        "coverage",
        "max_precommit",
        "prevoted_height",
        "final_height",
        "newly_final",
    )

    def __init__(
        self,
        prevote_count,
        precommit_count,
        coverage,
        max_precommit,
        prevoted_height,
        final_height,
        newly_final,
    ):
        self.prevote_count: dict[int, int] = prevote_count
        self.precommit_count: dict[int, int] = precommit_count
        # per author, the merged height intervals its included prevotes cover
        self.coverage: dict[ProposerId, tuple[tuple[int, int], ...]] = coverage
        self.max_precommit: dict[ProposerId, int] = max_precommit
        self.prevoted_height: int = prevoted_height
        self.final_height: int = final_height
        self.newly_final: tuple[int, ...] = newly_final


def _largest_uncovered(intervals: Sequence[tuple[int, int]], upto: int) -> int:
    """Largest height in 1..upto not covered by any interval, or -1."""
    h = upto
    for lo, hi in reversed(intervals):
        if h > hi:
            break
        if h >= lo:
            h = lo - 1
    return h if h >= 1 else -1


def _merge(intervals: Sequence[tuple[int, int]], lo: int, hi: int) -> tuple[tuple[int, int], ...]:
    merged: list[tuple[int, int]] = []
    pending = (lo, hi)
    for span in intervals:
        if span[1] + 1 < pending[0]:
            merged.append(span)
        elif pending[1] + 1 < span[0]:
            merged.append(pending)
            pending = span
        else:
            pending = (min(span[0], pending[0]), max(span[1], pending[1]))
    merged.append(pending)
    return tuple(merged)


class HeaderChain:
    """Registry of header-carrying blocks and their implied-vote accounting.

    One instance models everything ever proposed; simulated proposers keep
    views into it (a received set plus a canonical tip), which is sound
    because a block's vote state depends only on its own chain prefix.
    """

    def __init__(
        self,
        config: LiskConfig,
        *,
        initial: Optional[ProposerSet] = None,
        changes: Sequence[ChangeEvent] = (),
        seed: int = 0,
        slot_overrides=None,
    ):
        self.config = config
        self.tree = BlockTree()
        self.schedule = RoundSchedule(
            self.tree,
            initial or ProposerSet.uniform(config.proposer_count),
            blocks_per_round=config.blocks_per_round,
            activation_delay=config.activation_delay,
            changes=changes,
            seed=seed,
            slot_overrides=slot_overrides,
        )
        self._states: dict[BlockId, _ChainState] = {
            GENESIS_ID: _ChainState({}, {}, {}, {}, 0, 0, ())
        }
        self._implied: dict[BlockId, tuple[tuple[Prevote, ...], tuple[Precommit, ...]]] = {
            GENESIS_ID: ((), ())
        }

    # ------------------------------------------------------------------
    # Queries
    # ------------------------------------------------------------------

    def state(self, block_id: BlockId) -> _ChainState:
        return self._states[block_id]

    def implied_votes(self, block_id: BlockId):
        return self._implied[block_id]

    def prevoted_height(self, tip: BlockId) -> int:
        return self._states[tip].prevoted_height

    def final_height(self, tip: BlockId) -> int:
        """Largest finalized height on this branch; finalization of a block
        extends to all its ancestors, hence a single scalar."""
        return self._states[tip].final_height

    def threshold_at(self, tip: BlockId, height: int) -> int:
        if not self.schedule.changes:
            return self.config.threshold
        active = self.schedule.active_set(tip, self.schedule.round_of(height))
        return quorum_count(len(active))

    def is_active(self, tip: BlockId, proposer: ProposerId, height: int) -> bool:
        return self.schedule.is_active(tip, proposer, self.schedule.round_of(height))

    # ------------------------------------------------------------------
    # Proposing and inserting
    # ------------------------------------------------------------------

    def make_header(self, state: DelegateState, parent: BlockId) -> LiskHeader:
        height = self.tree.height(parent) + 1
        if not self.is_active(parent, state.proposer, height):
            raise NotActiveError(
                f"proposer {state.proposer} is not active at height {height}"
            )
        return LiskHeader(
            previous_height=state.max_proposed_height,
            prevoted_height=self._states[parent].prevoted_height,
        )

    def add_block(self, block: Block) -> tuple[tuple[Prevote, ...], tuple[Precommit, ...]]:
        """Validate, insert and account one block; returns its implied votes."""
        parent_state = self._states.get(block.parent)
        if parent_state is None:
            raise UnknownParentError(f"block {block.id} extends unknown {block.parent}")
        if block.id in self._states:
            raise DuplicateBlockError(f"block id {block.id} already inserted")
        if block.height != self.tree.height(block.parent) + 1:
            raise HeightMismatchError(
                f"block {block.id} declares height {block.height}"
            )
        header = block.header
        if not isinstance(header, LiskHeader):
            raise MalformedHeaderError(f"block {block.id} carries no usable header")
        if header.previous_height < 0 or header.prevoted_height < 0:
            raise MalformedHeaderError(f"block {block.id} has negative header fields")
        if header.prevoted_height != parent_state.prevoted_height:
            raise MalformedHeaderError(
                f"block {block.id} declares prevoted height {header.prevoted_height}, "
                f"chain derives {parent_state.prevoted_height}"
            )
        if block.proposer is None or not self.is_active(
            block.parent, block.proposer, block.height
        ):
            raise InactiveAtHeightError(
                f"proposer {block.proposer} may not propose at height {block.height}"
            )

        prevotes, precommits = self._expand(block, parent_state)
        self.tree.insert(block)
        self._fold(block, parent_state, prevotes, precommits)
        self._implied[block.id] = (prevotes, precommits)
        return prevotes, precommits

    def _expand(self, block: Block, parent_state: _ChainState):
        """The votes a header implies, counted against the parent chain only."""
        height = block.height
        header = block.header
        author = block.proposer
        if header.previous_height >= height:
            return (), ()
        start_round = self.schedule.round_of(height)
        activity_start = self.schedule.activity_start(block.parent, author, start_round)
        floor = max(activity_start - 1, height - self.config.vote_window)
        k = max(header.previous_height, floor)

        included_precommit = parent_state.max_precommit.get(author, -1)
        uncovered = _largest_uncovered(
            parent_state.coverage.get(author, ()), header.previous_height
        )
        # precommits may reach below the fresh prevotes, onto heights the
        # author's earlier blocks already endorsed
        start = max(included_precommit, uncovered, floor, 0) + 1

        ids_by_height = {height: block.id}
        walk = self.tree.block(block.parent)
        while walk.height >= min(k + 1, start):
            ids_by_height[walk.height] = walk.id
            walk = self.tree.block(walk.parent)

        prevotes = tuple(
            Prevote(ids_by_height[s], block.id, author) for s in range(k + 1, height + 1)
        )
        precommits = tuple(
            Precommit(ids_by_height[s], block.id, author)
            for s in range(start, height + 1)
            if parent_state.prevote_count.get(s, 0) >= self.threshold_at(block.parent, s)
        )
        return prevotes, precommits

    def _fold(self, block, parent_state, prevotes, precommits):
        author = block.proposer
        prevote_count = dict(parent_state.prevote_count)
        precommit_count = dict(parent_state.precommit_count)
        coverage = dict(parent_state.coverage)
        max_precommit = parent_state.max_precommit
        prevoted = parent_state.prevoted_height
        final = parent_state.final_height
        newly_final: list[int] = []

        if prevotes:
            lo = block.height - len(prevotes) + 1
            old_spans = coverage.get(author, ())
            for s in range(lo, block.height + 1):
                if any(a <= s <= b for a, b in old_spans):
                    continue  # a lying header re-endorses heights; count once
                count = prevote_count.get(s, 0) + 1
                prevote_count[s] = count
                if s > prevoted and count >= self.threshold_at(block.parent, s):
                    prevoted = s
            coverage[author] = _merge(old_spans, lo, block.height)

        if precommits:
            max_precommit = dict(max_precommit)
            for pc in precommits:
                s = self.tree.height(pc.target)
                count = precommit_count.get(s, 0) + 1
                precommit_count[s] = count
                if s > final and count >= self.threshold_at(block.parent, s):
                    newly_final.append(s)
                    final = s
            max_precommit[author] = max(
                max_precommit.get(author, -1),
                max(self.tree.height(pc.target) for pc in precommits),
            )

        self._states[block.id] = _ChainState(
            prevote_count,
            precommit_count,
            coverage,
            max_precommit,
            prevoted,
            final,
            tuple(newly_final),
        )


def branch_key(block: Block) -> tuple[int, int]:
    """Fork-choice ranking of the branch ending at ``block``: deepest
    quorum-prevoted height without the tip's own votes, then length.
    Callers break full ties by arrival order."""
    if block.header is None:
        return (0, 0)
    return (block.header.prevoted_height, block.height)


# ----------------------------------------------------------------------
# Contradiction detection
# ----------------------------------------------------------------------

A_FIRST = "a-first"
B_FIRST = "b-first"
TIE = "tie"


@dataclass(frozen=True)
class Evidence:
    author: ProposerId
    block_a: BlockId  # created first under the stated orientation
    block_b: BlockId
    violated: str
    orientation: str  # "lexicographic" | "chain-position" | "tie"


def _triple(block: Block) -> tuple[int, int, int]:
    return (block.header.previous_height, block.header.prevoted_height, block.height)


def infer_order(a: Block, b: Block) -> str:
    """Which block an honest proposer must have created first: header
    triples grow lexicographically over one proposer's lifetime."""
    if a.proposer != b.proposer:
        raise DifferentAuthorsError(f"blocks by {a.proposer} and {b.proposer}")
    ta, tb = _triple(a), _triple(b)
    if ta == tb:
        return TIE
    return A_FIRST if ta < tb else B_FIRST


def check_ordered_pair(first: Block, second: Block, orientation: str) -> Optional[Evidence]:
    """The honesty conditions for a pair with known creation order."""
    fp, fv, fh = _triple(first)
    sp, sv, sh = _triple(second)

    def evidence(clause: str) -> Evidence:
        return Evidence(first.proposer, first.id, second.id, clause, orientation)

    if fp > sp:
        return evidence("previous-height-decreased")
    if fv > sv:
        return evidence("prevoted-height-decreased")
    if fh > sp:
        return evidence("height-above-later-previous")
    if fv == sv and fh >= sh:
        return evidence("no-growth-at-same-prevoted")
    return None


def check_contradicting(a: Block, b: Block) -> Optional[Evidence]:
    """Evidence that one proposer's pair of blocks cannot both be honest.

    The creation order is inferred lexicographically; a full header tie
    between distinct blocks is itself evidence, since either order would
    put the earlier block's height above the later skip height.
    """
    order = infer_order(a, b)
    if order == TIE:
        return Evidence(a.proposer, a.id, b.id, "order-tie", TIE)
    first, second = (a, b) if order == A_FIRST else (b, a)
    return check_ordered_pair(first, second, "lexicographic")


def check_successive_pairs(
    chain: Sequence[Block], author: ProposerId
) -> Optional[Evidence]:
    """Scan one chain for contradictions among ``author``'s blocks, checking
    only consecutive pairs.

    Within a single chain the creation order is structural (a block exists
    before its descendants), so pairs are oriented by position, never by
    header inference. Under that orientation a clean consecutive scan
    implies every pair is clean: each inequality chains transitively, and
    heights grow strictly along a branch.
    """
    own = [b for b in chain if b.proposer == author and isinstance(b.header, LiskHeader)]
    for first, second in zip(own, own[1:]):
        evidence = check_ordered_pair(first, second, "chain-position")
        if evidence is not None:
            return evidence
    return None
