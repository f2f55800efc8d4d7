"""Rounds, scheduled proposer-set changes and slot assignment.

Blocks are grouped into rounds of a fixed number of heights. The set
active in a round is frozen from the chain content at the last block of
an earlier round (the activation delay), so different branches can
legitimately disagree about who proposes at the same height. Changes are
scripted as events recorded at a chain height; weight changes apply the
join/leave encoding of a synthetic proposer carrying the weight delta.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .blocktree import BlockId, BlockTree, ProposerId
from .consensus import ProposerSet
from .errors import InvalidScenarioError

CHANGE_KINDS = ("join", "leave", "weight-change")


@dataclass(frozen=True)
class ChangeEvent:
    height: int  # chain position where the change is recorded
    kind: str
    proposer: ProposerId
    weight: Optional[Fraction] = None  # for join / weight-change
    # When set, the event only exists on branches whose block at `height`
    # was proposed by this id; None means any block at that height records it.
    carrier: Optional[ProposerId] = None

    def __post_init__(self):
        if self.kind not in CHANGE_KINDS:
            raise InvalidScenarioError(f"unknown change kind {self.kind!r}")
        if self.kind in ("join", "weight-change") and self.weight is None:
            raise InvalidScenarioError(f"{self.kind} event needs a weight")
        if self.height < 1:
            raise InvalidScenarioError("changes cannot be recorded at genesis")


class RoundSchedule:
    """Per-branch round → proposer-set resolution plus slot assignment.

    Each round's slot order is an independently seeded shuffle of the
    active members, overridable per round from the scenario so that
    adversarial orderings can be replayed.
    """

    def __init__(
        self,
        tree: BlockTree,
        initial: ProposerSet,
        *,
        blocks_per_round: int = 1,
        activation_delay: int = 0,
        changes: Sequence[ChangeEvent] = (),
        seed: int = 0,
        slot_overrides: Optional[dict[int, Sequence[ProposerId]]] = None,
    ):
        if blocks_per_round < 1:
            raise InvalidScenarioError("rounds need at least one block")
        if activation_delay < 0:
            raise InvalidScenarioError("activation delay cannot be negative")
        self._tree = tree
        self.initial = initial
        self.blocks_per_round = blocks_per_round
        self.activation_delay = activation_delay
        self.changes = tuple(sorted(changes, key=lambda e: e.height))
        self.seed = seed
        self._slot_overrides = {r: tuple(v) for r, v in (slot_overrides or {}).items()}
        self._sets: dict[tuple[int, BlockId], ProposerSet] = {}
        self._orders: dict[tuple[int, frozenset[ProposerId]], tuple[ProposerId, ...]] = {}
        self._activity: dict[tuple[ProposerId, int, Optional[BlockId]], int] = {}

    # ------------------------------------------------------------------
    # Round geometry
    # ------------------------------------------------------------------

    def round_of(self, height: int) -> int:
        return height // self.blocks_per_round

    def first_height(self, round_: int) -> int:
        return round_ * self.blocks_per_round

    def last_height(self, round_: int) -> int:
        return round_ * self.blocks_per_round + self.blocks_per_round - 1

    def cutoff_height(self, round_: int) -> Optional[int]:
        """Height whose block freezes the set for ``round_``; None while the
        genesis-declared set still applies."""
        source_round = round_ - self.activation_delay - 1
        if source_round < 0:
            return None
        return self.last_height(source_round)

    # ------------------------------------------------------------------
    # Active sets
    # ------------------------------------------------------------------

    def active_set(self, tip: BlockId, round_: int) -> ProposerSet:
        """The proposer set of ``round_`` on the branch ending at ``tip``.

        Determined entirely by the chain up to the cutoff block, so any two
        tips sharing that prefix agree. A branch too short to reach the
        cutoff keeps the genesis-declared set.
        """
        if not self.changes:
            return self.initial
        cutoff = self.cutoff_height(round_)
        if cutoff is None or self._tree.height(tip) < cutoff:
            return self.initial
        anchor = self._tree.block_at_height(tip, cutoff)
        key = (round_, anchor.id)
        cached = self._sets.get(key)
        if cached is None:
            cached = self._materialize(anchor.id, cutoff)
            self._sets[key] = cached
        return cached

    def _materialize(self, anchor: BlockId, cutoff: int) -> ProposerSet:
        members = self.initial.weights()
        for event in self.changes:
            if event.height > cutoff:
                break
            if event.carrier is not None:
                recorded_in = self._tree.block_at_height(anchor, event.height)
                if recorded_in.proposer != event.carrier:
                    continue
            self._apply(members, event)
        return ProposerSet(members)

    @staticmethod
    def _apply(members: dict[ProposerId, Fraction], event: ChangeEvent) -> None:
        if event.kind == "join":
            if event.proposer in members:
                raise InvalidScenarioError(f"{event.proposer} joins but is already active")
            members[event.proposer] = event.weight
        elif event.kind == "leave":
            if event.proposer not in members:
                raise InvalidScenarioError(f"{event.proposer} leaves but is not active")
            del members[event.proposer]
        else:
            if event.proposer not in members:
                raise InvalidScenarioError(
                    f"weight-change of {event.proposer} who is not active"
                )
            members[event.proposer] = event.weight

    def is_active(self, tip: BlockId, author: ProposerId, round_: int) -> bool:
        return author in self.active_set(tip, round_)

    def activity_start(self, tip: BlockId, author: ProposerId, round_: int) -> int:
        """First height of the earliest round since which ``author`` has been
        active without interruption on this branch, assuming it is active in
        ``round_`` itself."""
        if not self.changes:
            return 0
        rounds = []
        r = round_
        while r > 0:
            cutoff = self.cutoff_height(r - 1)
            anchor = None
            if cutoff is not None and self._tree.height(tip) >= cutoff:
                anchor = self._tree.block_at_height(tip, cutoff).id
            key = (author, r - 1, anchor)
            if key in self._activity:
                start = self._activity[key]
                break
            if not self.is_active(tip, author, r - 1):
                start = self.first_height(r)
                break
            rounds.append(key)
            r -= 1
        else:
            start = 0
        for key in rounds:
            self._activity[key] = start
        return start

    # ------------------------------------------------------------------
    # Slot assignment
    # ------------------------------------------------------------------

    def slot_order(self, round_: int, active: Optional[ProposerSet] = None) -> tuple[ProposerId, ...]:
        override = self._slot_overrides.get(round_)
        if override is not None:
            return override
        members = frozenset((active or self.initial).ids)
        key = (round_, members)
        order = self._orders.get(key)
        if order is None:
            shuffled = sorted(members)
            random.Random(f"slots#{self.seed}#{round_}").shuffle(shuffled)
            order = tuple(shuffled)
            self._orders[key] = order
        return order

    def slot_proposer(
        self, round_: int, slot: int, active: Optional[ProposerSet] = None
    ) -> ProposerId:
        order = self.slot_order(round_, active)
        return order[slot % len(order)]


# ----------------------------------------------------------------------
# Overlap and turnover measures used by the safety preconditions
# ----------------------------------------------------------------------

def honest_overlap(sets: Sequence[ProposerSet], honest: Iterable[ProposerId]) -> Fraction:
    """Weight of the honest proposers common to all sets.

    When weights differ between sets, each common member counts with its
    smallest weight anywhere, which is the conservative reading under the
    synthetic-proposer encoding of weight changes.
    """
    if not sets:
        raise InvalidScenarioError("overlap of no sets is undefined")
    common = frozenset(honest)
    for pset in sets:
        common &= pset.ids
    return sum(
        (min(pset.weight(pid) for pset in sets) for pid in common), Fraction(0)
    )


def honest_turnover(
    before: ProposerSet, after: ProposerSet, honest: Iterable[ProposerId]
) -> Fraction:
    """Honest weight of ``before`` that ``after`` no longer carries.

    Members who left count in full; members whose weight shrank count with
    the difference, matching the synthetic-proposer view where the delta is
    a departing proposer of its own.
    """
    honest = frozenset(honest)
    gone = Fraction(0)
    for pid in before.ids & honest:
        w = before.weight(pid)
        if pid not in after:
            gone += w
        elif after.weight(pid) < w:
            gone += w - after.weight(pid)
    return gone


def check_turnover_bound(
    tree: BlockTree,
    schedule: RoundSchedule,
    honest: Iterable[ProposerId],
    alpha: Fraction,
    finalization_links: Iterable[tuple[BlockId, BlockId]],
) -> Optional[str]:
    """Validate that honest membership drifts by less than ``alpha`` between
    a block and the point where one of its descendants first gathers the
    finalizing precommits.

    ``finalization_links`` pairs each ancestor with that first descendant;
    extracting the pairs from a run is the caller's business. Returns a
    description of the first broken bound, or None.
    """
    honest = frozenset(honest)
    for ancestor, trigger in finalization_links:
        if ancestor != trigger and not tree.is_ancestor(ancestor, trigger):
            raise InvalidScenarioError(
                f"link {ancestor}->{trigger} does not follow one branch"
            )
        base = schedule.active_set(ancestor, schedule.round_of(tree.height(ancestor)))
        walk = trigger
        while True:
            current = schedule.active_set(walk, schedule.round_of(tree.height(walk)))
            drift = honest_turnover(base, current, honest)
            if drift >= alpha:
                return (
                    f"honest turnover {drift} between block {ancestor} and "
                    f"block {walk} reaches the bound {alpha}"
                )
            if walk == ancestor:
                break
            walk = tree.block(walk).parent
    return None
