"""Core vote types, weight accounting, protocol rules and fork choice.

Weights are exact rationals. Internally each proposer set is scaled to a
common integer denominator so that all threshold comparisons reduce to
integer arithmetic; no floating point is involved anywhere.

The tally keeps one immutable snapshot per block, extending its parent's
snapshot with the messages embedded in that block. Switching branches is
therefore a dictionary lookup, and two branches never contaminate each
other's counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import lcm
from typing import Iterable, Mapping, Optional, Sequence, Union

from .blocktree import Block, BlockId, BlockTree, GENESIS_ID, ProposerId
from .errors import InvalidWeightsError, UnknownBlockError

Weight = Fraction

TWO_THIRDS = Fraction(2, 3)


@dataclass(frozen=True)
class Prevote:
    target: BlockId
    context: BlockId
    author: ProposerId


@dataclass(frozen=True)
class Precommit:
    target: BlockId
    context: BlockId
    author: ProposerId


Vote = Union[Prevote, Precommit]


class ProposerSet:
    """A weighted set of proposers whose weights sum to exactly 1."""

    def __init__(self, weights: Mapping[ProposerId, Fraction]):
        if not weights:
            raise InvalidWeightsError("proposer set must not be empty")
        total = Fraction(0)
        for pid, w in weights.items():
            if not isinstance(w, Fraction):
                raise InvalidWeightsError(f"weight of {pid} must be a Fraction, got {type(w)}")
            if not (0 < w <= 1):
                raise InvalidWeightsError(f"weight of {pid} must lie in (0, 1], got {w}")
            total += w
        if total != 1:
            raise InvalidWeightsError(f"weights must sum to exactly 1, got {total}")
        self._weights = dict(weights)
        self.scale = lcm(*(w.denominator for w in weights.values()))
        self._units = {pid: int(w * self.scale) for pid, w in weights.items()}
        self._ids = frozenset(weights)

    @classmethod
    def uniform(cls, ids: Union[int, Iterable[ProposerId]]) -> "ProposerSet":
        members = list(range(ids)) if isinstance(ids, int) else list(ids)
        n = len(members)
        return cls({pid: Fraction(1, n) for pid in members})

    @property
    def ids(self) -> frozenset[ProposerId]:
        return self._ids

    def __len__(self) -> int:
        return len(self._weights)

    def __contains__(self, pid: ProposerId) -> bool:
        return pid in self._weights

    def weight(self, pid: ProposerId) -> Fraction:
        return self._weights[pid]

    def units(self, pid: ProposerId) -> int:
        return self._units[pid]

    def weights(self) -> dict[ProposerId, Fraction]:
        return dict(self._weights)

    def exceeds_two_thirds(self, units: int) -> bool:
        return 3 * units > 2 * self.scale

    def exceeds(self, units: int, threshold: Fraction) -> bool:
        return units * threshold.denominator > threshold.numerator * self.scale


class StaticWeights:
    """Weight resolver for a proposer set that never changes.

    The resolver interface lets the tally weigh each vote in the set that
    governs the target's height; with dynamic schedules a different
    implementation answers per height.
    """

    def __init__(self, proposer_set: ProposerSet):
        self.proposer_set = proposer_set

    def units(self, author: ProposerId, height: int) -> Optional[int]:
        if author not in self.proposer_set:
            return None
        return self.proposer_set.units(author)

    def scale(self, height: int) -> int:
        return self.proposer_set.scale

    def ids(self, height: int) -> frozenset[ProposerId]:
        return self.proposer_set.ids

    def has_two_thirds(self, units: int, height: int) -> bool:
        return self.proposer_set.exceeds_two_thirds(units)

    def exceeds(self, units: int, threshold: Fraction, height: int) -> bool:
        return self.proposer_set.exceeds(units, threshold)


class _Snapshot:
    """Cumulative vote state of one chain prefix."""

    __slots__ = ("pv_units", "pv_authors", "pc_units", "pc_authors", "quorum_height")

    def __init__(self, pv_units, pv_authors, pc_units, pc_authors, quorum_height):
        self.pv_units: dict[BlockId, int] = pv_units
        self.pv_authors: dict[BlockId, frozenset[ProposerId]] = pv_authors
        self.pc_units: dict[BlockId, int] = pc_units
        self.pc_authors: dict[BlockId, frozenset[ProposerId]] = pc_authors
        # Largest height of an on-branch block whose prevotes exceed 2/3.
        self.quorum_height: int = quorum_height


class ChainTally:
    """Chain-included vote weights, one snapshot per block.

    A proposer's weight counts at most once per (block, message kind);
    duplicate messages are idempotent. By convention the genesis block
    carries prevotes by every initial proposer, so its prevote weight is
    exactly 1.
    """

    def __init__(self, tree: BlockTree, weights: StaticWeights):
        self._tree = tree
        self._weights = weights
        root_authors = frozenset(weights.ids(0))
        self._snapshots: dict[BlockId, _Snapshot] = {
            GENESIS_ID: _Snapshot(
                pv_units={GENESIS_ID: weights.scale(0)},
                pv_authors={GENESIS_ID: root_authors},
                pc_units={},
                pc_authors={},
                quorum_height=0,
            )
        }

    def snapshot(self, tip: BlockId) -> _Snapshot:
        try:
            return self._snapshots[tip]
        except KeyError:
            raise UnknownBlockError(f"no tally snapshot for block {tip}") from None

    def extend(self, block: Block, messages: Iterable[Vote]) -> None:
        """Fold the messages embedded in ``block`` onto its parent snapshot."""
        parent = self.snapshot(block.parent)
        pv_units = dict(parent.pv_units)
        pv_authors = dict(parent.pv_authors)
        pc_units = dict(parent.pc_units)
        pc_authors = dict(parent.pc_authors)
        quorum_height = parent.quorum_height
        for msg in messages:
            target = msg.target
            try:
                t_height = self._tree.height(target)
            except UnknownBlockError:
                continue  # vote for a block this tree never saw; unaccountable here
            add = self._weights.units(msg.author, t_height)
            if add is None:
                continue  # author not active for that height; the vote carries no weight
            if isinstance(msg, Prevote):
                units, authors = pv_units, pv_authors
            else:
                units, authors = pc_units, pc_authors
            seen = authors.get(target, frozenset())
            if msg.author in seen:
                continue
            authors[target] = seen | {msg.author}
            new_units = units.get(target, 0) + add
            units[target] = new_units
            if (
                isinstance(msg, Prevote)
                and t_height > quorum_height
                and self._weights.has_two_thirds(new_units, t_height)
                and self._on_branch(target, block)
            ):
                quorum_height = t_height
        self._snapshots[block.id] = _Snapshot(
            pv_units, pv_authors, pc_units, pc_authors, quorum_height
        )

    def _on_branch(self, target: BlockId, block: Block) -> bool:
        return target == block.id or self._tree.is_ancestor(target, block.id)

    # ------------------------------------------------------------------
    # Queries, all relative to the chain ending at ``tip``
    # ------------------------------------------------------------------

    def prevote_units(self, tip: BlockId, target: BlockId) -> int:
        return self.snapshot(tip).pv_units.get(target, 0)

    def prevote_weight(self, tip: BlockId, target: BlockId) -> Fraction:
        h = self._tree.height(target)
        return Fraction(self.prevote_units(tip, target), self._weights.scale(h))

    def prevote_authors(self, tip: BlockId, target: BlockId) -> frozenset[ProposerId]:
        return self.snapshot(tip).pv_authors.get(target, frozenset())

    def has_prevote(self, tip: BlockId, target: BlockId, author: ProposerId) -> bool:
        return author in self.prevote_authors(tip, target)

    def precommit_units(self, tip: BlockId, target: BlockId) -> int:
        return self.snapshot(tip).pc_units.get(target, 0)

    def precommit_weight(self, tip: BlockId, target: BlockId) -> Fraction:
        h = self._tree.height(target)
        return Fraction(self.precommit_units(tip, target), self._weights.scale(h))

    def precommit_authors(self, tip: BlockId, target: BlockId) -> frozenset[ProposerId]:
        return self.snapshot(tip).pc_authors.get(target, frozenset())

    def has_prevote_quorum(self, tip: BlockId, target: BlockId) -> bool:
        h = self._tree.height(target)
        return self._weights.has_two_thirds(self.prevote_units(tip, target), h)

    def quorum_height(self, tip: BlockId) -> int:
        """Largest height of a block on this branch holding a >2/3 prevote quorum."""
        return self.snapshot(tip).quorum_height


@dataclass(frozen=True)
class RuleViolation:
    rule: str
    author: ProposerId
    detail: str
    votes: tuple[Vote, ...] = ()


def check_prevote_uniqueness(
    tree: BlockTree, history: Iterable[Prevote], new: Prevote
) -> Optional[RuleViolation]:
    """One prevote per height: two prevotes by the same author for distinct
    blocks must sit at distinct heights."""
    new_height = tree.height(new.target)
    for old in history:
        if old.author != new.author or old.target == new.target:
            continue
        if tree.height(old.target) == new_height:
            return RuleViolation(
                rule="prevote-uniqueness",
                author=new.author,
                detail=f"prevotes for distinct blocks {old.target} and {new.target} "
                f"at height {new_height}",
                votes=(old, new),
            )
    return None


def check_precommit_support(
    tree: BlockTree,
    tally: ChainTally,
    pc: Precommit,
    cast_prevotes: Iterable[Prevote] = (),
) -> Optional[RuleViolation]:
    """A precommit needs the author's own prevote for the target plus
    included prevotes exceeding 2/3 of the weight.

    The quorum must be included in the chain up to the context. The author's
    own prevote may instead be cast in the same batch (``cast_prevotes``):
    a message that compresses several votes covers its own precommits with
    the prevotes it simultaneously casts, which by construction are not yet
    included anywhere.
    """
    if pc.target == GENESIS_ID:
        return None  # genesis is prevoted by everyone by convention
    if pc.target != pc.context and not tree.is_ancestor(pc.target, pc.context):
        return RuleViolation(
            rule="precommit-support",
            author=pc.author,
            detail=f"target {pc.target} not on the chain up to context {pc.context}",
            votes=(pc,),
        )
    if not tally.has_prevote(pc.context, pc.target, pc.author) and not any(
        pv.target == pc.target and pv.author == pc.author for pv in cast_prevotes
    ):
        return RuleViolation(
            rule="precommit-support",
            author=pc.author,
            detail=f"own prevote for {pc.target} neither included up to "
            f"{pc.context} nor cast alongside",
            votes=(pc,),
        )
    if not tally.has_prevote_quorum(pc.context, pc.target):
        return RuleViolation(
            rule="precommit-support",
            author=pc.author,
            detail=f"prevote weight for {pc.target} does not exceed 2/3 up to {pc.context}",
            votes=(pc,),
        )
    return None


def check_switch_justification(
    tree: BlockTree,
    tally: ChainTally,
    precommit_history: Iterable[Precommit],
    new: Prevote,
) -> Optional[RuleViolation]:
    """After precommitting a block, prevoting higher on another branch is
    allowed only if that branch includes a >2/3-prevoted block at least as
    high as the precommitted one."""
    new_height = tree.height(new.target)
    justified_up_to = tally.quorum_height(new.context)
    for pc in precommit_history:
        if pc.author != new.author:
            continue
        pc_height = tree.height(pc.target)
        if pc_height >= new_height:
            continue
        if pc.target == new.target or tree.is_ancestor(pc.target, new.target):
            continue
        if justified_up_to >= pc_height:
            continue
        return RuleViolation(
            rule="switch-justification",
            author=new.author,
            detail=f"prevote for {new.target} at height {new_height} abandons "
            f"precommitted block {pc.target} at height {pc_height} without a "
            f"quorum at or above that height on the new branch",
            votes=(pc, new),
        )
    return None


class DecisionTracker:
    """Counts received precommits per target and finalizes past a threshold.

    Finalizing a block finalizes its ancestors. The tracker only records
    what crossed the threshold; whether the resulting set is consistent is
    the safety checker's business.
    """

    def __init__(self, tree: BlockTree, weights: StaticWeights, threshold: Fraction):
        if not Fraction(1, 3) < threshold <= 1:
            raise InvalidWeightsError(f"decision threshold must lie in (1/3, 1], got {threshold}")
        self._tree = tree
        self._weights = weights
        self.threshold = threshold
        self._units: dict[BlockId, int] = {}
        self._authors: dict[BlockId, set[ProposerId]] = {}
        self.decided: set[BlockId] = set()
        self.frontier: BlockId = GENESIS_ID

    @property
    def finalized_height(self) -> int:
        return self._tree.height(self.frontier)

    def add(self, pc: Precommit) -> list[BlockId]:
        """Count one received precommit; return targets newly finalized by it."""
        target = pc.target
        try:
            height = self._tree.height(target)
        except UnknownBlockError:
            return []
        add = self._weights.units(pc.author, height)
        if add is None:
            return []
        seen = self._authors.setdefault(target, set())
        if pc.author in seen:
            return []
        seen.add(pc.author)
        units = self._units.get(target, 0) + add
        self._units[target] = units
        if target in self.decided or not self._weights.exceeds(units, self.threshold, height):
            return []
        self.decided.add(target)
        if height > self.finalized_height:
            self.frontier = target
        return [target]

    def is_finalized(self, block_id: BlockId) -> bool:
        if block_id in self.decided:
            return True
        return any(
            block_id == d or self._tree.is_ancestor(block_id, d) for d in self.decided
        )


def fork_choice_longest_chain(
    tree: BlockTree, tally: ChainTally, *, exclude_tip: bool = False
) -> BlockId:
    """Longest chain among branches carrying the deepest prevote quorum.

    Pick the branch whose included prevotes give a >2/3-prevoted block of
    maximal height; among those, the longest; ties go to the branch whose
    tip arrived first, then to the lower block id. ``exclude_tip`` drops the
    tip's own embedded votes from its branch's quorum computation, which is
    how header-encoded chains are compared.
    """
    best: Optional[tuple[int, int, int, int]] = None
    best_tip: Optional[BlockId] = None
    for tip in tree.tips:
        source = tip
        if exclude_tip:
            parent = tree.block(tip).parent
            source = parent if parent is not None else tip
        key = (
            tally.quorum_height(source),
            tree.height(tip),
            -tree.arrival_index(tip),
            -tip,
        )
        if best is None or key > best:
            best = key
            best_tip = tip
    assert best_tip is not None
    return best_tip
