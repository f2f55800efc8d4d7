"""Block tree with ancestry, branch and conflict queries.

Every tree starts from an implicit genesis block (id 0, height 0). Block
objects are immutable and may be shared between trees; each tree keeps its
own arrival order, which fork choice uses to break ties in favour of the
branch received first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, TYPE_CHECKING

from .errors import (
    DuplicateBlockError,
    HeightMismatchError,
    UnknownBlockError,
    UnknownParentError,
)

if TYPE_CHECKING:  # pragma: no cover - import cycle guard
    from .liskbft import LiskHeader

BlockId = int
ProposerId = int

GENESIS_ID: BlockId = 0


@dataclass(frozen=True)
class Block:
    """One block. ``votes`` carries consensus messages embedded as payload."""

    id: BlockId
    parent: Optional[BlockId]
    height: int
    proposer: Optional[ProposerId] = None
    round_slot: int = 0
    header: Optional["LiskHeader"] = None
    votes: tuple = field(default=(), compare=False)


def genesis_block() -> Block:
    return Block(id=GENESIS_ID, parent=None, height=0)


class BlockTree:
    """A rooted tree of blocks owned by a single writer.

    Insertion validates linkage; queries never mutate. ``arrival_index``
    records the order in which this particular tree received each block.
    """

    def __init__(self) -> None:
        root = genesis_block()
        self._blocks: dict[BlockId, Block] = {GENESIS_ID: root}
        self._children: dict[BlockId, list[BlockId]] = {GENESIS_ID: []}
        self._arrival: dict[BlockId, int] = {GENESIS_ID: 0}
        self._tips: set[BlockId] = {GENESIS_ID}
        self._next_arrival = 1
        self._max_height = 0

    # ------------------------------------------------------------------
    # Mutation
    # ------------------------------------------------------------------

    def insert(self, block: Block) -> None:
        if block.id in self._blocks:
            raise DuplicateBlockError(f"block id {block.id} already in tree")
        if block.parent is None or block.parent not in self._blocks:
            raise UnknownParentError(f"parent {block.parent} of block {block.id} unknown")
        parent = self._blocks[block.parent]
        if block.height != parent.height + 1:
            raise HeightMismatchError(
                f"block {block.id} has height {block.height}, expected {parent.height + 1}"
            )
        self._blocks[block.id] = block
        self._children[block.id] = []
        self._children[block.parent].append(block.id)
        self._arrival[block.id] = self._next_arrival
        self._next_arrival += 1
        self._tips.discard(block.parent)
        self._tips.add(block.id)
        if block.height > self._max_height:
            self._max_height = block.height

    # ------------------------------------------------------------------
    # Queries
    # ------------------------------------------------------------------

    def __contains__(self, block_id: BlockId) -> bool:
        return block_id in self._blocks

    def __len__(self) -> int:
        return len(self._blocks)

    def block(self, block_id: BlockId) -> Block:
        try:
            return self._blocks[block_id]
        except KeyError:
            raise UnknownBlockError(f"block {block_id} not in tree") from None

    def height(self, block_id: BlockId) -> int:
        return self.block(block_id).height

    def children(self, block_id: BlockId) -> tuple[BlockId, ...]:
        self.block(block_id)
        return tuple(self._children[block_id])

    def arrival_index(self, block_id: BlockId) -> int:
        self.block(block_id)
        return self._arrival[block_id]

    @property
    def tips(self) -> tuple[BlockId, ...]:
        return tuple(sorted(self._tips))

    @property
    def max_height(self) -> int:
        return self._max_height

    def blocks(self) -> Iterator[Block]:
        return iter(self._blocks.values())

    def is_ancestor(self, ancestor: BlockId, descendant: BlockId) -> bool:
        """True iff ``ancestor`` lies strictly below ``descendant`` on its path to genesis."""
        a = self.block(ancestor)
        cur = self.block(descendant)
        if a.id == cur.id:
            return False
        while cur.height > a.height:
            cur = self._blocks[cur.parent]
        return cur.id == a.id

    def are_conflicting(self, first: BlockId, second: BlockId) -> bool:
        """True iff neither block is an ancestor of (or equal to) the other."""
        if first == second:
            return False
        return not (self.is_ancestor(first, second) or self.is_ancestor(second, first))

    def branch_to(self, tip: BlockId) -> list[Block]:
        """The full chain from genesis to ``tip``, inclusive, in height order."""
        out = [self.block(tip)]
        while out[-1].parent is not None:
            out.append(self._blocks[out[-1].parent])
        out.reverse()
        return out

    def block_at_height(self, tip: BlockId, height: int) -> Block:
        """The ancestor of ``tip`` (or ``tip`` itself) at ``height``."""
        cur = self.block(tip)
        if height > cur.height or height < 0:
            raise UnknownBlockError(f"no block at height {height} below {tip}")
        while cur.height > height:
            cur = self._blocks[cur.parent]
        return cur
