"""Shared builders and independent oracles used across the test suite."""

from __future__ import annotations

import random
from fractions import Fraction

from bftsim.blocktree import Block, BlockTree, GENESIS_ID


def make_block(block_id, parent, height, proposer=None, header=None, votes=(), slot=0):
    return Block(
        id=block_id,
        parent=parent,
        height=height,
        proposer=proposer,
        round_slot=slot,
        header=header,
        votes=tuple(votes),
    )


def grow_chain(tree: BlockTree, length: int, start_id: int = 1, parent: int = GENESIS_ID,
               proposer=None) -> list[Block]:
    """Append a linear chain of ``length`` blocks under ``parent``."""
    blocks = []
    parent_block = tree.block(parent)
    for i in range(length):
        blk = make_block(start_id + i, parent_block.id, parent_block.height + 1, proposer)
        tree.insert(blk)
        blocks.append(blk)
        parent_block = blk
    return blocks


def random_tree(rng: random.Random, size: int) -> BlockTree:
    """A random tree of ``size`` non-genesis blocks; parents chosen uniformly."""
    tree = BlockTree()
    ids = [GENESIS_ID]
    for i in range(1, size + 1):
        parent = rng.choice(ids)
        blk = make_block(i, parent, tree.height(parent) + 1)
        tree.insert(blk)
        ids.append(i)
    return tree


# ----------------------------------------------------------------------
# Independent oracles (deliberately naive implementations)
# ----------------------------------------------------------------------

def path_to_genesis(tree: BlockTree, block_id) -> list:
    """Path from ``block_id`` down to genesis via raw parent hops."""
    path = [block_id]
    while True:
        parent = tree.block(path[-1]).parent
        if parent is None:
            return path
        path.append(parent)


def conflicting_by_paths(tree: BlockTree, a, b) -> bool:
    """Conflict test by full path enumeration."""
    if a == b:
        return False
    return a not in path_to_genesis(tree, b) and b not in path_to_genesis(tree, a)


def recount_branch(tree: BlockTree, tip, messages_by_block, weights):
    """Brute-force recount of chain-included votes along the branch to ``tip``.

    Returns (prevote_weights, precommit_weights, prevote_authors,
    precommit_authors, quorum_height) computed with plain Fractions and
    per-target author lists, sharing no code with the incremental tally.
    """
    pv_w: dict = {GENESIS_ID: Fraction(1)}
    pc_w: dict = {}
    pv_a: dict = {GENESIS_ID: set(weights.ids(0))}
    pc_a: dict = {}
    branch = tree.branch_to(tip)
    on_branch = {b.id for b in branch}
    quorum_height = 0
    for blk in branch:
        for msg in messages_by_block.get(blk.id, ()):
            kind = type(msg).__name__
            try:
                t_height = tree.height(msg.target)
            except Exception:
                continue
            units = weights.units(msg.author, t_height)
            if units is None:
                continue
            w = Fraction(units, weights.scale(t_height))
            authors = pv_a if kind == "Prevote" else pc_a
            totals = pv_w if kind == "Prevote" else pc_w
            if msg.author in authors.get(msg.target, set()):
                continue
            authors.setdefault(msg.target, set()).add(msg.author)
            totals[msg.target] = totals.get(msg.target, Fraction(0)) + w
        for target, w in pv_w.items():
            if target in on_branch and w > Fraction(2, 3):
                quorum_height = max(quorum_height, tree.height(target))
    return pv_w, pc_w, pv_a, pc_a, quorum_height
