"""Approve messages: one message standing in for a batch of votes.

An approve names the chain it endorses (``context``), the greatest height
it does *not* endorse (``last_unapproved_height``) and the deepest
quorum-prevoted height of that chain (``prevoted_height``). Expansion turns
it back into the prevotes and precommits it implies; the monotonicity rule
is the pairwise condition under which those implied votes respect the
protocol rules.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .blocktree import BlockId, BlockTree, GENESIS_ID, ProposerId
from .consensus import ChainTally, Precommit, Prevote
from .errors import InvalidApproveError


@dataclass(frozen=True)
class Approve:
    last_unapproved_height: int
    prevoted_height: int
    context: BlockId
    author: ProposerId


@dataclass(frozen=True)
class ApproveIssue:
    reason: str
    message: Approve


@dataclass(frozen=True)
class MonotonicityViolation:
    clause: str  # "context-above-later-skip" | "prevoted-height-decreased"
    author: ProposerId
    earlier: Approve
    later: Approve


def validate_approve(tree: BlockTree, tally: ChainTally, msg: Approve) -> Optional[ApproveIssue]:
    """Structural validity: both heights below the context, and the prevoted
    height must match the value derivable from the chain (genesis counts as
    prevoted by everyone, so 0 is always attainable)."""
    context_height = tree.height(msg.context)
    if msg.last_unapproved_height >= context_height:
        return ApproveIssue(
            f"last unapproved height {msg.last_unapproved_height} not below "
            f"context height {context_height}",
            msg,
        )
    if msg.last_unapproved_height < 0 or msg.prevoted_height < 0:
        return ApproveIssue("heights must be non-negative", msg)
    if msg.prevoted_height >= context_height:
        return ApproveIssue(
            f"prevoted height {msg.prevoted_height} not below context height {context_height}",
            msg,
        )
    derived = tally.quorum_height(msg.context)
    if msg.prevoted_height != derived:
        return ApproveIssue(
            f"prevoted height {msg.prevoted_height} does not match the derivable value {derived}",
            msg,
        )
    return None


def check_monotonicity(
    tree: BlockTree, history: Sequence[Approve], new: Approve
) -> Optional[MonotonicityViolation]:
    """For any two distinct approves by one author, ordered by their skip
    heights, the earlier context must fit below the later skip height and
    the prevoted height must not decrease."""
    for old in history:
        if old.author != new.author or old == new:
            continue
        violation = _check_pair(tree, old, new) or _check_pair(tree, new, old)
        if violation is not None:
            return violation
    return None


def _check_pair(tree: BlockTree, first: Approve, second: Approve) -> Optional[MonotonicityViolation]:
    """Check the ordered pair with first.k <= second.k; None when not applicable."""
    if first.last_unapproved_height > second.last_unapproved_height:
        return None
    if tree.height(first.context) > second.last_unapproved_height:
        return MonotonicityViolation("context-above-later-skip", first.author, first, second)
    if first.prevoted_height > second.prevoted_height:
        return MonotonicityViolation("prevoted-height-decreased", first.author, first, second)
    return None


def check_history_monotonic(
    tree: BlockTree, history: Sequence[Approve]
) -> Optional[MonotonicityViolation]:
    """All-pairs scan of one author's full approve history."""
    for i, msg in enumerate(history):
        violation = check_monotonicity(tree, history[:i], msg)
        if violation is not None:
            return violation
    return None


def expand_approve(
    tree: BlockTree, tally: ChainTally, msg: Approve
) -> tuple[tuple[Prevote, ...], tuple[Precommit, ...]]:
    """The votes an approve implies on the chain up to its context.

    Prevotes cover every block above the skip height. Precommits start just
    above both the author's deepest precommit already included in the chain
    and the deepest height where the chain lacks a prevote by the author,
    and they cover exactly the already-quorum-prevoted blocks, so the fresh
    prevotes from this very message never count towards them. Genesis needs
    no votes and is never a precommit target.
    """
    issue = validate_approve(tree, tally, msg)
    if issue is not None:
        raise InvalidApproveError(issue.reason)
    branch = tree.branch_to(msg.context)
    k = msg.last_unapproved_height
    r = tree.height(msg.context)
    prevotes = tuple(
        Prevote(branch[s].id, msg.context, msg.author) for s in range(k + 1, r + 1)
    )

    j1 = -1
    for s in range(r, -1, -1):
        if msg.author in tally.precommit_authors(msg.context, branch[s].id):
            j1 = s
            break
    j2 = -1
    for s in range(k, 0, -1):  # height 0 counts as prevoted by everyone
        if msg.author not in tally.prevote_authors(msg.context, branch[s].id):
            j2 = s
            break
    j = max(j1, j2) + 1

    precommits = tuple(
        Precommit(branch[s].id, msg.context, msg.author)
        for s in range(max(j, 1), r + 1)
        if tally.has_prevote_quorum(msg.context, branch[s].id)
    )
    return prevotes, precommits


def make_approve(
    tree: BlockTree,
    tally: ChainTally,
    author: ProposerId,
    context: BlockId,
    previous: Optional[Approve],
) -> Approve:
    """The approve an honest author issues next on the given chain.

    The skip height continues exactly where the previous context ended, so
    consecutive approves by one author satisfy monotonicity by construction
    whenever the author follows fork choice.
    """
    k = 0 if previous is None else tree.height(previous.context)
    context_height = tree.height(context)
    if k >= context_height:
        raise InvalidApproveError(
            f"context height {context_height} does not extend past previous endorsement {k}"
        )
    return Approve(
        last_unapproved_height=k,
        prevoted_height=tally.quorum_height(context),
        context=context,
        author=author,
    )
