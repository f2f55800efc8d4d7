"""Verdict oracles over saved traces.

A trace is evidence, not state: every verdict is recomputed from the block,
finalize and marker records alone, so re-checking a saved log gives the
same answer as the live run. The safety scan keeps the invariant that all
finalized blocks so far lie on one chain — each new finalization is either
an ancestor or a descendant of the deepest one seen, so comparing against
that single frontier is enough to catch the first conflict.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .approvals import Approve, check_monotonicity, expand_approve
from .blocktree import Block, BlockId, BlockTree, GENESIS_ID, ProposerId
from .consensus import (
    ChainTally,
    Precommit,
    Prevote,
    StaticWeights,
    check_precommit_support,
    check_prevote_uniqueness,
    check_switch_justification,
)
from .errors import InsufficientTraceError
from .liskbft import (
    HeaderChain,
    LiskHeader,
    check_contradicting,
    check_successive_pairs,
)
from .scenario import LISK, Scenario, format_fraction
from .simnet import Trace


# ----------------------------------------------------------------------
# Rebuilding worlds from traces
# ----------------------------------------------------------------------


@dataclass
class LiskRebuild:
    scenario: Scenario
    chain: HeaderChain
    blocks: list[Block]

    @property
    def tree(self) -> BlockTree:
        return self.chain.tree


@dataclass
class GeneralRebuild:
    scenario: Scenario
    tree: BlockTree
    tally: ChainTally
    weights: StaticWeights
    blocks: list[Block]
    # per block id: (approve, prevotes, precommits) as originally expanded
    votes: dict[BlockId, tuple]


def rebuild(trace: Trace) -> Union[LiskRebuild, GeneralRebuild]:
    """Reconstruct the block tree (and vote bookkeeping) a trace describes.

    Block records replay through the same validation as the live run, so a
    tampered trace fails loudly instead of producing a quiet verdict.
    """
    scenario = Scenario.from_dict(trace.meta()["scenario"])
    if scenario.mode == LISK:
        chain = HeaderChain(
            scenario.config,
            changes=scenario.changes,
            seed=scenario.seed,
            slot_overrides=scenario.slot_overrides,
        )
        blocks = []
        for rec in trace.blocks():
            block = Block(
                rec["id"],
                rec["parent"],
                rec["height"],
                proposer=rec["proposer"],
                round_slot=rec["slot"],
                header=LiskHeader(*rec["header"]),
            )
            chain.add_block(block)
            blocks.append(block)
        return LiskRebuild(scenario, chain, blocks)

    tree = BlockTree()
    weights = StaticWeights(scenario.proposer_set())
    tally = ChainTally(tree, weights)
    blocks = []
    votes: dict[BlockId, tuple] = {}
    for rec in trace.blocks():
        approve = None
        prevotes: tuple = ()
        precommits: tuple = ()
        if rec["approve"] is not None:
            k, prevoted = rec["approve"]
            approve = Approve(k, prevoted, context=rec["parent"], author=rec["proposer"])
            prevotes, precommits = expand_approve(tree, tally, approve)
        block = Block(
            rec["id"],
            rec["parent"],
            rec["height"],
            proposer=rec["proposer"],
            round_slot=rec["slot"],
            votes=prevotes + precommits,
        )
        tree.insert(block)
        tally.extend(block, block.votes)
        blocks.append(block)
        votes[block.id] = (approve, prevotes, precommits)
    return GeneralRebuild(scenario, tree, tally, weights, blocks, votes)


def quorum_note(scenario: Scenario) -> str:
    """The decision rule in force, stated on every report."""
    if scenario.mode == LISK:
        return (
            f"quorum {scenario.config.threshold} of {scenario.proposer_count} "
            f"(least count strictly above two thirds)"
        )
    parts = [f"default {format_fraction(scenario.default_threshold)}"]
    parts += [
        f"proposer {pid}: {format_fraction(tau)}"
        for pid, tau in sorted(scenario.thresholds.items())
    ]
    return "decision thresholds " + ", ".join(parts) + " of total weight"


# ----------------------------------------------------------------------
# Safety
# ----------------------------------------------------------------------


@dataclass
class SafetyReport:
    passed: bool
    quorum_rule: str
    # on failure, the earliest conflicting pair in finalization order
    witness: Optional[dict] = None

    def lines(self) -> list[str]:
        if self.passed:
            return ["safety: pass"]
        w = self.witness
        return [
            "safety: FAIL — conflicting finalizations",
            f"  block {w['block_a']} height {w['height_a']} "
            f"(t={w['time_a']}, finalized by {w['deciders_a']})",
            f"  block {w['block_b']} height {w['height_b']} "
            f"(t={w['time_b']}, finalized by {w['deciders_b']})",
        ]


def check_safety(trace: Trace) -> SafetyReport:
    """Fail iff two finalized blocks lie on different branches."""
    world = rebuild(trace)
    tree = world.tree
    note = quorum_note(world.scenario)
    finals = trace.finalizations()
    seen: list[dict] = []
    deepest: Optional[dict] = None
    for rec in finals:
        if (
            deepest is not None
            and rec["block"] != deepest["block"]
            and tree.are_conflicting(deepest["block"], rec["block"])
        ):
            # everything before this record is on one chain, so the earliest
            # counterpart is the first record conflicting with the newcomer
            first = next(
                p for p in seen if tree.are_conflicting(p["block"], rec["block"])
            )
            witness = {
                "block_a": first["block"],
                "height_a": first["height"],
                "time_a": first["time"],
                "deciders_a": sorted(
                    {f["proposer"] for f in finals if f["block"] == first["block"]}
                ),
                "block_b": rec["block"],
                "height_b": rec["height"],
                "time_b": rec["time"],
                "deciders_b": sorted(
                    {f["proposer"] for f in finals if f["block"] == rec["block"]}
                ),
            }
            return SafetyReport(False, note, witness)
        seen.append(rec)
        if deepest is None or rec["height"] > deepest["height"]:
            deepest = rec
    return SafetyReport(True, note)


# ----------------------------------------------------------------------
# Liveness
# ----------------------------------------------------------------------


@dataclass
class LivenessReport:
    passed: bool
    quorum_rule: str
    target_height: int
    deadline_blocks: int
    deadline_time: int
    # honest proposers still short of the target at the deadline, with the
    # deepest height each one did finalize
    laggards: dict[ProposerId, int] = field(default_factory=dict)
    earliest_unfinalized: Optional[int] = None

    def lines(self) -> list[str]:
        if self.passed:
            return [
                f"liveness: pass (height {self.target_height} finalized "
                f"everywhere within {self.deadline_blocks} blocks)"
            ]
        return [
            "liveness: FAIL — finalization missed the deadline",
            f"  earliest unfinalized height {self.earliest_unfinalized} "
            f"at deadline t={self.deadline_time}",
            f"  laggards (proposer: deepest finalized) {self.laggards}",
        ]


def check_liveness(
    trace: Trace, target_height: int, deadline_blocks: int = 302
) -> LivenessReport:
    """Every honest proposer must finalize the target height within
    ``deadline_blocks`` blocks created after the first block above it.

    Blocks created before stabilization do not start the countdown. Raises
    :class:`InsufficientTraceError` when the trace ends before the deadline,
    since a short log proves nothing either way.
    """
    scenario = Scenario.from_dict(trace.meta()["scenario"])
    note = quorum_note(scenario)
    gst = scenario.clock.gst
    blocks = trace.blocks()

    anchor = None
    for i, rec in enumerate(blocks):
        if rec["height"] > target_height and rec["time"] >= gst:
            anchor = i
            break
    if anchor is None:
        raise InsufficientTraceError(
            f"no block above height {target_height} after stabilization"
        )
    following = blocks[anchor + 1 :]
    if len(following) < deadline_blocks:
        raise InsufficientTraceError(
            f"only {len(following)} blocks follow the first one above height "
            f"{target_height}; need {deadline_blocks} to judge the deadline"
        )
    deadline_time = following[deadline_blocks - 1]["time"]

    best: dict[ProposerId, int] = {}
    for f in trace.finalizations():
        if f["time"] <= deadline_time:
            best[f["proposer"]] = max(best.get(f["proposer"], 0), f["height"])
    laggards = {
        pid: best.get(pid, 0)
        for pid in sorted(scenario.honest_ids())
        if best.get(pid, 0) < target_height
    }
    if not laggards:
        return LivenessReport(True, note, target_height, deadline_blocks, deadline_time)
    return LivenessReport(
        False,
        note,
        target_height,
        deadline_blocks,
        deadline_time,
        laggards,
        earliest_unfinalized=min(laggards.values()) + 1,
    )


# ----------------------------------------------------------------------
# Accountability
# ----------------------------------------------------------------------


@dataclass
class AccountabilityReport:
    passed: bool
    quorum_rule: str
    flagged: frozenset[ProposerId]
    scripted: frozenset[ProposerId]
    evidence: list[dict] = field(default_factory=list)

    @property
    def false_accusations(self) -> frozenset[ProposerId]:
        return self.flagged - self.scripted

    @property
    def missed(self) -> frozenset[ProposerId]:
        return self.scripted - self.flagged

    def lines(self) -> list[str]:
        head = "accountability: pass" if self.passed else "accountability: FAIL"
        out = [
            f"{head} ({len(self.evidence)} evidence records, "
            f"flagged {sorted(self.flagged)})"
        ]
        if self.false_accusations:
            out.append(f"  falsely accused: {sorted(self.false_accusations)}")
        if self.missed:
            out.append(f"  undetected: {sorted(self.missed)}")
        return out


def _audit_lisk(world: LiskRebuild) -> list[dict]:
    """Scan all of one author's blocks pairwise, then each branch for
    position-ordered contradictions. Honest proposers never trip either:
    their header triples grow with the fork choice they follow."""
    evidence = []
    by_author: dict[ProposerId, list[Block]] = {}
    for block in world.blocks:
        by_author.setdefault(block.proposer, []).append(block)

    for author, blocks in sorted(by_author.items()):
        for i, first in enumerate(blocks):
            for second in blocks[i + 1 :]:
                ev = check_contradicting(first, second)
                if ev is not None:
                    evidence.append(
                        {
                            "author": author,
                            "rule": ev.violated,
                            "detail": f"blocks {ev.block_a} and {ev.block_b} "
                            f"({ev.orientation} order)",
                        }
                    )

    tree = world.tree
    for tip in tree.tips:
        branch = tree.branch_to(tip)
        for author in sorted({b.proposer for b in branch if b.proposer is not None}):
            ev = check_successive_pairs(branch, author)
            if ev is not None:
                evidence.append(
                    {
                        "author": author,
                        "rule": ev.violated,
                        "detail": f"blocks {ev.block_a} and {ev.block_b} "
                        f"on one branch ({ev.orientation} order)",
                    }
                )
    return evidence


def _audit_general(world: GeneralRebuild) -> list[dict]:
    """Replay every author's messages in creation order against the three
    vote rules and approve monotonicity. Tally snapshots are immutable per
    block, so querying them after the full rebuild sees exactly the state
    each message was judged against when cast."""
    evidence = []
    tree, tally = world.tree, world.tally
    approves: dict[ProposerId, list[Approve]] = {}
    # prevote history bucketed by (author, target height): rule I only ever
    # compares same-author same-height pairs
    prevotes_at: dict[tuple[ProposerId, int], list[Prevote]] = {}
    precommits: dict[ProposerId, list[Precommit]] = {}

    def note(violation):
        evidence.append(
            {
                "author": violation.author,
                "rule": getattr(violation, "rule", None) or violation.clause,
                "detail": getattr(violation, "detail", "approve pair"),
            }
        )

    for block in world.blocks:
        approve, pvs, pcs = world.votes[block.id]
        if approve is None:
            continue
        author = block.proposer
        hit = check_monotonicity(tree, approves.get(author, []), approve)
        if hit is not None:
            note(hit)
        for pv in pvs:
            height = tree.height(pv.target)
            hit = check_prevote_uniqueness(
                tree, prevotes_at.get((author, height), []), pv
            )
            if hit is not None:
                note(hit)
            hit = check_switch_justification(
                tree, tally, precommits.get(author, []), pv
            )
            if hit is not None:
                note(hit)
            prevotes_at.setdefault((author, height), []).append(pv)
        for pc in pcs:
            hit = check_precommit_support(tree, tally, pc, cast_prevotes=pvs)
            if hit is not None:
                note(hit)
            precommits.setdefault(author, []).append(pc)
        approves.setdefault(author, []).append(approve)
    return evidence


def check_accountability(trace: Trace) -> AccountabilityReport:
    """Audit every message in the trace; the flagged authors must be exactly
    those whose scripted misbehavior left a marker, with nobody honest
    accused and nobody scripted missed."""
    world = rebuild(trace)
    note = quorum_note(world.scenario)
    scripted = frozenset(m["author"] for m in trace.markers())
    if isinstance(world, LiskRebuild):
        evidence = _audit_lisk(world)
    else:
        evidence = _audit_general(world)
    flagged = frozenset(e["author"] for e in evidence)
    return AccountabilityReport(flagged == scripted, note, flagged, scripted, evidence)


# ----------------------------------------------------------------------
# Tally recount: same trace, none of the incremental bookkeeping
# ----------------------------------------------------------------------


@dataclass
class TallyReport:
    passed: bool
    blocks_checked: int
    mismatches: list[str] = field(default_factory=list)

    def lines(self) -> list[str]:
        if self.passed:
            return [f"tally recount: pass ({self.blocks_checked} blocks)"]
        return ["tally recount: FAIL"] + [f"  {m}" for m in self.mismatches[:10]]


def verify_tally(trace: Trace) -> TallyReport:
    """Recount every block's chain prefix from scratch with plain sets and
    compare against the live per-block states. Quadratic and proud of it:
    the whole point is sharing no code with the incremental fold."""
    world = rebuild(trace)
    if isinstance(world, LiskRebuild):
        return _recount_lisk(world)
    return _recount_general(world)


def _recount_general(world: GeneralRebuild) -> TallyReport:
    tree, tally, weights = world.tree, world.tally, world.weights
    mismatches: list[str] = []

    for block in world.blocks:
        branch = tree.branch_to(block.id)
        on_branch = {b.id for b in branch}
        pv_authors: dict[BlockId, set] = {GENESIS_ID: set(weights.ids(0))}
        pc_authors: dict[BlockId, set] = {}
        for b in branch:
            for vote in b.votes:
                if vote.target not in tree:
                    continue
                if weights.units(vote.author, tree.height(vote.target)) is None:
                    continue
                bucket = pv_authors if isinstance(vote, Prevote) else pc_authors
                bucket.setdefault(vote.target, set()).add(vote.author)

        def units(target, authors):
            height = tree.height(target)
            return sum(weights.units(a, height) for a in authors)

        quorum = 0
        for target, authors in pv_authors.items():
            height = tree.height(target)
            if (
                target in on_branch
                and height > quorum
                and weights.has_two_thirds(units(target, authors), height)
            ):
                quorum = height

        snap = tally.snapshot(block.id)
        here = f"block {block.id}"
        if snap.quorum_height != quorum:
            mismatches.append(
                f"{here}: quorum height {snap.quorum_height}, recount {quorum}"
            )
        for kind, live_units, live_authors, counted in (
            ("prevote", snap.pv_units, snap.pv_authors, pv_authors),
            ("precommit", snap.pc_units, snap.pc_authors, pc_authors),
        ):
            if set(live_units) != set(counted):
                mismatches.append(f"{here}: {kind} targets differ")
                continue
            for target, authors in counted.items():
                if live_authors.get(target, frozenset()) != frozenset(authors):
                    mismatches.append(f"{here}: {kind} authors differ at {target}")
                if live_units.get(target, 0) != units(target, authors):
                    mismatches.append(f"{here}: {kind} units differ at {target}")
    return TallyReport(not mismatches, len(world.blocks), mismatches)


def _recount_lisk(world: LiskRebuild) -> TallyReport:
    """Replay each chain prefix with per-author height sets standing in for
    the coverage intervals and counters."""
    chain_obj = world.chain
    config = world.scenario.config
    schedule = chain_obj.schedule
    tree = world.tree
    mismatches: list[str] = []

    for tip_block in world.blocks:
        branch = tree.branch_to(tip_block.id)
        pv_sets: dict[int, set] = {}
        pc_sets: dict[int, set] = {}
        prevoted_by: dict[ProposerId, set] = {}
        pc_max: dict[ProposerId, int] = {}
        prevoted = 0
        final = 0
        for block in branch[1:]:
            author = block.proposer
            height = block.height
            previous = block.header.previous_height
            if previous >= height:
                continue  # header implies nothing new
            active_from = schedule.activity_start(
                block.parent, author, schedule.round_of(height)
            )
            floor = max(active_from - 1, height - config.vote_window)
            k = max(previous, floor)

            mine = prevoted_by.setdefault(author, set())
            uncovered = max(
                (s for s in range(1, previous + 1) if s not in mine), default=-1
            )
            start = max(pc_max.get(author, -1), uncovered, floor, 0) + 1
            for s in range(start, height + 1):
                if len(pv_sets.get(s, ())) < chain_obj.threshold_at(block.parent, s):
                    continue
                bucket = pc_sets.setdefault(s, set())
                bucket.add(author)
                pc_max[author] = s
                if s > final and len(bucket) >= chain_obj.threshold_at(block.parent, s):
                    final = s

            for s in range(k + 1, height + 1):
                if s in mine:
                    continue  # endorsed by an earlier block; count once
                mine.add(s)
                bucket = pv_sets.setdefault(s, set())
                bucket.add(author)
                if s > prevoted and len(bucket) >= chain_obj.threshold_at(
                    block.parent, s
                ):
                    prevoted = s

        state = chain_obj.state(tip_block.id)
        here = f"block {tip_block.id}"
        if state.prevoted_height != prevoted:
            mismatches.append(
                f"{here}: prevoted height {state.prevoted_height}, recount {prevoted}"
            )
        if state.final_height != final:
            mismatches.append(
                f"{here}: final height {state.final_height}, recount {final}"
            )
        for kind, live, counted in (
            ("prevote", state.prevote_count, pv_sets),
            ("precommit", state.precommit_count, pc_sets),
        ):
            if {s: len(a) for s, a in counted.items()} != dict(live):
                mismatches.append(f"{here}: {kind} counts differ")
    return TallyReport(not mismatches, len(world.blocks), mismatches)


# ----------------------------------------------------------------------
# Aggregate verdicts
# ----------------------------------------------------------------------

EXIT_PASS = 0
EXIT_USAGE = 1
EXIT_SAFETY = 2
EXIT_LIVENESS = 3
EXIT_ACCOUNTABILITY = 4


@dataclass
class Verdict:
    safety: Optional[SafetyReport] = None
    liveness: Optional[LivenessReport] = None
    accountability: Optional[AccountabilityReport] = None

    @property
    def passed(self) -> bool:
        return self.exit_code == EXIT_PASS

    @property
    def exit_code(self) -> int:
        """Most severe failure wins; safety outranks everything."""
        if self.safety is not None and not self.safety.passed:
            return EXIT_SAFETY
        if self.liveness is not None and not self.liveness.passed:
            return EXIT_LIVENESS
        if self.accountability is not None and not self.accountability.passed:
            return EXIT_ACCOUNTABILITY
        return EXIT_PASS

    def lines(self) -> list[str]:
        out = []
        for part in (self.safety, self.liveness, self.accountability):
            if part is not None:
                out.extend(part.lines())
        return out


def check_trace(
    trace: Trace,
    *,
    checks: tuple[str, ...] = ("safety", "accountability"),
    target_height: Optional[int] = None,
    deadline_blocks: int = 302,
) -> Verdict:
    """Run the selected checkers over one trace and fold the reports."""
    verdict = Verdict()
    if "safety" in checks:
        verdict.safety = check_safety(trace)
    if "liveness" in checks:
        if target_height is None:
            raise ValueError("liveness check needs a target height")
        verdict.liveness = check_liveness(trace, target_height, deadline_blocks)
    if "accountability" in checks:
        verdict.accountability = check_accountability(trace)
    return verdict
