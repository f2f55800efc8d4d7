"""Deterministic discrete-event simulator of the partially synchronous net.

Time is integer ticks. Proposal slots fire every ``slot_duration`` ticks;
messages (blocks, with any votes riding inside) are broadcast with seeded
delays. Before GST the scheduler may partition proposers, drop messages,
or stretch delays; everything undelivered is rebroadcast at GST, and from
then on every message lands within ``delta`` ticks. Two runs of the same
scenario produce byte-identical traces.

The trace records what was created and what was decided — block, finalize
and violation-marker records — plus a meta header echoing the scenario.
Delivery timing is not logged: it is a pure function of the seed, so the
records above are a complete, replayable account of the run.

Each proposer owns a view: the set of blocks it has received (buffering
orphans until their parent shows up) and an incrementally maintained
canonical tip. Block payloads live once in a shared registry keyed by
block id; views only track membership, which keeps hundred-proposer runs
cheap without giving any proposer knowledge it should not have.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Optional

from .approvals import Approve, expand_approve, make_approve
from .blocktree import Block, BlockId, BlockTree, GENESIS_ID, ProposerId
from .consensus import ChainTally, DecisionTracker, Precommit, StaticWeights
from .dynamics import RoundSchedule
from .errors import InactiveAtHeightError, InvalidApproveError
from .liskbft import DelegateState, HeaderChain, LiskHeader, check_contradicting
from .scenario import GENERAL, LISK, Scenario

SLOT_START = "slot-start"
DELIVER_BLOCK = "deliver-block"
REBROADCAST = "rebroadcast"


@dataclass
class Trace:
    """A completed run: meta, block, finalize, marker and end records."""

    records: list[dict] = field(default_factory=list)

    def add(self, **record) -> None:
        self.records.append(record)

    def lines(self) -> list[str]:
        return [
            json.dumps(record, sort_keys=True, separators=(",", ":"))
            for record in self.records
        ]

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for line in self.lines():
                handle.write(line + "\n")

    @classmethod
    def parse(cls, lines) -> "Trace":
        records = [json.loads(line) for line in lines if line.strip()]
        return cls(records)

    @classmethod
    def load(cls, path) -> "Trace":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.parse(handle.readlines())

    # convenience accessors used by the checkers and tests
    def meta(self) -> dict:
        return self.records[0]

    def blocks(self) -> list[dict]:
        return [r for r in self.records if r["record"] == "block"]

    def finalizations(self) -> list[dict]:
        return [r for r in self.records if r["record"] == "finalize"]

    def markers(self) -> list[dict]:
        return [r for r in self.records if r["record"] == "marker"]


class _View:
    """One proposer's knowledge: received blocks and its canonical tip."""

    __slots__ = (
        "pid",
        "received",
        "orphans",
        "arrival",
        "counter",
        "canonical",
        "canonical_key",
        "digest",
        "final_height",
        "final_block",
        "tracker",
    )

    def __init__(self, pid: ProposerId):
        self.pid = pid
        self.received: set[BlockId] = {GENESIS_ID}
        self.orphans: dict[BlockId, list[Block]] = {}
        self.arrival: dict[BlockId, int] = {GENESIS_ID: 0}
        self.counter = 0
        self.canonical: BlockId = GENESIS_ID
        self.canonical_key = (0, 0, 0, 0)
        self.digest = 0
        self.final_height = 0
        self.final_block: BlockId = GENESIS_ID
        self.tracker: Optional[DecisionTracker] = None

    def deliver(self, block: Block) -> list[Block]:
        """Accept a block, integrating it and any orphans it unblocks.
        Returns the blocks that actually joined the view, in order."""
        if block.id in self.received:
            return []
        if block.parent not in self.received:
            self.orphans.setdefault(block.parent, []).append(block)
            return []
        integrated = []
        queue = [block]
        while queue:
            item = queue.pop(0)
            if item.id in self.received:
                continue
            self.received.add(item.id)
            self.counter += 1
            self.arrival[item.id] = self.counter
            self.digest ^= item.id * 0x9E3779B97F4A7C15
            integrated.append(item)
            queue.extend(self.orphans.pop(item.id, ()))
        return integrated

    def consider(self, block: Block, quorum_height: int) -> bool:
        """Fork-choice update against one newly integrated tip. Returns
        whether the canonical branch changed."""
        key = (quorum_height, block.height, -self.arrival[block.id], -block.id)
        if key > self.canonical_key:
            self.canonical_key = key
            self.canonical = block.id
            return True
        return False


class _PersonaTracking:
    """Equivocator bookkeeping shared by both protocol worlds: one persona
    per partition group (or two public ones when there is nothing to
    straddle), each persona's tip pinned to the deepest block its group can
    see so the forged blocks land where honest proposers will extend them."""

    scenario: Scenario
    tree: BlockTree

    def _init_personas(self, split_kind: str) -> None:
        scenario = self.scenario
        self.split_pids = frozenset(
            pid
            for pid in range(scenario.proposer_count)
            if scenario.behavior(pid).kind == split_kind
        )
        partition = scenario.partition
        self._personas: dict[ProposerId, tuple[int, ...]] = {}
        for pid in self.split_pids:
            groups = scenario.groups_of(pid)
            self._personas[pid] = groups if len(groups) > 1 else (0, 1)
        self._members = {
            g: (partition[g] if partition is not None and g < len(partition) else None)
            for personas in self._personas.values()
            for g in personas
        }
        # the adversary is one coordinated entity: forged blocks circulate
        # within the coalition even while honest groups are cut off
        self.coalition = frozenset(scenario.byzantine_ids())
        self.persona_tip: dict[tuple[ProposerId, int], BlockId] = {}
        self.persona_branch: dict[BlockId, int] = {}

    def persona_recipients(self, g: int):
        members = self._members[g]
        if members is None:
            return None
        return frozenset(members) | self.coalition

    def personas_of(self, pid: ProposerId) -> tuple[int, ...]:
        return self._personas[pid]

    def track_personas(self, pid: ProposerId, block: Block) -> None:
        if block.proposer == pid:
            return
        if block.proposer in self.coalition:
            # a colleague's forgery: it belongs to exactly one branch
            g = self.persona_branch.get(block.id)
            groups = (g,) if g in self._personas[pid] else ()
        else:
            groups = tuple(
                g
                for g in self._personas[pid]
                if self._members[g] is None or block.proposer in self._members[g]
            )
        for g in groups:
            tip = self.persona_tip.get((pid, g), GENESIS_ID)
            if block.height > self.tree.height(tip):
                self.persona_tip[(pid, g)] = block.id


class _LiskWorld(_PersonaTracking):
    """Header-encoded protocol strapped to the event engine."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.registry = HeaderChain(
            scenario.config,
            changes=scenario.changes,
            seed=scenario.seed,
            slot_overrides=scenario.slot_overrides,
        )
        self.tree = self.registry.tree
        self.schedule = self.registry.schedule
        self.delegates = {
            pid: DelegateState(pid) for pid in range(scenario.proposer_count)
        }
        self._init_personas("split-brain")
        # per-persona claimed proposal height; the gap between personas is
        # exactly the lie a header audit should catch
        self.persona_max: dict[tuple[ProposerId, int], int] = {}
        self.own_blocks: dict[ProposerId, list[Block]] = {}

    def slot_owner(self, view: _View, slot: int) -> Optional[ProposerId]:
        height = self.tree.height(view.canonical) + 1
        round_ = self.schedule.round_of(height)
        active = self.schedule.active_set(view.canonical, round_)
        order = self.schedule.slot_order(round_, active)
        return order[(slot + 1) % len(order)]

    def quorum_height_of(self, block: Block) -> int:
        # ranking a branch never counts the tip's own implied votes, which
        # is exactly the prevoted height the tip itself declares
        return block.header.prevoted_height if block.header else 0

    def _create(self, pid: ProposerId, parent: BlockId, block_id: int, slot: int,
                previous: Optional[int] = None) -> Optional[Block]:
        state = self.delegates[pid]
        height = self.tree.height(parent) + 1
        header = LiskHeader(
            previous_height=state.max_proposed_height if previous is None else previous,
            prevoted_height=self.registry.prevoted_height(parent),
        )
        block = Block(
            block_id, parent, height, proposer=pid, round_slot=slot, header=header
        )
        try:
            self.registry.add_block(block)
        except InactiveAtHeightError:
            return None
        state.max_proposed_height = max(state.max_proposed_height, height)
        self.own_blocks.setdefault(pid, []).append(block)
        return block

    def propose(self, pid, view, slot, time, next_id):
        """Returns (proposals, markers): proposals are (block, recipients,
        origin) with recipients None meaning everyone."""
        behavior = self.scenario.behavior(pid)
        kind = behavior.kind
        markers = []

        if kind == "split-brain":
            return self._split_brain(pid, view, slot, time, next_id)

        if self.slot_owner(view, slot) != pid:
            return [], markers

        if kind == "honest":
            block = self._create(pid, view.canonical, next_id(), slot)
            return ([(block, None, time)] if block else []), markers

        if kind == "withhold":
            block = self._create(pid, view.canonical, next_id(), slot)
            if block is None:
                return [], markers
            delay = behavior.param("delay_slots", 3) * self.scenario.clock.slot_duration
            return [(block, None, time + delay)], markers

        if kind == "understate-previous":
            truth = self.delegates[pid].max_proposed_height
            block = self._create(pid, view.canonical, next_id(), slot, previous=0)
            if block is None:
                return [], markers
            if truth > 0:
                markers.append((pid, kind, f"claimed 0, proposed up to {truth}"))
            return [(block, None, time)], markers

        if kind == "double-propose":
            first = self._create(pid, view.canonical, next_id(), slot)
            if first is None:
                return [], markers
            other_parent = self.tree.block(view.canonical).parent
            if other_parent is None:
                other_parent = view.canonical
            second = self._create(
                pid, other_parent, next_id(), slot,
                previous=first.header.previous_height,
            )
            if second is None:
                return [(first, None, time)], markers
            evidence = check_contradicting(first, second)
            if evidence is not None:
                markers.append((pid, kind, evidence.violated))
            return [(first, None, time), (second, None, time)], markers

        return [], markers

    def _split_brain(self, pid, view, slot, time, next_id):
        """One persona per partition group, each extending that group's
        branch under its own (understated) claimed height."""
        proposals, markers = [], []
        created = []
        for g in self.personas_of(pid):
            tip = self.persona_tip.get((pid, g), GENESIS_ID)
            persona_height = self.tree.height(tip) + 1
            round_ = self.schedule.round_of(persona_height)
            active = self.schedule.active_set(tip, round_)
            order = self.schedule.slot_order(round_, active)
            if order[(slot + 1) % len(order)] != pid:
                continue
            block = self._create(
                pid, tip, next_id(), slot, previous=self.persona_max.get((pid, g), 0)
            )
            if block is None:
                continue
            self.persona_tip[(pid, g)] = block.id
            self.persona_max[(pid, g)] = block.height
            self.persona_branch[block.id] = g
            proposals.append((block, self.persona_recipients(g), time))
            created.append(block)
        for i in range(len(created)):
            for j in range(i + 1, len(created)):
                evidence = check_contradicting(created[i], created[j])
                if evidence is not None:
                    markers.append((pid, "split-brain", evidence.violated))
                    break
        if not markers and created:
            for block in created:
                for old in self.own_blocks.get(pid, ())[:-len(created)]:
                    evidence = check_contradicting(old, block)
                    if evidence is not None:
                        markers.append((pid, "split-brain", evidence.violated))
                        break
                if markers:
                    break
        return proposals, markers

    def integrate(self, view: _View, block: Block):
        """Fold one received block into the view; returns finalize records."""
        if view.pid in self.split_pids:
            self.track_personas(view.pid, block)
        changed = view.consider(block, self.quorum_height_of(block))
        if not changed:
            return []
        final = self.registry.final_height(view.canonical)
        if final < 1:
            return []
        deepest = self.tree.block_at_height(view.canonical, final)
        if final > view.final_height or deepest.id != view.final_block:
            view.final_height = final
            view.final_block = deepest.id
            return [(deepest.id, final)]
        return []

    def block_record(self, block: Block) -> dict:
        return {
            "header": [block.header.previous_height, block.header.prevoted_height],
        }


class _GeneralWorld(_PersonaTracking):
    """Explicit approve messages riding inside blocks."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.tree = BlockTree()
        self.pset = scenario.proposer_set()
        self.weights = StaticWeights(self.pset)
        self.tally = ChainTally(self.tree, self.weights)
        self.schedule = RoundSchedule(
            self.tree,
            self.pset,
            blocks_per_round=scenario.proposer_count,
            seed=scenario.seed,
            slot_overrides=scenario.slot_overrides,
        )
        self.last_approve: dict[ProposerId, Approve] = {}
        self.approves: dict[BlockId, Optional[Approve]] = {}
        self._init_personas("split-sign")
        self.persona_approve: dict[tuple[ProposerId, int], Approve] = {}
        # first prevote target per (author, height), for split-sign self-checks
        self.prevoted_at: dict[tuple[ProposerId, int], BlockId] = {}

    def slot_owner(self, view: _View, slot: int) -> Optional[ProposerId]:
        count = self.scenario.proposer_count
        order = self.schedule.slot_order((slot + 1) // count, self.pset)
        return order[(slot + 1) % len(order)]

    def attach_tracker(self, view: _View) -> None:
        view.tracker = DecisionTracker(
            self.tree, self.weights, self.scenario.threshold(view.pid)
        )

    def _votes_for(self, pid, context, previous) -> tuple[Optional[Approve], tuple, tuple]:
        try:
            approve = make_approve(self.tree, self.tally, pid, context, previous)
            prevotes, precommits = expand_approve(self.tree, self.tally, approve)
        except InvalidApproveError:
            return None, (), ()
        return approve, prevotes, precommits

    def _create(self, pid, parent, block_id, slot, approve, votes) -> Block:
        height = self.tree.height(parent) + 1
        block = Block(
            block_id, parent, height, proposer=pid, round_slot=slot, votes=votes
        )
        self.tree.insert(block)
        self.tally.extend(block, votes)
        self.approves[block.id] = approve
        return block

    def propose(self, pid, view, slot, time, next_id):
        behavior = self.scenario.behavior(pid)
        kind = behavior.kind
        markers = []

        if kind == "split-sign":
            return self._split_sign(pid, view, slot, time, next_id)

        if self.slot_owner(view, slot) != pid:
            return [], markers

        if kind == "silent":
            block = self._create(pid, view.canonical, next_id(), slot, None, ())
            return [(block, None, time)], markers

        # honest: endorse the canonical chain in the same block we extend it by
        approve, prevotes, precommits = self._votes_for(
            pid, view.canonical, self.last_approve.get(pid)
        )
        if approve is not None:
            self.last_approve[pid] = approve
        block = self._create(
            pid, view.canonical, next_id(), slot, approve, prevotes + precommits
        )
        return [(block, None, time)], markers

    def _split_sign(self, pid, view, slot, time, next_id):
        """Per-group vote personas: each partition side sees a coherent,
        monotone voting history, but the two histories prevote the same
        heights on different branches."""
        proposals, markers = [], []
        if self.slot_owner(view, slot) != pid:
            return proposals, markers
        for g in self.personas_of(pid):
            tip = self.persona_tip.get((pid, g), GENESIS_ID)
            approve, prevotes, precommits = self._votes_for(
                pid, tip, self.persona_approve.get((pid, g))
            )
            if approve is not None:
                self.persona_approve[(pid, g)] = approve
            block = self._create(
                pid, tip, next_id(), slot, approve, prevotes + precommits
            )
            self.persona_tip[(pid, g)] = block.id
            self.persona_branch[block.id] = g
            proposals.append((block, self.persona_recipients(g), time))
            for pv in prevotes:
                h = self.tree.height(pv.target)
                first = self.prevoted_at.setdefault((pid, h), pv.target)
                if first != pv.target and not markers:
                    markers.append(
                        (pid, "split-sign", f"two prevotes at height {h}")
                    )
        return proposals, markers

    def integrate(self, view: _View, block: Block):
        if view.pid in self.split_pids:
            self.track_personas(view.pid, block)
        view.consider(block, self.tally.quorum_height(block.id))
        if view.tracker is None:
            return []
        finalized = []
        for vote in block.votes:
            if isinstance(vote, Precommit):
                for target in view.tracker.add(vote):
                    finalized.append((target, self.tree.height(target)))
        return finalized

    def block_record(self, block: Block) -> dict:
        approve = self.approves.get(block.id)
        if approve is None:
            return {"approve": None}
        return {
            "approve": [approve.last_unapproved_height, approve.prevoted_height]
        }


def run(scenario: Scenario) -> Trace:
    """Execute one scenario to completion; fully deterministic in the seed."""
    world = _LiskWorld(scenario) if scenario.mode == LISK else _GeneralWorld(scenario)
    clock = scenario.clock
    trace = Trace()
    trace.add(
        record="meta",
        mode=scenario.mode,
        seed=scenario.seed,
        scenario=scenario.to_dict(),
    )

    crashed = scenario.crashed_ids()
    views = {
        pid: _View(pid)
        for pid in range(scenario.proposer_count)
        if pid not in crashed
    }
    honest = scenario.honest_ids()
    if scenario.mode == GENERAL:
        for pid in honest:
            world.attach_tracker(views[pid])

    delay_rng = random.Random(f"delay#{scenario.seed}")
    drop_rng = random.Random(f"drop#{scenario.seed}")
    blocks_by_id: dict[BlockId, Block] = {}
    id_counter = [0]

    def next_id() -> int:
        id_counter[0] += 1
        return id_counter[0]

    heap: list[tuple] = []
    seq = [0]

    def push(time, kind, payload):
        seq[0] += 1
        heapq.heappush(heap, (time, seq[0], kind, payload))

    group_map = {
        pid: frozenset(scenario.groups_of(pid))
        for pid in range(scenario.proposer_count)
    }
    ordered_views = sorted(views)

    def schedule_delivery(block, recipients, origin):
        """Spread one block to its recipients under the delivery policy."""
        sender_groups = group_map[block.proposer]
        for pid in ordered_views:
            if pid == block.proposer:
                continue
            if recipients is not None and pid not in recipients:
                # selective sends still become public knowledge once GST passes
                push(max(origin, clock.gst), REBROADCAST, (pid, block.id))
                continue
            if origin >= clock.gst:
                delay = delay_rng.randint(1, clock.delta) if clock.delta else 0
                push(origin + delay, DELIVER_BLOCK, (pid, block.id))
                continue
            blocked = not (sender_groups & group_map[pid])
            dropped = (
                scenario.drop_rate > 0 and drop_rng.random() < scenario.drop_rate
            )
            if blocked or dropped:
                push(clock.gst, REBROADCAST, (pid, block.id))
            else:
                bound = max(scenario.pre_gst_delay, 1)
                push(origin + delay_rng.randint(1, bound), DELIVER_BLOCK, (pid, block.id))

    def deliver(pid, block_id, time):
        view = views[pid]
        for block in view.deliver(blocks_by_id[block_id]):
            for target, height in world.integrate(view, block):
                if pid in honest:
                    trace.add(
                        record="finalize",
                        time=time,
                        proposer=pid,
                        block=target,
                        height=height,
                    )

    uniform = True
    stop_time = None
    if scenario.stop.max_ticks is not None:
        max_slots = scenario.stop.max_ticks // clock.slot_duration + 1
    else:
        # a stalled chain must still terminate: generous slack over the
        # slot count a healthy run needs to reach the target height
        max_slots = 100 * scenario.stop.max_height + 1000

    last_time = 0
    push(0, SLOT_START, 0)
    while heap:
        time, _, kind, payload = heapq.heappop(heap)
        if scenario.stop.max_ticks is not None and time > scenario.stop.max_ticks:
            break
        if stop_time is not None and time > stop_time:
            break
        last_time = time

        if kind == SLOT_START:
            slot = payload
            if time > clock.gst + 2 * clock.delta and uniform:
                # equal-tree assertion: canonical tips may still disagree on
                # exact (quorum, height) ties until growth breaks them
                snapshots = {
                    (views[pid].counter, views[pid].digest) for pid in honest
                }
                if len(snapshots) > 1:
                    uniform = False
            for pid in ordered_views:
                proposals, markers = world.propose(pid, views[pid], slot, time, next_id)
                for author, variant, note in markers:
                    trace.add(
                        record="marker",
                        kind="scripted_violation",
                        time=time,
                        author=author,
                        variant=variant,
                        note=note,
                    )
                for block, recipients, origin in proposals:
                    blocks_by_id[block.id] = block
                    record = {
                        "record": "block",
                        "time": time,
                        "id": block.id,
                        "parent": block.parent,
                        "height": block.height,
                        "slot": slot,
                        "proposer": block.proposer,
                    }
                    record.update(world.block_record(block))
                    trace.records.append(record)
                    deliver(block.proposer, block.id, time)  # own block, instantly
                    schedule_delivery(block, recipients, origin)
            reached = world.tree.max_height
            if (
                stop_time is None
                and scenario.stop.max_height is not None
                and reached >= scenario.stop.max_height
            ):
                stop_time = time + clock.slot_duration
            elif stop_time is None and slot + 1 < max_slots:
                push(time + clock.slot_duration, SLOT_START, slot + 1)
        else:
            pid, block_id = payload
            if kind == REBROADCAST and clock.delta:
                # lost pre-GST traffic resurfaces just after stabilization
                push(time + delay_rng.randint(1, clock.delta), DELIVER_BLOCK, payload)
            else:
                deliver(pid, block_id, time)

    trace.add(
        record="end",
        time=last_time,
        blocks=len(blocks_by_id),
        max_height=world.tree.max_height,
        uniform_after_gst=uniform,
    )
    return trace


__all__ = ["Trace", "run", "SLOT_START", "DELIVER_BLOCK", "REBROADCAST"]
