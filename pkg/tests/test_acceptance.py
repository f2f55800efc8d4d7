"""Acceptance runs: one test per numbered criterion, one pass/fail line each.

Deadlines, quorum bounds and recount comparisons are exact — no tolerances.
The heavy sweeps (criteria 1, 3 and 6) drive the full simulator at n=101;
everything else works on generated histories or single scenarios.
"""

import random
import time
from fractions import Fraction
from itertools import count as counter

from bftsim.approvals import Approve, check_monotonicity, expand_approve, make_approve
from bftsim.blocktree import Block, BlockTree, GENESIS_ID
from bftsim.checkers import check_liveness, check_safety, check_trace, rebuild, verify_tally
from bftsim.consensus import (
    ChainTally,
    ProposerSet,
    StaticWeights,
    check_precommit_support,
    check_prevote_uniqueness,
    check_switch_justification,
)
from bftsim.dynamics import check_turnover_bound, honest_overlap
from bftsim.liskbft import (
    HeaderChain,
    LiskConfig,
    LiskHeader,
    check_contradicting,
    check_ordered_pair,
    check_successive_pairs,
)
from bftsim.scenario import Scenario
from bftsim.simnet import run


def report(capsys, criterion: str, ok: bool, detail: str) -> None:
    """One line per criterion, written past pytest's capture so the verdict
    shows up in the live log either way."""
    line = f"{criterion}: {'pass' if ok else 'FAIL'} — {detail}"
    with capsys.disabled():
        print(line, flush=True)
    assert ok, line


# ----------------------------------------------------------------------
# Criterion 1 — no conflicting finalization with 33/101 equivocators
# ----------------------------------------------------------------------


def equivocation_scenario(seed: int, max_height: int = 270) -> Scenario:
    """A third of the delegates run split personas across a pre-stabilization
    partition of the honest two thirds — the strongest scripted attack that
    still leaves 68 honest delegates."""
    return Scenario.from_dict({
        "mode": "lisk-bft",
        "seed": seed,
        "proposers": {"count": 101},
        "stop": {"max_height": max_height},
        "clock": {"gst": 60},
        "behaviors": {str(p): "split-brain" for p in range(33)},
        "pre_gst": {"partition": [list(range(33, 67)), list(range(67, 101))]},
    })


def test_criterion_1_safety_at_the_bound(capsys):
    started = time.monotonic()
    for seed in range(1000):
        trace = run(equivocation_scenario(seed))
        assert trace.markers(), f"seed {seed}: no equivocation actually happened"
        assert trace.finalizations(), f"seed {seed}: vacuous run, nothing finalized"
        result = check_safety(trace)
        assert result.passed, f"seed {seed}: {result.lines()}"
    elapsed = time.monotonic() - started
    report(
        capsys,
        "criterion 1",
        elapsed < 600,
        f"1000 runs, 33/101 equivocating, zero safety failures, {elapsed:.0f}s",
    )


# ----------------------------------------------------------------------
# Criterion 2 — 34/101 of the weight breaks safety with a witness
# ----------------------------------------------------------------------


def weighted_attack(seed: int, max_ticks: int = 1200) -> Scenario:
    """Byzantine weight exactly 34/101 and two honest halves of 67/202 each:
    either half plus the equivocators clears the 2/3 quorum, so split-signed
    approves hand both partitions a finalization."""
    weights = {str(p): "2/202" for p in range(99)}
    weights["99"] = "3/202"
    weights["100"] = "1/202"
    return Scenario.from_dict({
        "mode": "general-framework",
        "seed": seed,
        "proposers": {"count": 101, "weights": weights},
        "stop": {"max_ticks": max_ticks},
        "clock": {"gst": 10**9},
        "behaviors": {str(p): "split-sign" for p in range(34)},
        "pre_gst": {"partition": [list(range(34, 67)) + [100],
                                  list(range(67, 99)) + [99]]},
    })


def test_criterion_2_conflict_witness_past_the_bound(capsys):
    witnesses = 0
    for seed in range(3):
        trace = run(weighted_attack(seed))
        result = check_safety(trace)
        if result.passed:
            continue
        w = result.witness
        world = rebuild(trace)
        assert world.tree.are_conflicting(w["block_a"], w["block_b"])
        assert w["deciders_a"] and w["deciders_b"]
        assert not set(w["deciders_a"]) & set(w["deciders_b"])
        witnesses += 1
    report(
        capsys,
        "criterion 2",
        witnesses >= 1,
        f"34/101 split-sign attack finalized conflicting blocks in "
        f"{witnesses}/3 seeded runs",
    )


# ----------------------------------------------------------------------
# Criterion 3 — every honest delegate finalizes within 302 blocks
# ----------------------------------------------------------------------


def crash_scenario(seed: int, crashed: int, max_height: int = 310) -> Scenario:
    members = random.Random(f"crash#{seed}").sample(range(101), crashed)
    return Scenario.from_dict({
        "mode": "lisk-bft",
        "seed": seed,
        "proposers": {"count": 101},
        "stop": {"max_height": max_height},
        "clock": {"gst": 0},
        "behaviors": {str(p): "crashed" for p in members},
    })


def test_criterion_3_liveness_deadline(capsys):
    counts_seen = set()
    for seed in range(100):
        crashed = seed % 34
        counts_seen.add(crashed)
        trace = run(crash_scenario(seed, crashed))
        result = check_liveness(trace, 3, 302)
        assert result.passed, f"seed {seed} ({crashed} crashed): {result.lines()}"
    assert counts_seen == set(range(34)), "crash sweep must cover 0..33"

    # one over the offline bound: 67 honest can never assemble 68 prevotes
    beyond = check_liveness(run(crash_scenario(500, 34)), 3, 302)
    assert not beyond.passed
    assert beyond.earliest_unfinalized == 1
    assert len(beyond.laggards) == 67
    report(
        capsys,
        "criterion 3",
        True,
        "100 runs with 0..33 crashed all finalize height 3 within exactly "
        "302 blocks; 34 crashed stalls every honest delegate",
    )


# ----------------------------------------------------------------------
# Criterion 4 — randomized honest histories vs. the protocol rules
# ----------------------------------------------------------------------


def general_history(seed, n, steps):
    """Random fork-prone run where every approve follows the honest
    discipline: contexts extend past the previous endorsement and carry a
    quorum at least as deep as anything the author committed to."""
    rng = random.Random(f"general#{seed}")
    tree = BlockTree()
    tally = ChainTally(tree, StaticWeights(ProposerSet.uniform(n)))
    ids = counter(1)
    blocks = [GENESIS_ID]
    previous = {a: None for a in range(n)}
    committed = dict.fromkeys(range(n), 0)
    history = []

    def bare_block(author):
        parent = rng.choice(blocks)
        b = Block(next(ids), parent, tree.height(parent) + 1, proposer=author)
        tree.insert(b)
        tally.extend(b, ())
        blocks.append(b.id)

    for _ in range(steps):
        author = rng.randrange(n)
        prev = previous[author]
        k = 0 if prev is None else tree.height(prev.context)
        floor = max(committed[author], prev.prevoted_height if prev else 0)
        options = [b for b in blocks
                   if tree.height(b) > k and tally.quorum_height(b) >= floor]
        if rng.random() < 0.2 or not options:
            bare_block(author)
            continue
        ctx = rng.choice(options)
        approve = make_approve(tree, tally, author, ctx, prev)
        prevotes, precommits = expand_approve(tree, tally, approve)
        b = Block(next(ids), ctx, tree.height(ctx) + 1, proposer=author,
                  votes=prevotes + precommits)
        tree.insert(b)
        tally.extend(b, b.votes)
        blocks.append(b.id)
        previous[author] = approve
        if precommits:
            committed[author] = max(
                committed[author], max(tree.height(p.target) for p in precommits)
            )
        history.append((author, approve, prevotes, precommits))
    return tree, tally, history


def audit_general(tree, tally, history):
    approves, seen_at, committed = {}, {}, {}
    hits = []
    for author, approve, prevotes, precommits in history:
        hit = check_monotonicity(tree, approves.get(author, []), approve)
        if hit:
            hits.append(hit)
        for pv in prevotes:
            h = tree.height(pv.target)
            hit = check_prevote_uniqueness(tree, seen_at.get((author, h), []), pv)
            if hit:
                hits.append(hit)
            hit = check_switch_justification(tree, tally, committed.get(author, []), pv)
            if hit:
                hits.append(hit)
            seen_at.setdefault((author, h), []).append(pv)
        for pc in precommits:
            hit = check_precommit_support(tree, tally, pc, cast_prevotes=prevotes)
            if hit:
                hits.append(hit)
            committed.setdefault(author, []).append(pc)
        approves.setdefault(author, []).append(approve)
    return hits


def header_history(seed, n, steps):
    """Random honest header chains: one growing chain, a pinned two-branch
    fork, or a fork where a third of the authors migrate with fork choice."""
    rng = random.Random(f"header#{seed}")
    config = LiskConfig(proposer_count=n, blocks_per_round=n, vote_window=3 * n)
    chain = HeaderChain(config)
    tree = chain.tree
    ids = counter(1)
    top = dict.fromkeys(range(n), 0)
    variant = rng.randrange(3)
    tips = {"A": GENESIS_ID, "B": GENESIS_ID}
    side_of = {a: ("A" if a < n // 2 else "B") for a in range(n)}

    def key(tip):
        return (chain.prevoted_height(tip), tree.height(tip))

    blocks = []
    for _ in range(steps):
        author = rng.randrange(n)
        if variant == 0:
            side = "A"
        elif variant == 1 or author >= n // 3:
            side = side_of[author]
        else:
            side = "A" if key(tips["A"]) >= key(tips["B"]) else "B"
        tip = tips[side]
        height = tree.height(tip) + 1
        b = Block(next(ids), tip, height, proposer=author,
                  header=LiskHeader(top[author], chain.prevoted_height(tip)))
        chain.add_block(b)
        tips[side] = b.id
        top[author] = max(top[author], height)
        blocks.append(b)
    return chain, blocks


def audit_header(chain, blocks):
    hits = []
    by_author = {}
    for b in blocks:
        by_author.setdefault(b.proposer, []).append(b)
    for mine in by_author.values():
        for i, first in enumerate(mine):
            for second in mine[i + 1:]:
                hit = check_contradicting(first, second)
                if hit:
                    hits.append(hit)
    tree = chain.tree
    for tip in tree.tips:
        branch = tree.branch_to(tip)
        for author in {b.proposer for b in branch if b.proposer is not None}:
            hit = check_successive_pairs(branch, author)
            if hit:
                hits.append(hit)
    return hits


def test_criterion_4_honest_histories_never_trip_the_rules(capsys):
    plan = [(4, 2000, 30), (7, 2000, 30), (101, 1000, 14)]
    approves = blocks_total = 0

    seed = 0
    for n, histories, steps in plan:
        for _ in range(histories):
            tree, tally, history = general_history(seed, n, steps)
            hits = audit_general(tree, tally, history)
            assert not hits, f"general seed {seed} (n={n}): {hits[0]}"
            approves += len(history)
            seed += 1
    for n, histories, steps in plan:
        for _ in range(histories):
            chain, blocks = header_history(seed, n, steps)
            hits = audit_header(chain, blocks)
            assert not hits, f"header seed {seed} (n={n}): {hits[0]}"
            blocks_total += len(blocks)
            seed += 1

    # injected monotonicity violations: an understated skip height on a
    # deeper context re-opens already-prevoted heights; a lowered prevoted
    # height denies a quorum the author already endorsed
    skips = drops = drop_chances = 0
    for seed in range(80):
        n = (4, 7)[seed % 2]
        tree, tally, history = general_history(seed, n, 30)
        per_author = {}
        for author, approve, _, _ in history:
            per_author.setdefault(author, []).append(approve)
        if not per_author:
            continue
        author, mine = sorted(per_author.items())[0]
        prev = mine[-1]
        deeper = Block(10_000 + seed, prev.context,
                       tree.height(prev.context) + 1, proposer=author)
        tree.insert(deeper)
        forged = Approve(tree.height(prev.context) - 1, prev.prevoted_height,
                         deeper.id, author)
        hit = check_monotonicity(tree, mine, forged)
        assert hit is not None and hit.clause == "context-above-later-skip", seed
        skips += 1

        endorsed = [(a, hs) for a, hs in sorted(per_author.items())
                    if hs[-1].prevoted_height >= 1]
        if endorsed:
            author, mine = endorsed[0]
            prev = mine[-1]
            deeper = Block(20_000 + seed, prev.context,
                           tree.height(prev.context) + 1, proposer=author)
            tree.insert(deeper)
            forged = Approve(tree.height(prev.context),
                             prev.prevoted_height - 1, deeper.id, author)
            hit = check_monotonicity(tree, mine, forged)
            assert hit is not None and hit.clause == "prevoted-height-decreased", seed
            drops += 1
            drop_chances += 1

    # injected header lies: claiming a shallower prevoted height than an
    # earlier own block already carried
    header_hits = 0
    for seed in range(60):
        chain, blocks = header_history(seed, 4, 30)
        tree = chain.tree
        liars = [b for b in blocks if b.header.prevoted_height >= 1]
        if not liars:
            continue
        last = liars[-1]
        tip = max(tree.tips, key=tree.height)
        forged = Block(30_000 + seed, tip, tree.height(tip) + 1,
                       proposer=last.proposer,
                       header=LiskHeader(tree.height(tip),
                                         last.header.prevoted_height - 1))
        hit = check_contradicting(last, forged)
        assert hit is not None and hit.violated == "prevoted-height-decreased", seed
        header_hits += 1

    assert skips >= 30 and drops >= 10 and header_hits >= 30
    report(
        capsys,
        "criterion 4",
        True,
        f"10000 honest histories clean ({approves} approves, {blocks_total} "
        f"headers); {skips + drops} forged approves and {header_hits} forged "
        f"headers all caught",
    )


# ----------------------------------------------------------------------
# Criterion 5 — all-pairs and successive-pairs agree on every chain
# ----------------------------------------------------------------------


def random_chain(seed):
    """A single chain of arbitrary headers: heights grow, everything else —
    authors, claimed previous and prevoted heights — is unconstrained."""
    rng = random.Random(f"chain#{seed}")
    length = rng.randrange(5, 41)
    authors = rng.randrange(2, 7)
    chain = []
    parent, prevoted = GENESIS_ID, 0
    for height in range(1, length + 1):
        prevoted = max(0, prevoted + rng.randrange(-2, 3))
        b = Block(height, parent, height, proposer=rng.randrange(authors),
                  header=LiskHeader(rng.randrange(0, height + 3),
                                    min(prevoted, height - 1)))
        chain.append(b)
        parent = b.id
    return chain


def test_criterion_5_successive_pairs_match_all_pairs(capsys):
    clean = violated = 0
    for seed in range(1000):
        chain = random_chain(seed)
        for author in {b.proposer for b in chain}:
            own = [b for b in chain if b.proposer == author]
            all_pairs = any(
                check_ordered_pair(own[i], own[j], "position") is not None
                for i in range(len(own))
                for j in range(i + 1, len(own))
            )
            successive = check_successive_pairs(chain, author) is not None
            assert all_pairs == successive, (seed, author)
            if all_pairs:
                violated += 1
            else:
                clean += 1
    assert clean and violated, "sweep must exercise both verdicts"
    report(
        capsys,
        "criterion 5",
        True,
        f"1000 chains: all-pairs equals successive-pairs on every author "
        f"({clean} clean, {violated} contradicted)",
    )


# ----------------------------------------------------------------------
# Criterion 6 — safety under scripted proposer-set changes
# ----------------------------------------------------------------------

DYN_CONFIG = {"blocks_per_round": 101, "vote_window": 140, "activation_delay": 0}
TRANCHE_1, TRANCHE_2 = list(range(79, 90)), list(range(90, 101))
BENCH_1, BENCH_2 = list(range(201, 212)), list(range(212, 223))


def swap(height, leaving, joining):
    events = [{"height": height, "kind": "leave", "proposer": p} for p in leaving]
    events += [{"height": height, "kind": "join", "proposer": p} for p in joining]
    return events


def dynamic_scenario(seed, changes, max_height=230):
    return Scenario.from_dict({
        "mode": "lisk-bft",
        "seed": seed,
        "proposers": {"count": 101},
        "stop": {"max_height": max_height},
        "clock": {"gst": 0},
        "config": dict(DYN_CONFIG),
        "changes": changes,
    })


def family_a(seed):
    """Rotating turnover: one tranche of eleven swapped out per boundary and
    the previous one restored. 79 delegates never leave, so the intersection
    of all the active sets keeps 68 honest members with room to spare."""
    changes = swap(5, TRANCHE_1, BENCH_1)
    changes += swap(106, BENCH_1, TRANCHE_1) + swap(106, TRANCHE_2, BENCH_2)
    return dynamic_scenario(seed, changes)


def family_b(seed):
    """Bounded turnover: eleven honest delegates out and back, one epoch
    apart, keeping 68 + 2·11 honest members active at every height."""
    changes = swap(5, TRANCHE_1, BENCH_1) + swap(106, BENCH_1, TRANCHE_1)
    return dynamic_scenario(seed, changes)


GROUP_A, GROUP_B, BRIDGE = list(range(0, 49)), list(range(49, 98)), [98, 99, 100]
PURGE_CONFIG = {"blocks_per_round": 34, "vote_window": 170, "activation_delay": 1}
PURGE_CUTOFF = 33


def purge_scenario(seed, changes=(), max_height=40):
    """98 honest delegates split evenly behind a standing partition, three
    equivocators bridging both halves and carrying the purge events."""
    return Scenario.from_dict({
        "mode": "lisk-bft",
        "seed": seed,
        "proposers": {"count": 101},
        "stop": {"max_height": max_height},
        "clock": {"gst": 10**9},
        "config": dict(PURGE_CONFIG),
        "behaviors": {str(p): "split-brain" for p in BRIDGE},
        "pre_gst": {"partition": [GROUP_A, GROUP_B]},
        **({"changes": list(changes)} if changes else {}),
    })


def partition_branches(trace):
    """Each half's branch as a height→proposer map."""
    tree = rebuild(trace).tree
    sides = {}
    for tip in tree.tips:
        branch = tree.branch_to(tip)
        honest = {b.proposer for b in branch[1:] if b.proposer not in BRIDGE}
        for side, members in (("A", GROUP_A), ("B", GROUP_B)):
            if honest and honest <= set(members):
                if side not in sides or len(branch) > len(sides[side]):
                    sides[side] = branch
    return {side: {b.height: b.proposer for b in branch[1:]}
            for side, branch in sides.items()}


def pick_carriers(sides):
    """One equivocator block per branch, below the activation cutoff, whose
    opposite-branch counterpart has a different proposer — so each purge
    lands on exactly one branch."""
    found = {}
    for side, other in (("A", "B"), ("B", "A")):
        for h in range(1, PURGE_CUTOFF + 1):
            p = sides[side].get(h)
            if p in BRIDGE and sides[other].get(h) not in (None, p):
                found[side] = (h, p)
                break
    return found if len(found) == 2 else None


def purge_events(height, carrier, keep, drop):
    events = [{"height": height, "kind": "leave", "proposer": p,
               "carrier": carrier} for p in drop]
    events += [{"height": height, "kind": "weight-change", "proposer": p,
                "weight": "1/52", "carrier": carrier} for p in keep]
    return events


def test_criterion_6_dynamic_set_safety(capsys):
    for family, make in (("A", family_a), ("B", family_b)):
        for seed in range(200):
            trace = run(make(seed))
            assert trace.finalizations(), f"family {family} seed {seed}: vacuous"
            result = check_safety(trace)
            assert result.passed, f"family {family} seed {seed}: {result.lines()}"

    # the preconditions themselves, on one rebuilt run each
    world = rebuild(run(family_a(0)))
    tip = max(world.tree.tips, key=world.tree.height)
    sets = [world.chain.schedule.active_set(tip, r) for r in range(3)]
    overlap = honest_overlap(sets, range(101))
    assert overlap >= Fraction(68, 101), overlap

    world = rebuild(run(family_b(0)))
    links = []
    for block in world.blocks:
        newly = range(world.chain.state(block.parent).final_height + 1,
                      world.chain.state(block.id).final_height + 1)
        links += [(world.tree.block_at_height(block.id, h).id, block.id)
                  for h in newly]
    assert links
    drift = check_turnover_bound(
        world.tree, world.chain.schedule, range(101), Fraction(12, 101), links
    )
    assert drift is None, drift

    # violating family: with only 98 honest delegates the 68+2m bound for
    # m=16 is out of reach, and branch-local purges carried by equivocator
    # blocks drop each half's quorum to 35 of 52 — both halves finalize
    violation = None
    for seed in range(4):
        sides = partition_branches(run(purge_scenario(seed)))
        if len(sides) != 2:
            continue
        pins = pick_carriers(sides)
        if pins is None:
            continue
        (h_a, p_a), (h_b, p_b) = pins["A"], pins["B"]
        changes = purge_events(h_a, p_a, GROUP_A + BRIDGE, GROUP_B)
        changes += purge_events(h_b, p_b, GROUP_B + BRIDGE, GROUP_A)
        trace = run(purge_scenario(seed, changes, max_height=220))
        result = check_safety(trace)
        if result.passed:
            continue
        w = result.witness
        tree = rebuild(trace).tree
        assert tree.are_conflicting(w["block_a"], w["block_b"])
        assert set(w["deciders_a"]) <= set(GROUP_A) or set(w["deciders_a"]) <= set(GROUP_B)
        assert not set(w["deciders_a"]) & set(w["deciders_b"])
        violation = (seed, w["height_a"], w["height_b"])
        break
    assert violation is not None, "adversarial purge found no conflict"
    report(
        capsys,
        "criterion 6",
        True,
        f"families A/B: 400 runs, zero safety failures, preconditions hold; "
        f"violating family (98 honest, branch purges): conflicting "
        f"finalizations at heights {violation[1]}/{violation[2]} (seed {violation[0]})",
    )


# ----------------------------------------------------------------------
# Criterion 7 — incremental tallies equal brute-force recounts
# ----------------------------------------------------------------------


def tally_scenarios():
    yield Scenario.from_dict({
        "mode": "lisk-bft", "seed": 3, "proposers": {"count": 4},
        "stop": {"max_height": 40},
    })
    yield Scenario.from_dict({
        "mode": "lisk-bft", "seed": 7, "proposers": {"count": 4},
        "stop": {"max_height": 40}, "clock": {"gst": 30},
        "behaviors": {"3": "split-brain"},
        "pre_gst": {"partition": [[0, 1], [2]]},
    })
    yield Scenario.from_dict({
        "mode": "lisk-bft", "seed": 11, "proposers": {"count": 7},
        "stop": {"max_height": 60},
        "behaviors": {"0": "double-propose", "1": "understate-previous",
                      "2": "withhold"},
    })
    yield crash_scenario(21, 17)
    yield family_a(0)
    yield Scenario.from_dict({
        "mode": "general-framework", "seed": 2, "proposers": {"count": 7},
        "stop": {"max_ticks": 240}, "clock": {"gst": 40},
        "pre_gst": {"drop_rate": "1/5"},
    })
    yield Scenario.from_dict({
        "mode": "general-framework", "seed": 11, "proposers": {"count": 7},
        "stop": {"max_ticks": 400}, "clock": {"gst": 10000},
        "behaviors": {"4": "split-sign", "5": "split-sign", "6": "split-sign"},
        "pre_gst": {"partition": [[0, 1], [2, 3]]},
    })
    yield weighted_attack(0, max_ticks=800)


def test_criterion_7_tally_recount(capsys):
    checked = 0
    for scenario in tally_scenarios():
        trace = run(scenario)
        blocks = len(trace.blocks())
        assert blocks <= 500, f"{scenario.mode} seed {scenario.seed}: {blocks} blocks"
        result = verify_tally(trace)
        assert result.passed, result.mismatches[:1]
        assert result.blocks_checked == blocks
        checked += blocks
    report(
        capsys,
        "criterion 7",
        True,
        f"8 traces, {checked} blocks recounted from scratch, zero mismatches",
    )


# ----------------------------------------------------------------------
# Criterion 8 — identical traces and verdicts on replay
# ----------------------------------------------------------------------


def test_criterion_8_replay_determinism(capsys):
    replayed = []
    probes = [
        (equivocation_scenario(7), ("safety", "accountability"), None),
        (weighted_attack(0), ("safety", "accountability"), None),
        (family_a(3), ("safety", "accountability"), None),
        (crash_scenario(3, 3), ("safety", "liveness", "accountability"), 3),
    ]
    for scenario, checks, target in probes:
        first, second = run(scenario), run(scenario)
        assert "\n".join(first.lines()) == "\n".join(second.lines())
        verdicts = [
            check_trace(t, checks=checks, target_height=target).lines()
            for t in (first, second)
        ]
        assert verdicts[0] == verdicts[1]
        replayed.append(len(first.blocks()))
    report(
        capsys,
        "criterion 8",
        True,
        f"4 scenarios replayed byte-identically ({replayed} blocks) with "
        f"matching verdicts",
    )


# ----------------------------------------------------------------------
# Threshold sweep coherence: safety holds whenever β < τ − 1/3
# ----------------------------------------------------------------------


def sweep_scenario(seed, tau):
    return Scenario.from_dict({
        "mode": "general-framework",
        "seed": seed,
        "proposers": {"count": 7},
        "stop": {"max_ticks": 400},
        "clock": {"gst": 10000},
        "thresholds": {"default": tau},
        "behaviors": {"4": "split-sign", "5": "split-sign", "6": "split-sign"},
        "pre_gst": {"partition": [[0, 1], [2, 3]]},
    })


def test_threshold_sweep_coherence(capsys):
    beta = Fraction(3, 7)
    outcomes = {}
    for tau in ("2/3", "5/7", "3/4", "4/5", "6/7"):
        failed = [
            seed for seed in (11, 12, 13)
            if not check_safety(run(sweep_scenario(seed, tau))).passed
        ]
        outcomes[tau] = failed
        if beta < Fraction(tau) - Fraction(1, 3):
            assert not failed, f"τ={tau} must tolerate β=3/7, failed {failed}"
        if failed:
            assert beta >= Fraction(tau) - Fraction(1, 3), f"τ={tau}"
    assert outcomes["2/3"], "the attack must break the 2/3 baseline"
    assert not outcomes["4/5"] and not outcomes["6/7"]
    broke = sorted(t for t, f in outcomes.items() if f)
    report(
        capsys,
        "threshold sweep",
        True,
        f"split-sign β=3/7 breaks τ ∈ {broke} and nothing above the "
        f"β < τ−1/3 line",
    )
