"""Scenario files: everything a simulation run needs, in one validated object.

A scenario is plain JSON. Weights and thresholds are written as fraction
strings ("2/3"), never floats, so configs stay exact and replays stay
byte-identical. Two modes exist: "lisk-bft" runs the header-encoded
protocol with uniform delegates and the fixed quorum rule, while
"general-framework" runs explicit approve messages with per-proposer
weights and subjective decision thresholds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .blocktree import ProposerId
from .consensus import ProposerSet
from .dynamics import ChangeEvent
from .errors import InvalidScenarioError
from .liskbft import LiskConfig

GENERAL = "general-framework"
LISK = "lisk-bft"
MODES = (GENERAL, LISK)

BEHAVIOR_KINDS = {
    GENERAL: ("honest", "crashed", "split-sign", "silent"),
    LISK: (
        "honest",
        "crashed",
        "double-propose",
        "understate-previous",
        "withhold",
        "split-brain",
    ),
}

ONE_THIRD = Fraction(1, 3)


def parse_fraction(value, where: str) -> Fraction:
    """Exact fraction from "a/b" or an integer; floats are refused."""
    if isinstance(value, bool) or isinstance(value, float):
        raise InvalidScenarioError(f"{where}: use a fraction string, not {value!r}")
    try:
        if isinstance(value, int):
            return Fraction(value)
        return Fraction(value)
    except (ValueError, ZeroDivisionError, TypeError):
        raise InvalidScenarioError(f"{where}: cannot read {value!r} as a fraction")


def format_fraction(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


@dataclass(frozen=True)
class ClockConfig:
    delta: int = 1
    gst: int = 0
    slot_duration: Optional[int] = None  # defaults to 2*delta + 1

    def __post_init__(self):
        if self.delta < 0 or self.gst < 0:
            raise InvalidScenarioError("clock: delta and gst must be non-negative")
        if self.slot_duration is None:
            object.__setattr__(self, "slot_duration", 2 * self.delta + 1)
        if self.slot_duration < max(2 * self.delta + 1, 1):
            raise InvalidScenarioError(
                "clock: a slot must outlast two network delays"
            )


@dataclass(frozen=True)
class StopCondition:
    max_height: Optional[int] = None
    max_ticks: Optional[int] = None

    def __post_init__(self):
        if self.max_height is None and self.max_ticks is None:
            raise InvalidScenarioError("stop: give max_height or max_ticks")
        for name, value in (("max_height", self.max_height), ("max_ticks", self.max_ticks)):
            if value is not None and value < 1:
                raise InvalidScenarioError(f"stop: {name} must be positive")


@dataclass(frozen=True)
class Behavior:
    kind: str = "honest"
    # variant knobs, e.g. {"delay_slots": 3} for withhold
    params: tuple = ()

    def param(self, name, default=None):
        return dict(self.params).get(name, default)


@dataclass
class Scenario:
    mode: str
    seed: int = 0
    clock: ClockConfig = field(default_factory=ClockConfig)
    stop: StopCondition = field(default_factory=lambda: StopCondition(max_height=50))
    proposer_count: int = 101
    weights: Optional[dict[ProposerId, Fraction]] = None
    default_threshold: Fraction = Fraction(2, 3)
    thresholds: dict[ProposerId, Fraction] = field(default_factory=dict)
    config: Optional[LiskConfig] = None
    changes: tuple[ChangeEvent, ...] = ()
    slot_overrides: Optional[dict[int, tuple[ProposerId, ...]]] = None
    behaviors: dict[ProposerId, Behavior] = field(default_factory=dict)
    partition: Optional[tuple[frozenset[ProposerId], ...]] = None
    drop_rate: Fraction = Fraction(0)
    pre_gst_delay: Optional[int] = None  # defaults to delta

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------------

    def validate(self) -> None:
        if self.mode not in MODES:
            raise InvalidScenarioError(f"mode must be one of {MODES}, not {self.mode!r}")
        if self.proposer_count < 1:
            raise InvalidScenarioError("proposers: count must be positive")
        ids = range(self.proposer_count)

        if self.mode == LISK:
            if self.weights is not None:
                raise InvalidScenarioError("lisk-bft mode fixes uniform weights")
            if self.thresholds:
                raise InvalidScenarioError("lisk-bft mode fixes the quorum rule")
            if self.config is None:
                self.config = LiskConfig(
                    proposer_count=self.proposer_count,
                    blocks_per_round=self.proposer_count,
                    vote_window=3 * self.proposer_count,
                )
            if self.config.proposer_count != self.proposer_count:
                raise InvalidScenarioError("config and proposers disagree on count")
        else:
            if self.config is not None:
                raise InvalidScenarioError("general-framework mode takes no lisk config")
            if self.changes:
                raise InvalidScenarioError(
                    "set changes are a lisk-bft feature; general runs are static"
                )
            for where, tau in [("default", self.default_threshold)] + sorted(
                self.thresholds.items()
            ):
                if not ONE_THIRD < tau <= 1:
                    raise InvalidScenarioError(
                        f"thresholds[{where}]: {tau} outside (1/3, 1]"
                    )

        if self.weights is not None:
            if set(self.weights) != set(ids):
                raise InvalidScenarioError("weights must cover proposers 0..n-1 exactly")
            ProposerSet(self.weights)  # validates positivity and the unit sum

        for pid in self.behaviors:
            if pid not in ids:
                raise InvalidScenarioError(f"behaviors: unknown proposer {pid}")
        for pid, behavior in self.behaviors.items():
            if behavior.kind not in BEHAVIOR_KINDS[self.mode]:
                raise InvalidScenarioError(
                    f"behaviors[{pid}]: {behavior.kind!r} is not a {self.mode} behavior"
                )
        for pid in self.thresholds:
            if pid not in ids:
                raise InvalidScenarioError(f"thresholds: unknown proposer {pid}")

        if self.partition is not None:
            seen: set[ProposerId] = set()
            if not self.partition:
                raise InvalidScenarioError("partition: needs at least one group")
            for group in self.partition:
                if not group:
                    raise InvalidScenarioError("partition: empty group")
                for pid in group:
                    if pid not in ids:
                        raise InvalidScenarioError(f"partition: unknown proposer {pid}")
                overlap = seen & group & self.honest_ids()
                if overlap:
                    raise InvalidScenarioError(
                        f"partition: honest proposers {sorted(overlap)} in two groups"
                    )
                seen |= group
            missing = self.honest_ids() - seen
            if missing:
                raise InvalidScenarioError(
                    f"partition: honest proposers {sorted(missing)} in no group"
                )

        if not 0 <= self.drop_rate < 1:
            raise InvalidScenarioError("pre_gst: drop_rate outside [0, 1)")
        if self.pre_gst_delay is None:
            self.pre_gst_delay = self.clock.delta
        if self.pre_gst_delay < 0:
            raise InvalidScenarioError("pre_gst: delay must be non-negative")

    # ------------------------------------------------------------------

    def behavior(self, pid: ProposerId) -> Behavior:
        return self.behaviors.get(pid, Behavior())

    def honest_ids(self) -> frozenset[ProposerId]:
        """Honest and online: neither byzantine nor crashed."""
        return frozenset(
            pid
            for pid in range(self.proposer_count)
            if self.behavior(pid).kind == "honest"
        )

    def crashed_ids(self) -> frozenset[ProposerId]:
        return frozenset(
            pid
            for pid in range(self.proposer_count)
            if self.behavior(pid).kind == "crashed"
        )

    def byzantine_ids(self) -> frozenset[ProposerId]:
        return frozenset(
            pid
            for pid in range(self.proposer_count)
            if self.behavior(pid).kind not in ("honest", "crashed")
        )

    def proposer_set(self) -> ProposerSet:
        if self.weights is not None:
            return ProposerSet(self.weights)
        return ProposerSet.uniform(self.proposer_count)

    def threshold(self, pid: ProposerId) -> Fraction:
        return self.thresholds.get(pid, self.default_threshold)

    def groups_of(self, pid: ProposerId) -> tuple[int, ...]:
        """Pre-GST connectivity: which partition groups a proposer belongs
        to. Byzantine proposers absent from every group bridge all of them."""
        if self.partition is None:
            return (0,)
        mine = tuple(i for i, group in enumerate(self.partition) if pid in group)
        if not mine and pid in self.byzantine_ids():
            return tuple(range(len(self.partition)))
        return mine

    # ------------------------------------------------------------------
    # Serialization
    # ------------------------------------------------------------------

    def to_dict(self) -> dict:
        doc: dict = {
            "mode": self.mode,
            "seed": self.seed,
            "clock": {
                "delta": self.clock.delta,
                "gst": self.clock.gst,
                "slot_duration": self.clock.slot_duration,
            },
            "stop": {},
            "proposers": {"count": self.proposer_count},
        }
        if self.stop.max_height is not None:
            doc["stop"]["max_height"] = self.stop.max_height
        if self.stop.max_ticks is not None:
            doc["stop"]["max_ticks"] = self.stop.max_ticks
        if self.weights is not None:
            doc["proposers"]["weights"] = {
                str(pid): format_fraction(w) for pid, w in sorted(self.weights.items())
            }
        if self.mode == GENERAL:
            doc["thresholds"] = {"default": format_fraction(self.default_threshold)}
            doc["thresholds"].update(
                {str(pid): format_fraction(t) for pid, t in sorted(self.thresholds.items())}
            )
        if self.config is not None:
            doc["config"] = {
                "blocks_per_round": self.config.blocks_per_round,
                "vote_window": self.config.vote_window,
                "activation_delay": self.config.activation_delay,
            }
        if self.changes:
            doc["changes"] = [
                {
                    "height": e.height,
                    "kind": e.kind,
                    "proposer": e.proposer,
                    **({"weight": format_fraction(e.weight)} if e.weight is not None else {}),
                    **({"carrier": e.carrier} if e.carrier is not None else {}),
                }
                for e in self.changes
            ]
        if self.slot_overrides:
            doc["slot_overrides"] = {
                str(r): list(order) for r, order in sorted(self.slot_overrides.items())
            }
        if self.behaviors:
            doc["behaviors"] = {
                str(pid): (
                    b.kind if not b.params else {"kind": b.kind, **dict(b.params)}
                )
                for pid, b in sorted(self.behaviors.items())
            }
        pre_gst = {}
        if self.partition is not None:
            pre_gst["partition"] = [sorted(group) for group in self.partition]
        if self.drop_rate:
            pre_gst["drop_rate"] = format_fraction(self.drop_rate)
        if self.pre_gst_delay != self.clock.delta:
            pre_gst["delay"] = self.pre_gst_delay
        if pre_gst:
            doc["pre_gst"] = pre_gst
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Scenario":
        if not isinstance(doc, Mapping):
            raise InvalidScenarioError("scenario must be an object")
        known = {
            "mode",
            "seed",
            "clock",
            "stop",
            "proposers",
            "thresholds",
            "config",
            "changes",
            "slot_overrides",
            "behaviors",
            "pre_gst",
        }
        unknown = set(doc) - known
        if unknown:
            raise InvalidScenarioError(f"unknown scenario keys: {sorted(unknown)}")

        def check_keys(section, allowed):
            extra = set(doc.get(section, {})) - allowed
            if extra:
                raise InvalidScenarioError(
                    f"{section}: unknown keys {sorted(extra)}"
                )

        check_keys("clock", {"delta", "gst", "slot_duration"})
        check_keys("stop", {"max_height", "max_ticks"})
        check_keys("proposers", {"count", "weights"})
        check_keys("config", {"blocks_per_round", "vote_window", "activation_delay"})
        check_keys("pre_gst", {"partition", "drop_rate", "delay"})

        mode = doc.get("mode")
        clock_doc = doc.get("clock", {})
        clock = ClockConfig(
            delta=int(clock_doc.get("delta", 1)),
            gst=int(clock_doc.get("gst", 0)),
            slot_duration=(
                int(clock_doc["slot_duration"]) if "slot_duration" in clock_doc else None
            ),
        )
        stop_doc = doc.get("stop", {"max_height": 50})
        stop = StopCondition(
            max_height=stop_doc.get("max_height"), max_ticks=stop_doc.get("max_ticks")
        )

        proposers = doc.get("proposers", {})
        count = int(proposers.get("count", 101))
        weights = None
        if "weights" in proposers:
            weights = {
                int(pid): parse_fraction(w, f"weights[{pid}]")
                for pid, w in proposers["weights"].items()
            }

        default_threshold = Fraction(2, 3)
        thresholds: dict[int, Fraction] = {}
        if "thresholds" in doc and mode == LISK:
            raise InvalidScenarioError("lisk-bft mode fixes the quorum rule")
        for key, value in doc.get("thresholds", {}).items():
            tau = parse_fraction(value, f"thresholds[{key}]")
            if key == "default":
                default_threshold = tau
            else:
                thresholds[int(key)] = tau

        config = None
        if "config" in doc:
            c = doc["config"]
            config = LiskConfig(
                proposer_count=count,
                blocks_per_round=int(c.get("blocks_per_round", count)),
                vote_window=int(c.get("vote_window", 3 * count)),
                activation_delay=int(c.get("activation_delay", 2)),
            )

        changes = []
        for i, e in enumerate(doc.get("changes", [])):
            try:
                weight = e.get("weight")
                if weight is None and e.get("kind") in ("join", "weight-change") and mode == LISK:
                    weight = Fraction(1, count)
                elif weight is not None:
                    weight = parse_fraction(weight, f"changes[{i}].weight")
                carrier = e.get("carrier")
                changes.append(
                    ChangeEvent(
                        height=int(e["height"]),
                        kind=e["kind"],
                        proposer=int(e["proposer"]),
                        weight=weight,
                        carrier=None if carrier is None else int(carrier),
                    )
                )
            except KeyError as err:
                raise InvalidScenarioError(f"changes[{i}]: missing {err}") from err

        slot_overrides = None
        if "slot_overrides" in doc:
            slot_overrides = {
                int(r): tuple(int(p) for p in order)
                for r, order in doc["slot_overrides"].items()
            }

        behaviors = {}
        for pid, spec in doc.get("behaviors", {}).items():
            if isinstance(spec, str):
                behaviors[int(pid)] = Behavior(kind=spec)
            elif isinstance(spec, Mapping) and "kind" in spec:
                params = tuple(sorted((k, v) for k, v in spec.items() if k != "kind"))
                behaviors[int(pid)] = Behavior(kind=spec["kind"], params=params)
            else:
                raise InvalidScenarioError(f"behaviors[{pid}]: unreadable spec")

        pre_gst = doc.get("pre_gst", {})
        partition = None
        if "partition" in pre_gst:
            partition = tuple(frozenset(int(p) for p in g) for g in pre_gst["partition"])
        drop_rate = parse_fraction(pre_gst.get("drop_rate", 0), "pre_gst.drop_rate")
        delay = pre_gst.get("delay")

        return cls(
            mode=mode,
            seed=int(doc.get("seed", 0)),
            clock=clock,
            stop=stop,
            proposer_count=count,
            weights=weights,
            default_threshold=default_threshold,
            thresholds=thresholds,
            config=config,
            changes=tuple(changes),
            slot_overrides=slot_overrides,
            behaviors=behaviors,
            partition=partition,
            drop_rate=drop_rate,
            pre_gst_delay=None if delay is None else int(delay),
        )

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as err:
            raise InvalidScenarioError(f"scenario is not valid JSON: {err}") from err
        return cls.from_dict(doc)

    @classmethod
    def from_file(cls, path) -> "Scenario":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_json(handle.read())
