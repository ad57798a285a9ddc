"""Domain types, scenario configuration and initial network construction.

Everything here is an immutable value or a pure function. The engine owns all
mutable state; this module only describes what a run starts from.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Union

AgentId = int

#: Sender id for environment-injected information. Never a valid AgentId.
ENV = "ENV"
#: Placeholder receiver/target meaning "the agent I am recruiting this round".
NEW_AGENT = "new"

Sender = Union[AgentId, str]

INITIAL_AGENTS: tuple[AgentId, ...] = (1, 2, 3, 4, 5)
HUB_AGENT: AgentId = 2

POLICY_NAMES = ("silent", "relay_top", "epidemic", "forced_recruit", "llm")
PROVIDER_NAMES = ("tf_cosine", "embedding_api")


class RelationshipKind(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    GENERAL = "general"


class Topology(str, Enum):
    WHEEL = "wheel"
    CIRCLE = "circle"


class ContentKind(str, Enum):
    OG = "OG"  # other people's gossip
    PP = "PP"  # public policy
    LC = "LC"  # legal case
    SH = "SH"  # stakeholder information


class Mechanism(str, Enum):
    BC = "BC"  # broadcast to all five agents in round 1
    OA = "OA"  # unicast to the hub agent in round 1
    BCR = "BCR"  # one initial agent per round, rounds 1-5


#: A subjective view: target id -> kind. A missing key means "unknown".
RelationshipView = dict[AgentId, RelationshipKind]


def sender_key(sender: Sender) -> tuple[int, int]:
    """Sort key placing agent ids in ascending order and ENV last."""
    if sender == ENV:
        return (1, 0)
    return (0, int(sender))


@dataclass(frozen=True)
class AgentProfile:
    id: AgentId
    age: int
    gender: str
    innate: tuple[str, ...]
    occupation: str

    def problems(self) -> list[str]:
        errors = []
        if not isinstance(self.age, int) or isinstance(self.age, bool) or self.age <= 0:
            errors.append("age must be a positive integer")
        if not str(self.gender).strip():
            errors.append("gender is empty")
        if not self.innate or any(not str(t).strip() for t in self.innate):
            errors.append("innate traits are empty")
        if not str(self.occupation).strip():
            errors.append("occupation is empty")
        return errors

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "age": self.age,
            "gender": self.gender,
            "innate": list(self.innate),
            "occupation": self.occupation,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> AgentProfile:
        return cls(
            id=data["id"],
            age=data["age"],
            gender=data["gender"],
            innate=tuple(data["innate"]),
            occupation=data["occupation"],
        )


@dataclass(frozen=True)
class InfoContent:
    kind: ContentKind
    text: str


@dataclass(frozen=True)
class PolicySpec:
    name: str = "silent"
    params: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "params": dict(self.params)}


@dataclass(frozen=True)
class SimilaritySpec:
    name: str = "tf_cosine"
    params: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "params": dict(self.params)}


@dataclass(frozen=True)
class ScenarioConfig:
    content: InfoContent
    mechanism: Mechanism
    topology: Topology
    initial_polarity: RelationshipKind
    rounds: int = 10
    rng_seed: int = 0
    similarity_threshold: float = 0.8
    policy: PolicySpec = field(default_factory=PolicySpec)
    similarity: SimilaritySpec = field(default_factory=SimilaritySpec)
    max_recruits_per_agent_per_round: int = 1
    max_sends_per_agent_per_round: int = 1

    @property
    def name(self) -> str:
        return scenario_name(
            self.content.kind, self.mechanism, self.initial_polarity, self.topology
        )

    def with_overrides(self, **changes: Any) -> ScenarioConfig:
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "content": {"kind": self.content.kind.value, "text": self.content.text},
            "mechanism": self.mechanism.value,
            "topology": self.topology.value,
            "initial_polarity": self.initial_polarity.value,
            "rounds": self.rounds,
            "rng_seed": self.rng_seed,
            "similarity_threshold": self.similarity_threshold,
            "policy": self.policy.to_dict(),
            "similarity": self.similarity.to_dict(),
            "max_recruits_per_agent_per_round": self.max_recruits_per_agent_per_round,
            "max_sends_per_agent_per_round": self.max_sends_per_agent_per_round,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ScenarioConfig:
        content = data["content"]
        kind = ContentKind(content["kind"])
        text = content.get("text")
        if text is None:
            text = default_content(kind)
        policy = data.get("policy") or {}
        similarity = data.get("similarity") or {}
        return cls(
            content=InfoContent(kind, text),
            mechanism=Mechanism(data["mechanism"]),
            topology=Topology(data["topology"]),
            initial_polarity=RelationshipKind(data["initial_polarity"]),
            rounds=data.get("rounds", 10),
            rng_seed=data.get("rng_seed", 0),
            similarity_threshold=data.get("similarity_threshold", 0.8),
            policy=PolicySpec(policy.get("name", "silent"), dict(policy.get("params", {}))),
            similarity=SimilaritySpec(
                similarity.get("name", "tf_cosine"), dict(similarity.get("params", {}))
            ),
            max_recruits_per_agent_per_round=data.get("max_recruits_per_agent_per_round", 1),
            max_sends_per_agent_per_round=data.get("max_sends_per_agent_per_round", 1),
        )


@dataclass(frozen=True)
class Message:
    """A delivered or pending message. ``round`` is the round it was sent in."""

    round: int
    sender: Sender
    receiver: AgentId
    content: str

    @property
    def delivery_round(self) -> int:
        # Environment seeds are acted on immediately; peer messages arrive next round.
        return self.round if self.sender == ENV else self.round + 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "round": self.round,
            "sender": self.sender,
            "receiver": self.receiver,
            "content": self.content,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Message:
        return cls(data["round"], data["sender"], data["receiver"], data["content"])


@dataclass(frozen=True)
class Send:
    receiver: Union[AgentId, str]  # an AgentId or NEW_AGENT
    content: str


@dataclass(frozen=True)
class RelationshipChange:
    target: Union[AgentId, str]  # an AgentId or NEW_AGENT
    kind: RelationshipKind


@dataclass(frozen=True)
class Recruit:
    profile: AgentProfile  # profile.id is ignored until the engine assigns one
    relationship: RelationshipKind


@dataclass(frozen=True)
class Action:
    actor: AgentId
    round: int
    send: Send | None = None
    relationship_changes: tuple[RelationshipChange, ...] = ()
    recruit: Recruit | None = None
    failure: str | None = None  # why a policy fell back to a no-op

    @property
    def is_noop(self) -> bool:
        return self.send is None and not self.relationship_changes and self.recruit is None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"actor": self.actor, "round": self.round}
        out["send"] = (
            None
            if self.send is None
            else {"receiver": self.send.receiver, "content": self.send.content}
        )
        out["relationship_changes"] = [
            {"target": c.target, "kind": c.kind.value} for c in self.relationship_changes
        ]
        out["recruit"] = (
            None
            if self.recruit is None
            else {
                "profile": self.recruit.profile.to_dict(),
                "relationship": self.recruit.relationship.value,
            }
        )
        if self.failure is not None:
            out["failure"] = self.failure
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Action:
        send = data.get("send")
        recruit = data.get("recruit")
        return cls(
            actor=data["actor"],
            round=data["round"],
            send=None if send is None else Send(send["receiver"], send["content"]),
            relationship_changes=tuple(
                RelationshipChange(c["target"], RelationshipKind(c["kind"]))
                for c in data.get("relationship_changes", ())
            ),
            recruit=None
            if recruit is None
            else Recruit(
                AgentProfile.from_dict(recruit["profile"]),
                RelationshipKind(recruit["relationship"]),
            ),
            failure=data.get("failure"),
        )


def noop(actor: AgentId, round: int, failure: str | None = None) -> Action:
    return Action(actor=actor, round=round, failure=failure)


# --- bundled data -----------------------------------------------------------


@lru_cache(maxsize=None)
def initial_profiles() -> tuple[AgentProfile, ...]:
    """The five fixed starting agents."""
    raw = json.loads(resources.files("infocircle.data").joinpath("profiles.json").read_text("utf-8"))
    return tuple(AgentProfile.from_dict(item) for item in raw)


@lru_cache(maxsize=None)
def _contents() -> dict[str, str]:
    return json.loads(
        resources.files("infocircle.data").joinpath("contents.json").read_text("utf-8")
    )


def default_content(kind: ContentKind | str) -> str:
    return _contents()[ContentKind(kind).value]


def scenario_name(
    content: ContentKind | str,
    mechanism: Mechanism | str,
    polarity: RelationshipKind | str,
    topology: Topology | str,
) -> str:
    return "-".join(
        (
            ContentKind(content).value,
            Mechanism(mechanism).value,
            RelationshipKind(polarity).value,
            Topology(topology).value,
        )
    )


def make_config(
    content: ContentKind | str = ContentKind.SH,
    mechanism: Mechanism | str = Mechanism.BC,
    polarity: RelationshipKind | str = RelationshipKind.POSITIVE,
    topology: Topology | str = Topology.WHEEL,
    **overrides: Any,
) -> ScenarioConfig:
    kind = ContentKind(content)
    return ScenarioConfig(
        content=InfoContent(kind, default_content(kind)),
        mechanism=Mechanism(mechanism),
        topology=Topology(topology),
        initial_polarity=RelationshipKind(polarity),
        **overrides,
    )


def bundled_scenarios() -> list[str]:
    folder = resources.files("infocircle.data").joinpath("scenarios")
    return sorted(p.name[: -len(".json")] for p in folder.iterdir() if p.name.endswith(".json"))


def bundled_config(name: str) -> ScenarioConfig:
    """Load one of the shipped ``{content}-{mechanism}-{polarity}-{topology}`` configs."""
    stem = name[:-5] if name.endswith(".json") else name
    resource = resources.files("infocircle.data").joinpath("scenarios", f"{stem}.json")
    if not resource.is_file():
        raise FileNotFoundError(f"no bundled scenario named {stem!r}")
    return ScenarioConfig.from_dict(json.loads(resource.read_text("utf-8")))


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a config file; a bare bundled scenario name is also accepted."""
    p = Path(path)
    if not p.exists():
        try:
            return bundled_config(p.name)
        except FileNotFoundError:
            raise FileNotFoundError(f"config not found: {path}") from None
    return ScenarioConfig.from_dict(json.loads(p.read_text("utf-8")))


def save_config(config: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, ensure_ascii=False) + "\n", "utf-8")


# --- network construction ---------------------------------------------------


def topology_edges(topology: Topology | str) -> frozenset[tuple[AgentId, AgentId]]:
    """Undirected edges among the initial agents, each pair stored as (low, high)."""
    topology = Topology(topology)
    if topology is Topology.WHEEL:
        pairs: Iterable[tuple[int, int]] = ((HUB_AGENT, a) for a in INITIAL_AGENTS if a != HUB_AGENT)
    else:
        n = len(INITIAL_AGENTS)
        pairs = ((INITIAL_AGENTS[i], INITIAL_AGENTS[(i + 1) % n]) for i in range(n))
    return frozenset((min(a, b), max(a, b)) for a, b in pairs)


def init_relationships(
    topology: Topology | str, polarity: RelationshipKind | str
) -> dict[AgentId, RelationshipView]:
    polarity = RelationshipKind(polarity)
    if polarity is RelationshipKind.GENERAL:
        raise ValueError("initial polarity must be positive or negative")
    edges = topology_edges(topology)
    views: dict[AgentId, RelationshipView] = {}
    for owner in INITIAL_AGENTS:
        views[owner] = {
            other: polarity if (min(owner, other), max(owner, other)) in edges else RelationshipKind.GENERAL
            for other in INITIAL_AGENTS
            if other != owner
        }
    return views


def validate_config(config: ScenarioConfig) -> list[str]:
    """Every problem with ``config``; an empty list means it is usable."""
    errors: list[str] = []
    if not config.content.text.strip():
        errors.append("content text is empty")
    if not isinstance(config.rounds, int) or config.rounds < 1:
        errors.append("rounds must be ≥ 1")
    if not 0.0 <= config.similarity_threshold <= 1.0:
        errors.append("threshold out of [0,1]")
    if config.initial_polarity is RelationshipKind.GENERAL:
        errors.append("initial polarity must be positive or negative")
    if not isinstance(config.rng_seed, int) or not 0 <= config.rng_seed < 2**64:
        errors.append("rng_seed must be a 64-bit non-negative integer")
    if config.max_sends_per_agent_per_round != 1:
        errors.append("max_sends_per_agent_per_round is fixed at 1")
    if config.max_recruits_per_agent_per_round != 1:
        errors.append("max_recruits_per_agent_per_round is fixed at 1")
    if config.policy.name not in POLICY_NAMES:
        errors.append(f"unknown policy {config.policy.name!r}")
    else:
        from infocircle.policy import policy_param_errors

        errors.extend(policy_param_errors(config.policy))
    if config.similarity.name not in PROVIDER_NAMES:
        errors.append(f"unknown similarity provider {config.similarity.name!r}")
    return errors
