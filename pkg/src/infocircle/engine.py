"""Round-based simulation loop.

A run has an initial stage (five agents, topology-derived relationships) and an
interaction stage of ``config.rounds`` rounds. Each round:

1. the environment seeds information according to the distribution mechanism;
2. every agent present at the start of the round gets its attention-weighted
   inbox and is asked for an :class:`~infocircle.core.Action` (ascending id);
3. actions are validated against the per-round caps and applied in ascending
   actor order; recruits join with id ``max + 1``;
4. a ``round_boundary`` event closes the round.

Peer messages become visible one round after they are sent; environment seeds
are visible in the round they are injected.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping, Sequence

from infocircle.attention import AttentionInput, ReceivedMessage, compute_attention
from infocircle.core import (
    ENV,
    HUB_AGENT,
    INITIAL_AGENTS,
    NEW_AGENT,
    Action,
    AgentId,
    AgentProfile,
    Mechanism,
    Message,
    Recruit,
    RelationshipChange,
    RelationshipKind,
    RelationshipView,
    ScenarioConfig,
    Send,
    init_relationships,
    initial_profiles,
    noop,
    validate_config,
)
from infocircle.policy import DecisionRequest, Policy, agent_rng, decide_silent

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EVENT_KINDS = (
    "seed",
    "decision",
    "message",
    "relationship_change",
    "recruit",
    "rejection",
    "round_boundary",
)


class ConfigError(ValueError):
    pass


@dataclass
class SimulationState:
    round: int  # the round about to be played; rounds + 1 once finished
    roster: dict[AgentId, AgentProfile]
    views: dict[AgentId, RelationshipView]
    lineage: dict[AgentId, AgentId]
    rng_seed: int
    message_log: list[Message] = field(default_factory=list)
    action_log: list[Action] = field(default_factory=list)
    events: list[dict[str, Any]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._inbox: dict[AgentId, list[Message]] = defaultdict(list)
        self._actions: dict[AgentId, list[Action]] = defaultdict(list)
        for m in self.message_log:
            self._inbox[m.receiver].append(m)
        for a in self.action_log:
            self._actions[a.actor].append(a)

    def add_message(self, message: Message) -> None:
        self.message_log.append(message)
        self._inbox[message.receiver].append(message)

    def add_action(self, action: Action) -> None:
        self.action_log.append(action)
        self._actions[action.actor].append(action)

    def inbox(self, agent: AgentId) -> Sequence[Message]:
        return self._inbox.get(agent, ())

    def actions_of(self, agent: AgentId) -> Sequence[Action]:
        return self._actions.get(agent, ())

    def next_agent_id(self) -> AgentId:
        return max(self.roster) + 1

    def summary(self) -> dict[str, Any]:
        return final_summary(self.views, self.lineage)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SimulationState):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def to_dict(self) -> dict[str, Any]:
        return {
            "round": self.round,
            "rng_seed": self.rng_seed,
            "roster": [p.to_dict() for _, p in sorted(self.roster.items())],
            "views": [
                [owner, [[t, k.value] for t, k in view.items()]]
                for owner, view in sorted(self.views.items())
            ],
            "lineage": [[a, r] for a, r in sorted(self.lineage.items())],
            "message_log": [m.to_dict() for m in self.message_log],
            "action_log": [a.to_dict() for a in self.action_log],
            "events": self.events,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SimulationState:
        return cls(
            round=data["round"],
            rng_seed=data["rng_seed"],
            roster={p["id"]: AgentProfile.from_dict(p) for p in data["roster"]},
            views={
                owner: {t: RelationshipKind(k) for t, k in entries}
                for owner, entries in data["views"]
            },
            lineage={a: r for a, r in data["lineage"]},
            message_log=[Message.from_dict(m) for m in data["message_log"]],
            action_log=[Action.from_dict(a) for a in data["action_log"]],
            events=list(data["events"]),
        )


@dataclass
class RunLog:
    config: ScenarioConfig
    events: list[dict[str, Any]]
    final_state_summary: dict[str, Any]

    def of_kind(self, kind: str) -> list[dict[str, Any]]:
        return [e for e in self.events if e["kind"] == kind]


def final_summary(views: Mapping[AgentId, RelationshipView], lineage: Mapping[AgentId, AgentId]) -> dict[str, Any]:
    return {
        "roster_size": len(lineage),
        "views": {
            str(owner): {str(t): k.value for t, k in sorted(view.items())}
            for owner, view in sorted(views.items())
        },
        "lineage": {str(a): r for a, r in sorted(lineage.items())},
    }


def initial_state(config: ScenarioConfig) -> SimulationState:
    return SimulationState(
        round=1,
        roster={p.id: p for p in initial_profiles()},
        views=init_relationships(config.topology, config.initial_polarity),
        lineage={a: a for a in INITIAL_AGENTS},
        rng_seed=config.rng_seed,
    )


def seed_information(state: SimulationState, config: ScenarioConfig) -> list[Message]:
    """Environment messages injected at the start of ``state.round``."""
    r = state.round
    text = config.content.text
    if config.mechanism is Mechanism.BC:
        receivers: Sequence[AgentId] = INITIAL_AGENTS if r == 1 else ()
    elif config.mechanism is Mechanism.OA:
        receivers = (HUB_AGENT,) if r == 1 else ()
    else:
        receivers = (INITIAL_AGENTS[r - 1],) if r <= len(INITIAL_AGENTS) else ()
    return [Message(r, ENV, receiver, text) for receiver in receivers]


def visible_messages(state: SimulationState, agent: AgentId, round: int | None = None) -> AttentionInput:
    """Everything ``agent`` has been delivered up to and including ``round``."""
    round = state.round if round is None else round
    received = [
        ReceivedMessage(m.delivery_round, m.sender, m.content)
        for m in state.inbox(agent)
        if m.delivery_round <= round
    ]
    return AttentionInput(
        self_id=agent,
        received_messages=received,
        turn_number=round,
        past_actions=[a for a in state.actions_of(agent) if a.round < round],
        relationships=dict(state.views.get(agent, {})),
    )


@dataclass
class RoundBudget:
    """Per-round bookkeeping for caps and recruit id assignment."""

    next_id: AgentId
    sent: set[AgentId] = field(default_factory=set)
    recruited: set[AgentId] = field(default_factory=set)


@dataclass(frozen=True)
class Rejection:
    actor: AgentId
    round: int
    part: str
    reason: str

    def to_event(self) -> dict[str, Any]:
        return {
            "kind": "rejection",
            "round": self.round,
            "actor": self.actor,
            "part": self.part,
            "reason": self.reason,
        }


def validate_action(
    state: SimulationState, action: Action, budget: RoundBudget | None = None
) -> tuple[Action, list[Rejection]]:
    """Strip the invalid parts of ``action``.

    Returns the accepted remainder (with ``NEW_AGENT`` placeholders resolved to
    the assigned id) and one rejection per dropped part. ``budget`` carries the
    caps across several actions in the same round.
    """
    if budget is None:
        budget = RoundBudget(state.next_agent_id())
    actor, r = action.actor, state.round
    rejections: list[Rejection] = []

    def reject(part: str, reason: str) -> None:
        rejections.append(Rejection(actor, r, part, reason))

    if actor not in state.roster:
        reject("action", "unknown actor")
        return noop(actor, r), rejections
    if action.round != r:
        reject("action", f"action is for round {action.round}, not {r}")
        return noop(actor, r), rejections

    recruit = None
    new_id = None
    if action.recruit is not None:
        problems = action.recruit.profile.problems()
        if actor in budget.recruited:
            reject("recruit", "recruit cap reached this round")
        elif problems:
            reject("recruit", "invalid profile: " + "; ".join(problems))
        else:
            new_id = budget.next_id
            budget.next_id += 1
            budget.recruited.add(actor)
            p = action.recruit.profile
            recruit = Recruit(
                AgentProfile(new_id, p.age, p.gender, p.innate, p.occupation),
                action.recruit.relationship,
            )

    def resolve(target: Any, part: str) -> AgentId | None:
        if target == NEW_AGENT:
            if new_id is None:
                reject(part, "no accepted recruit to address")
                return None
            return new_id
        if isinstance(target, bool) or not isinstance(target, int) or target not in state.roster:
            reject(part, f"unknown {'receiver' if part == 'send' else 'target'} {target!r}")
            return None
        if target == actor:
            reject(part, "cannot target self")
            return None
        return target

    changes = []
    for change in action.relationship_changes:
        target = resolve(change.target, "relationship_change")
        if target is not None:
            changes.append(RelationshipChange(target, change.kind))

    send = None
    if action.send is not None:
        if actor in budget.sent:
            reject("send", "send cap reached this round")
        elif not isinstance(action.send.content, str) or not action.send.content.strip():
            reject("send", "empty content")
        else:
            receiver = resolve(action.send.receiver, "send")
            if receiver is not None:
                send = Send(receiver, action.send.content)
                budget.sent.add(actor)

    accepted = Action(actor, r, send=send, relationship_changes=tuple(changes), recruit=recruit)
    return accepted, rejections


def apply_actions(state: SimulationState, actions: Sequence[Action]) -> list[dict[str, Any]]:
    """Apply validated actions in ascending actor order; returns the emitted events."""
    events: list[dict[str, Any]] = []
    r = state.round
    for action in sorted(actions, key=lambda a: a.actor):
        actor = action.actor
        if action.recruit is not None:
            profile, kind = action.recruit.profile, action.recruit.relationship
            state.roster[profile.id] = profile
            state.lineage[profile.id] = actor
            state.views[actor][profile.id] = kind
            state.views[profile.id] = {actor: kind}
            events.append(
                {
                    "kind": "recruit",
                    "round": r,
                    "recruiter": actor,
                    "agent": profile.id,
                    "relationship": kind.value,
                    "profile": profile.to_dict(),
                }
            )
        for change in action.relationship_changes:
            old = state.views[actor].get(change.target)
            state.views[actor][change.target] = change.kind
            events.append(
                {
                    "kind": "relationship_change",
                    "round": r,
                    "owner": actor,
                    "target": change.target,
                    "old": None if old is None else old.value,
                    "new": change.kind.value,
                }
            )
        if action.send is not None:
            message = Message(r, actor, action.send.receiver, action.send.content)
            state.add_message(message)
            events.append({"kind": "message", **message.to_dict()})
        state.add_action(action)
    return events


class Simulation:
    """Stepwise driver; :func:`run` is the one-call convenience wrapper."""

    def __init__(
        self,
        config: ScenarioConfig,
        policy: Policy | None = None,
        *,
        state: SimulationState | None = None,
        max_workers: int = 1,
        store: Any = None,
    ) -> None:
        errors = validate_config(config)
        if errors:
            raise ConfigError("; ".join(errors))
        self.config = config
        self.policy = policy or decide_silent
        self.state = state if state is not None else initial_state(config)
        self.max_workers = max_workers
        self.store = store

    @property
    def finished(self) -> bool:
        return self.state.round > self.config.rounds

    def _request(self, agent: AgentId) -> DecisionRequest:
        st = self.state
        attention = compute_attention(visible_messages(st, agent))
        return DecisionRequest(
            self_profile=st.roster[agent],
            attention=attention,
            relationships=dict(st.views[agent]),
            roster_profiles=MappingProxyType(st.roster),
            round=st.round,
            rng=agent_rng(st.rng_seed, agent, st.round),
        )

    def _decide(self, agent: AgentId) -> Action:
        r = self.state.round
        try:
            action = self.policy(self._request(agent))
        except Exception as exc:  # a misbehaving policy must not abort the run
            logger.warning("policy failed for agent %s in round %s: %s", agent, r, exc)
            return noop(agent, r, f"policy error: {exc}")
        if not isinstance(action, Action) or action.actor != agent or action.round != r:
            return noop(agent, r, f"policy returned an invalid action: {action!r}")
        return action

    def step(self) -> None:
        if self.finished:
            raise RuntimeError("simulation already finished")
        st = self.state
        r = st.round
        events = st.events

        for message in seed_information(st, self.config):
            st.add_message(message)
            events.append({"kind": "seed", **message.to_dict()})

        actors = sorted(st.roster)
        if self.max_workers > 1:
            with ThreadPoolExecutor(self.max_workers) as pool:
                proposed = list(pool.map(self._decide, actors))
        else:
            proposed = [self._decide(a) for a in actors]

        budget = RoundBudget(st.next_agent_id())
        accepted = []
        for action in proposed:
            events.append({"kind": "decision", "round": r, "actor": action.actor, "action": action.to_dict()})
        for action in proposed:
            ok, rejections = validate_action(st, action, budget)
            events.extend(rej.to_event() for rej in rejections)
            accepted.append(ok)

        events.extend(apply_actions(st, accepted))
        sent = sum(1 for a in accepted if a.send is not None)
        events.append({"kind": "round_boundary", "round": r, "roster_size": len(st.roster), "messages_sent": sent})
        if self.store is not None:
            self._mirror(accepted)
        st.round += 1

    def _mirror(self, accepted: Sequence[Action]) -> None:
        st = self.state
        touched = set()
        for a in accepted:
            if a.is_noop:
                continue
            touched.add(a.actor)
            if a.send is not None:
                touched.add(a.send.receiver)
            if a.recruit is not None:
                touched.add(a.recruit.profile.id)
        self.store.put_many(
            {
                f"agent:{agent}": {
                    "profile": st.roster[agent].to_dict(),
                    "relationships": {str(t): k.value for t, k in sorted(st.views[agent].items())},
                    "received": len(st.inbox(agent)),
                }
                for agent in sorted(touched)
            }
        )
        self.store.put("last_round", st.round)

    def run(self) -> RunLog:
        while not self.finished:
            self.step()
        return self.log()

    def log(self) -> RunLog:
        return RunLog(self.config, list(self.state.events), self.state.summary())


def run(
    config: ScenarioConfig,
    policy: Policy | None = None,
    *,
    max_workers: int = 1,
    store: Any = None,
) -> RunLog:
    return Simulation(config, policy, max_workers=max_workers, store=store).run()


def replay(config: ScenarioConfig, events: Sequence[Mapping[str, Any]]) -> dict[str, Any]:
    """Rebuild the final-state summary from the initial stage plus logged events."""
    views = init_relationships(config.topology, config.initial_polarity)
    lineage = {a: a for a in INITIAL_AGENTS}
    for e in events:
        if e["kind"] == "recruit":
            kind = RelationshipKind(e["relationship"])
            lineage[e["agent"]] = e["recruiter"]
            views[e["recruiter"]][e["agent"]] = kind
            views[e["agent"]] = {e["recruiter"]: kind}
        elif e["kind"] == "relationship_change":
            views[e["owner"]][e["target"]] = RelationshipKind(e["new"])
    return final_summary(views, lineage)
