"""Decision policies: map what an agent sees in a round to an :class:`Action`.

A policy is any callable ``policy(request) -> Action``. The scripted ones are
pure functions of the request (including its seeded rng) and exist for tests,
baselines and stress runs; :class:`LLMPolicy` asks a chat-completions model.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
from dataclasses import dataclass
from functools import partial
from typing import Any, Callable, Mapping, Protocol, Sequence

import httpx
import numpy as np

from infocircle.attention import WeightedMessage
from infocircle.core import (
    ENV,
    NEW_AGENT,
    Action,
    AgentId,
    AgentProfile,
    PolicySpec,
    Recruit,
    RelationshipChange,
    RelationshipKind,
    RelationshipView,
    Send,
    noop,
)

logger = logging.getLogger(__name__)

PROBE_MESSAGE = "Hello, I would like to share some news with you."


@dataclass(frozen=True)
class DecisionRequest:
    self_profile: AgentProfile
    attention: Sequence[WeightedMessage]
    relationships: RelationshipView
    roster_profiles: Mapping[AgentId, AgentProfile]
    round: int
    rng: np.random.Generator

    @property
    def actor(self) -> AgentId:
        return self.self_profile.id


Policy = Callable[[DecisionRequest], Action]


def agent_rng(seed: int, agent: AgentId, round: int) -> np.random.Generator:
    """Independent stream per (run seed, agent, round); immune to scheduling order."""
    return np.random.default_rng(np.random.SeedSequence([seed, agent, round]))


# --- scripted policies -------------------------------------------------------


def decide_silent(request: DecisionRequest) -> Action:
    return noop(request.actor, request.round)


def _forward(request: DecisionRequest, receiver: AgentId) -> Action:
    return Action(
        actor=request.actor,
        round=request.round,
        send=Send(receiver, request.attention[0].content),
    )


def decide_relay_top(request: DecisionRequest) -> Action:
    """Forward the top-weighted message verbatim to the lowest-id positive contact."""
    if not request.attention:
        return noop(request.actor, request.round)
    origin = request.attention[0].sender
    targets = sorted(
        other
        for other, kind in request.relationships.items()
        if kind is RelationshipKind.POSITIVE and other != origin
    )
    if not targets:
        return noop(request.actor, request.round)
    return _forward(request, targets[0])


def decide_epidemic(request: DecisionRequest, p: float) -> Action:
    """With probability ``p`` forward the top message to a uniformly drawn known agent."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"activation probability {p} out of [0,1]")
    if not request.attention or not request.relationships:
        return noop(request.actor, request.round)
    if not request.rng.random() < p:
        return noop(request.actor, request.round)
    known = sorted(request.relationships)
    return _forward(request, known[int(request.rng.integers(len(known)))])


def decide_forced_recruit(request: DecisionRequest) -> Action:
    """Always recruit one new agent and send it something."""
    content = request.attention[0].content if request.attention else PROBE_MESSAGE
    profile = AgentProfile(
        id=0,
        age=30,
        gender="unspecified",
        innate=("recruited",),
        occupation=f"recruit-of-{request.actor}-r{request.round}",
    )
    return Action(
        actor=request.actor,
        round=request.round,
        send=Send(NEW_AGENT, content),
        recruit=Recruit(profile, RelationshipKind.POSITIVE),
    )


# --- LLM-backed policy -------------------------------------------------------


class ConfigurationError(RuntimeError):
    """Missing or invalid settings for an external service."""


class TransportError(RuntimeError):
    pass


class TransportTimeout(TransportError):
    pass


class ResponseFormatError(ValueError):
    pass


class ChatTransport(Protocol):
    def complete(self, messages: list[dict[str, str]]) -> str: ...


def _redact(headers: Mapping[str, str]) -> dict[str, str]:
    return {k: ("***" if k.lower() == "authorization" else v) for k, v in headers.items()}


class HTTPChatTransport:
    """Client for an OpenAI-compatible ``POST {base_url}/chat/completions``."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None,
        *,
        timeout: float = 60.0,
        max_concurrency: int = 8,
        temperature: float = 0.7,
        json_mode: bool = True,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.temperature = temperature
        self.json_mode = json_mode
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self._slots = threading.BoundedSemaphore(max_concurrency)

    @classmethod
    def from_env(cls, params: Mapping[str, Any] | None = None, **kwargs: Any) -> HTTPChatTransport:
        params = dict(params or {})
        api_key = params.pop("api_key", None) or os.environ.get("LLM_API_KEY") or os.environ.get("OPENAI_API_KEY")
        base_url = params.pop("base_url", None) or os.environ.get("LLM_BASE_URL")
        model = params.pop("model", None) or os.environ.get("LLM_MODEL")
        missing = [
            name
            for name, value in (("LLM_API_KEY", api_key), ("LLM_BASE_URL", base_url), ("LLM_MODEL", model))
            if not value
        ]
        if missing:
            raise ConfigurationError(
                "llm policy needs " + ", ".join(missing) + " (environment variables or policy params)"
            )
        return cls(base_url, model, api_key, **{**params, **kwargs})

    def complete(self, messages: list[dict[str, str]]) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body: dict[str, Any] = {
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
        }
        if self.json_mode:
            body["response_format"] = {"type": "json_object"}
        logger.debug("chat request headers=%s body=%s", _redact(headers), json.dumps(body))
        with self._slots:
            try:
                resp = self._client.post(f"{self.base_url}/chat/completions", headers=headers, json=body)
            except httpx.TimeoutException as exc:
                raise TransportTimeout("timeout") from exc
            except httpx.HTTPError as exc:
                raise TransportError(f"transport: {exc}") from exc
        logger.debug("chat response status=%s body=%s", resp.status_code, resp.text)
        if resp.status_code >= 400:
            raise TransportError(f"http {resp.status_code}: {resp.text[:500]}")
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected completion payload: {resp.text[:500]}") from exc

    def close(self) -> None:
        self._client.close()


SYSTEM_PROMPT = """\
You are one member of a small social group. Each round you read the messages \
you received, ordered by an attention weight (higher means more important to \
you), and decide what to do. You may, in the same round: send one message to \
one agent, change how you regard other agents (positive, negative or general), \
and bring one new person into the group by describing them. If you bring in a \
new person you may address your message to them with "to": "new".

Reply with a single JSON object and nothing else:
{
  "send": {"to": <agent id or "new">, "content": "<message>"} or null,
  "relationship_changes": [{"target": <agent id or "new">, "kind": "positive|negative|general"}],
  "new_agent": {"age": <int>, "gender": "<text>", "innate": ["<trait>", ...],
                "occupation": "<text>", "relationship": "positive|negative|general"} or null
}
Use null / an empty list for anything you choose not to do."""


def _describe(profile: AgentProfile) -> str:
    return (
        f"agent {profile.id}: {profile.age}-year-old {profile.gender}, "
        f"{', '.join(profile.innate)}. {profile.occupation}"
    )


def render_prompt(request: DecisionRequest) -> list[dict[str, str]]:
    """Chat messages for one decision.

    Only agents the actor holds a view of (plus this round's senders) are
    described individually; the rest of the roster is summarised by its size so
    prompt length stays bounded as the group grows.
    """
    me = request.self_profile
    lines = [f"Round {request.round}.", "", "Who you are:", _describe(me), ""]
    lines.append("Messages received this round ([sender] (weight) [content]):")
    if request.attention:
        lines.extend(wm.display() for wm in request.attention)
    else:
        lines.append("(none)")
    lines.append("")
    lines.append("How you regard others:")
    if request.relationships:
        lines.extend(f"agent {other}: {kind.value}" for other, kind in sorted(request.relationships.items()))
    else:
        lines.append("(nobody yet)")
    lines.append("")
    shown = set(request.relationships) | {
        wm.sender for wm in request.attention if wm.sender != ENV
    }
    shown.discard(me.id)
    lines.append(f"The group currently has {len(request.roster_profiles)} agents. People you know:")
    for other in sorted(shown):
        profile = request.roster_profiles.get(other)
        if profile is not None:
            lines.append(_describe(profile))
    return [
        {"role": "system", "content": SYSTEM_PROMPT},
        {"role": "user", "content": "\n".join(lines)},
    ]


def prompt_size(messages: Sequence[Mapping[str, str]]) -> int:
    """Rough token count: whitespace-separated words across all messages."""
    return sum(len(m["content"].split()) for m in messages)


_FENCE = re.compile(r"^\s*```[a-zA-Z]*\s*\n?(.*?)\n?\s*```\s*$", re.DOTALL)


def _target(value: Any, where: str) -> AgentId | str:
    if value == NEW_AGENT:
        return NEW_AGENT
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, str) and value.strip().isdigit():
            return int(value)
        raise ResponseFormatError(f"{where} must be an agent id or 'new'")
    return value


def _kind(value: Any, where: str) -> RelationshipKind:
    try:
        return RelationshipKind(str(value).lower())
    except ValueError:
        raise ResponseFormatError(f"{where} has unknown relationship {value!r}") from None


def parse_action(text: str, actor: AgentId, round: int) -> Action:
    """Strictly parse the model's JSON reply into an Action."""
    match = _FENCE.match(text)
    body = match.group(1) if match else text
    try:
        data = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ResponseFormatError(f"not JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ResponseFormatError("top level is not an object")
    unknown = set(data) - {"send", "relationship_changes", "new_agent"}
    if unknown:
        raise ResponseFormatError(f"unexpected fields {sorted(unknown)}")

    send = None
    raw_send = data.get("send")
    if raw_send is not None:
        if not isinstance(raw_send, dict):
            raise ResponseFormatError("send must be an object")
        receiver = raw_send.get("to", raw_send.get("receiver"))
        content = raw_send.get("content")
        if not isinstance(content, str) or not content.strip():
            raise ResponseFormatError("send.content must be non-empty text")
        send = Send(_target(receiver, "send.to"), content)

    changes = []
    raw_changes = data.get("relationship_changes") or []
    if not isinstance(raw_changes, list):
        raise ResponseFormatError("relationship_changes must be a list")
    for i, item in enumerate(raw_changes):
        if not isinstance(item, dict):
            raise ResponseFormatError(f"relationship_changes[{i}] must be an object")
        changes.append(
            RelationshipChange(
                _target(item.get("target"), f"relationship_changes[{i}].target"),
                _kind(item.get("kind"), f"relationship_changes[{i}]"),
            )
        )

    recruit = None
    raw_new = data.get("new_agent")
    if raw_new is not None:
        if not isinstance(raw_new, dict):
            raise ResponseFormatError("new_agent must be an object")
        innate = raw_new.get("innate")
        if isinstance(innate, str):
            innate = [t.strip() for t in innate.split(",")]
        if not isinstance(innate, list):
            raise ResponseFormatError("new_agent.innate must be a list of traits")
        age = raw_new.get("age")
        if isinstance(age, str) and age.strip().isdigit():
            age = int(age)
        profile = AgentProfile(
            id=0,
            age=age,
            gender=str(raw_new.get("gender") or ""),
            innate=tuple(str(t) for t in innate),
            occupation=str(raw_new.get("occupation") or ""),
        )
        problems = profile.problems()
        if problems:
            raise ResponseFormatError("new_agent: " + "; ".join(problems))
        recruit = Recruit(profile, _kind(raw_new.get("relationship", "general"), "new_agent"))

    return Action(actor, round, send=send, relationship_changes=tuple(changes), recruit=recruit)


class LLMPolicy:
    """Decides by asking a chat model; any failure degrades to a logged no-op."""

    def __init__(self, transport: ChatTransport) -> None:
        self.transport = transport

    def __call__(self, request: DecisionRequest) -> Action:
        messages = render_prompt(request)
        try:
            raw = self.transport.complete(messages)
        except TransportTimeout:
            logger.warning("agent %s round %s: llm timeout", request.actor, request.round)
            return noop(request.actor, request.round, "timeout")
        except Exception as exc:  # the run must survive any transport behaviour
            logger.warning("agent %s round %s: %s", request.actor, request.round, exc)
            return noop(request.actor, request.round, f"transport: {exc}")
        try:
            return parse_action(raw, request.actor, request.round)
        except ResponseFormatError as exc:
            logger.warning("agent %s round %s: malformed reply %r", request.actor, request.round, raw)
            return noop(request.actor, request.round, f"malformed: {exc}; raw={raw!r}")


def decide_llm(request: DecisionRequest, transport: ChatTransport) -> Action:
    return LLMPolicy(transport)(request)


# --- registry ---------------------------------------------------------------


def policy_param_errors(spec: PolicySpec) -> list[str]:
    errors = []
    if spec.name == "epidemic":
        p = spec.params.get("p")
        if isinstance(p, bool) or not isinstance(p, (int, float)):
            errors.append("epidemic policy needs numeric parameter p")
        elif not 0.0 <= p <= 1.0:
            errors.append("epidemic p out of [0,1]")
    elif spec.name in ("silent", "relay_top", "forced_recruit") and spec.params:
        errors.append(f"policy {spec.name!r} takes no parameters")
    return errors


def make_policy(spec: PolicySpec | str, *, transport: ChatTransport | None = None, **params: Any) -> Policy:
    if isinstance(spec, str):
        spec = PolicySpec(spec, params)
    errors = policy_param_errors(spec)
    if errors:
        raise ValueError("; ".join(errors))
    if spec.name == "silent":
        return decide_silent
    if spec.name == "relay_top":
        return decide_relay_top
    if spec.name == "forced_recruit":
        return decide_forced_recruit
    if spec.name == "epidemic":
        return partial(decide_epidemic, p=float(spec.params["p"]))
    if spec.name == "llm":
        return LLMPolicy(transport or HTTPChatTransport.from_env(spec.params))
    raise ValueError(f"unknown policy {spec.name!r}")
