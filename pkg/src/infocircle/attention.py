"""Dynamic attention weighting of the messages an agent receives in a round.

Each current-round message starts from a relationship score and is then nudged
by +1/-1 in three passes: which sender wrote the highest-entropy message this
round, whether the sender's message history gained entropy, and whether the
sender is the agent's most frequent past recipient.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from infocircle.core import (
    ENV,
    Action,
    AgentId,
    RelationshipKind,
    RelationshipView,
    Sender,
    sender_key,
)
from infocircle.text import tokenize

# Proportional token counts give equal entropies that may differ in the last ulp.
ENTROPY_EPS = 1e-12


@dataclass(frozen=True)
class ReceivedMessage:
    round: int  # round in which the message became visible to the receiver
    sender: Sender
    content: str


@dataclass(frozen=True)
class AttentionInput:
    self_id: AgentId
    received_messages: Sequence[ReceivedMessage]
    turn_number: int
    past_actions: Sequence[Action] = ()
    relationships: RelationshipView = field(default_factory=dict)


@dataclass(frozen=True)
class WeightedMessage:
    sender: Sender
    weight: int
    content: str

    def display(self) -> str:
        """``[sender] (weight) [content]`` line shown to decision makers."""
        who = "environment" if self.sender == ENV else f"agent {self.sender}"
        return f"[{who}] ({self.weight:+d}) [{self.content}]"


def _entropy_of_tokens(tokens: Iterable[str]) -> float:
    counts = Counter(tokens)
    total = sum(counts.values())
    if total == 0:
        return 0.0
    # Sorted so equal count multisets always sum in the same order.
    h = -sum((c / total) * math.log2(c / total) for c in sorted(counts.values()))
    return h if h > 0.0 else 0.0


def text_entropy(content: str) -> float:
    """Shannon entropy in bits of the token distribution of one text."""
    return _entropy_of_tokens(tokenize(content))


def set_entropy(contents: Iterable[str]) -> float:
    """Entropy in bits of the token distribution pooled over several texts."""
    return _entropy_of_tokens(tok for text in contents for tok in tokenize(text))


def _relationship_score(sender: Sender, relationships: RelationshipView) -> int:
    if sender == ENV:
        return 0
    kind = relationships.get(sender)
    if kind is None:
        return -1
    return 0 if kind is RelationshipKind.GENERAL else 1


def _distinct(contents: Iterable[str]) -> list[str]:
    return list(dict.fromkeys(contents))


def most_frequent_recipient(past_actions: Iterable[Action]) -> AgentId | None:
    """Most common send target among past actions; ties go to the lowest id."""
    counts = Counter(
        a.send.receiver
        for a in past_actions
        if a.send is not None and isinstance(a.send.receiver, int)
    )
    if not counts:
        return None
    return min(counts, key=lambda r: (-counts[r], r))


@dataclass(frozen=True)
class AttentionBreakdown:
    """Per-stage contributions for one current-round message."""

    sender: Sender
    content: str
    relationship: int
    entropy_max: int
    entropy_change: int  # 0 when the sender has no earlier messages
    interaction: int  # 0 when the agent has never sent anything

    @property
    def weight(self) -> int:
        return self.relationship + self.entropy_max + self.entropy_change + self.interaction


def explain_attention(inp: AttentionInput) -> list[AttentionBreakdown]:
    """Stage-by-stage weights for current-round messages, in input order."""
    current = [m for m in inp.received_messages if m.round == inp.turn_number]
    if not current:
        return []

    previous: dict[Sender, list[str]] = defaultdict(list)
    for m in inp.received_messages:
        if m.round < inp.turn_number:
            previous[m.sender].append(m.content)

    relationship = [_relationship_score(m.sender, inp.relationships) for m in current]

    # Highest-entropy current message; its sender is boosted, all others penalised.
    entropies = [text_entropy(m.content) for m in current]
    best = min(range(len(current)), key=lambda i: (-entropies[i], sender_key(current[i].sender)))
    max_sender = current[best].sender
    entropy_max = [1 if m.sender == max_sender else -1 for m in current]

    entropy_change = []
    for m in current:
        history = previous.get(m.sender)
        if not history:
            entropy_change.append(0)
            continue
        before = _distinct(history)
        after = _distinct(history + [m.content])
        entropy_change.append(1 if set_entropy(after) > set_entropy(before) + ENTROPY_EPS else -1)

    if any(a.send is not None for a in inp.past_actions):
        top = most_frequent_recipient(inp.past_actions)
        interaction = [1 if top is not None and m.sender == top else -1 for m in current]
    else:
        interaction = [0] * len(current)

    return [
        AttentionBreakdown(m.sender, m.content, *parts)
        for m, *parts in zip(current, relationship, entropy_max, entropy_change, interaction)
    ]


def compute_attention(inp: AttentionInput) -> list[WeightedMessage]:
    """Weighted current-round messages, heaviest first (ties: ascending sender, ENV last)."""
    out = [WeightedMessage(b.sender, b.weight, b.content) for b in explain_attention(inp)]
    out.sort(key=lambda wm: (-wm.weight, sender_key(wm.sender), wm.content))
    return out
