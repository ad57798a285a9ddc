"""
Weighting an inbox with dynamic attention
=========================================

Agent 1 receives two messages in round 3 and we look at how each one is scored.
"""

from infocircle.attention import AttentionInput, ReceivedMessage, compute_attention, explain_attention, text_entropy
from infocircle.core import Action, RelationshipKind, Send

# Agent 1 likes agent 2, is neutral about agent 3 and has never heard of agent 4.
relationships = {2: RelationshipKind.POSITIVE, 3: RelationshipKind.GENERAL}

inbox = [
    ReceivedMessage(2, 2, "project funding"),  # arrived last round
    ReceivedMessage(3, 2, "project funding update tomorrow"),
    ReceivedMessage(3, 4, "hi"),
]

# Agent 1 wrote to agent 2 twice and agent 3 once in earlier rounds.
past = [Action(1, 1, send=Send(2, "ok")), Action(1, 2, send=Send(2, "sure")), Action(1, 2, send=Send(3, "hey"))]

inp = AttentionInput(self_id=1, received_messages=inbox, turn_number=3, past_actions=past, relationships=relationships)

print("token entropy of each current message:")
for m in inbox[1:]:
    print(f"  {m.content!r}: {text_entropy(m.content):.3f} bits")

print("\nstage by stage:")
for b in explain_attention(inp):
    print(f"  from {b.sender}: relationship {b.relationship:+d}, highest entropy {b.entropy_max:+d}, "
          f"history entropy {b.entropy_change:+d}, frequent contact {b.interaction:+d} -> {b.weight:+d}")

# This is what a decision maker sees, heaviest first.
print("\nas shown to the agent:")
for wm in compute_attention(inp):
    print("  " + wm.display())
