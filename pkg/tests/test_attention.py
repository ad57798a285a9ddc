from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infocircle.attention import (
    AttentionInput,
    ReceivedMessage,
    WeightedMessage,
    compute_attention,
    explain_attention,
    most_frequent_recipient,
    set_entropy,
    text_entropy,
)
from infocircle.core import ENV, Action, RelationshipKind, Send

P, N, G = RelationshipKind.POSITIVE, RelationshipKind.NEGATIVE, RelationshipKind.GENERAL
B, C, D = 2, 3, 4


@pytest.mark.parametrize(
    "text, bits",
    [("go go go", 0.0), ("alpha beta", 1.0), ("", 0.0), ("Alpha, BETA!", 1.0), ("a b c d", 2.0)],
)
def test_text_entropy(text, bits):
    assert text_entropy(text) == pytest.approx(bits, abs=1e-12)


@pytest.mark.parametrize(
    "contents, bits",
    [(["a b", "a b"], 1.0), (["x"], 0.0), (["a b", "c d"], 2.0), ([], 0.0)],
)
def test_set_entropy(contents, bits):
    assert set_entropy(contents) == pytest.approx(bits, abs=1e-12)


def test_hand_stepped_example():
    inp = AttentionInput(
        self_id=1,
        received_messages=[
            ReceivedMessage(2, B, "project funding"),
            ReceivedMessage(3, B, "project funding update tomorrow"),
            ReceivedMessage(3, D, "hi"),
        ],
        turn_number=3,
        past_actions=[Action(1, 1, send=Send(B, "x")), Action(1, 2, send=Send(B, "y")), Action(1, 2, send=Send(C, "z"))],
        relationships={B: P, C: G},
    )
    out = compute_attention(inp)
    assert out == [
        WeightedMessage(B, 4, "project funding update tomorrow"),
        WeightedMessage(D, -3, "hi"),
    ]
    assert out[0].display() == "[agent 2] (+4) [project funding update tomorrow]"


def test_single_general_sender_scores_one():
    inp = AttentionInput(1, [ReceivedMessage(1, C, "some news")], 1, relationships={C: G})
    assert [m.weight for m in compute_attention(inp)] == [1]


def test_no_current_messages_gives_nothing():
    inp = AttentionInput(1, [ReceivedMessage(1, C, "old")], 2, relationships={C: P})
    assert compute_attention(inp) == []


def test_environment_is_neutral_and_ordered_last_on_ties():
    inp = AttentionInput(1, [ReceivedMessage(1, ENV, "a b"), ReceivedMessage(1, C, "c d")], 1, relationships={C: G})
    out = compute_attention(inp)
    # C wins the entropy tie (lower id beats ENV) so C: 0+1, ENV: 0-1
    assert [(m.sender, m.weight) for m in out] == [(C, 1), (ENV, -1)]
    assert out[1].display().startswith("[environment] (-1)")


def test_interaction_stage_skipped_without_past_sends():
    inp = AttentionInput(1, [ReceivedMessage(2, C, "x")], 2, past_actions=[Action(1, 1)], relationships={C: P})
    assert explain_attention(inp)[0].interaction == 0


def test_repeated_content_does_not_raise_history_entropy():
    inp = AttentionInput(1, [ReceivedMessage(1, C, "a b"), ReceivedMessage(2, C, "a b")], 2, relationships={C: P})
    assert explain_attention(inp)[0].entropy_change == -1


def test_most_frequent_recipient_tie_goes_to_lowest_id():
    acts = [Action(1, 1, send=Send(5, "x")), Action(1, 2, send=Send(3, "y"))]
    assert most_frequent_recipient(acts) == 3
    assert most_frequent_recipient([Action(1, 1)]) is None


def test_matches_oracle_on_random_inputs():
    from oracles import attention_oracle
    from synthetic import random_attention_case

    rng = random.Random(1234)
    for _ in range(300):
        self_id, received, turn, past, rel = random_attention_case(rng)
        inp = AttentionInput(self_id, [ReceivedMessage(*r) for r in received], turn, past, rel)
        got = [(m.sender, m.weight, m.content) for m in compute_attention(inp)]
        want = attention_oracle(received, turn, [a.send.receiver for a in past if a.send], {k: v.value for k, v in rel.items()})
        assert got == want


# --- properties -------------------------------------------------------------

words = st.sampled_from(["alpha", "beta", "gamma", "delta", "eps"])
texts = st.lists(words, min_size=0, max_size=6).map(" ".join)
senders = st.sampled_from([2, 3, 4, 5, 6, ENV])
kinds = st.sampled_from(list(RelationshipKind))


@st.composite
def attention_inputs(draw):
    turn = draw(st.integers(1, 3))
    received = draw(st.lists(st.tuples(st.integers(1, turn), senders, texts), max_size=8))
    rel = draw(st.dictionaries(st.sampled_from([2, 3, 4, 5, 6]), kinds))
    past = [
        Action(1, r, send=Send(draw(st.integers(2, 6)), "x")) if draw(st.booleans()) else Action(1, r)
        for r in range(1, turn)
    ]
    return AttentionInput(1, [ReceivedMessage(*r) for r in received], turn, past, rel)


@settings(max_examples=300, deadline=None)
@given(attention_inputs())
def test_weights_stay_within_bounds(inp):
    for m in compute_attention(inp):
        assert -4 <= m.weight <= 4


@settings(max_examples=200, deadline=None)
@given(attention_inputs(), st.randoms(use_true_random=False))
def test_input_order_does_not_matter(inp, rnd):
    shuffled = list(inp.received_messages)
    rnd.shuffle(shuffled)
    other = AttentionInput(inp.self_id, shuffled, inp.turn_number, inp.past_actions, inp.relationships)
    assert compute_attention(other) == compute_attention(inp)


@settings(max_examples=200, deadline=None)
@given(attention_inputs(), senders, texts)
def test_previous_message_only_moves_history_stage(inp, sender, text):
    if inp.turn_number < 2:
        return
    extra = ReceivedMessage(inp.turn_number - 1, sender, text)
    more = AttentionInput(inp.self_id, [*inp.received_messages, extra], inp.turn_number, inp.past_actions, inp.relationships)
    before, after = explain_attention(inp), explain_attention(more)
    assert [(b.relationship, b.entropy_max, b.interaction) for b in before] == [
        (a.relationship, a.entropy_max, a.interaction) for a in after
    ]


@settings(max_examples=100, deadline=None)
@given(st.sampled_from([2, 3, 4, 5]), texts)
def test_lone_general_sender_property(sender, text):
    inp = AttentionInput(1, [ReceivedMessage(1, sender, text)], 1, relationships={sender: G})
    assert [m.weight for m in compute_attention(inp)] == [1]
