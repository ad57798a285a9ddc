from __future__ import annotations

import pytest

from infocircle.core import (
    ENV,
    NEW_AGENT,
    Action,
    AgentProfile,
    Message,
    PolicySpec,
    Recruit,
    RelationshipChange,
    RelationshipKind,
    Send,
    make_config,
)
from infocircle.engine import (
    ConfigError,
    RoundBudget,
    Simulation,
    apply_actions,
    initial_state,
    replay,
    run,
    seed_information,
    validate_action,
    visible_messages,
)
from infocircle.policy import decide_forced_recruit, decide_relay_top, make_policy
from infocircle.store import InMemoryStore

P, N, G = RelationshipKind.POSITIVE, RelationshipKind.NEGATIVE, RelationshipKind.GENERAL


def config(mechanism="BC", **kw):
    return make_config("SH", mechanism, "positive", "circle", **kw)


def at_round(cfg, r):
    state = initial_state(cfg)
    state.round = r
    return state


@pytest.mark.parametrize(
    "mechanism, r, receivers",
    [("BC", 1, [1, 2, 3, 4, 5]), ("BC", 2, []), ("OA", 1, [2]), ("OA", 2, []), ("BCR", 3, [3]), ("BCR", 6, [])],
)
def test_seeding(mechanism, r, receivers):
    cfg = config(mechanism)
    msgs = seed_information(at_round(cfg, r), cfg)
    assert [m.receiver for m in msgs] == receivers
    assert all(m.sender == ENV and m.content == cfg.content.text for m in msgs)


def test_seed_is_current_in_its_round():
    cfg = config()
    state = initial_state(cfg)
    for m in seed_information(state, cfg):
        state.add_message(m)
    inp = visible_messages(state, 1)
    assert [(m.round, m.sender) for m in inp.received_messages] == [(1, ENV)]


def test_peer_message_arrives_next_round():
    state = initial_state(config())
    state.add_message(Message(1, 1, 2, "hello"))
    assert visible_messages(state, 2, 1).received_messages == []
    assert [m.round for m in visible_messages(state, 2, 2).received_messages] == [2]
    assert visible_messages(state, 3, 2).received_messages == []


def test_send_plus_relationship_change_accepted():
    state = initial_state(config())
    action = Action(1, 1, send=Send(2, "hi"), relationship_changes=(RelationshipChange(3, N),))
    accepted, rejections = validate_action(state, action)
    assert accepted == action and rejections == []


def test_second_send_in_a_round_rejected():
    state = initial_state(config())
    budget = RoundBudget(state.next_agent_id())
    validate_action(state, Action(1, 1, send=Send(2, "a")), budget)
    accepted, rejections = validate_action(state, Action(1, 1, send=Send(3, "b")), budget)
    assert accepted.send is None
    assert rejections[0].reason == "send cap reached this round"


def test_unknown_receiver_rejected():
    state = initial_state(config())
    accepted, rejections = validate_action(state, Action(1, 1, send=Send(99, "x")))
    assert accepted.is_noop
    assert rejections[0].part == "send" and rejections[0].reason.startswith("unknown receiver")


def test_rejections_are_partial():
    state = initial_state(config())
    action = Action(1, 1, send=Send(1, "me"), relationship_changes=(RelationshipChange(2, N), RelationshipChange(42, N)))
    accepted, rejections = validate_action(state, action)
    assert accepted.relationship_changes == (RelationshipChange(2, N),)
    assert accepted.send is None
    assert {r.part for r in rejections} == {"send", "relationship_change"}


def test_new_agent_placeholder_needs_a_recruit():
    state = initial_state(config())
    accepted, rejections = validate_action(state, Action(1, 1, send=Send(NEW_AGENT, "x")))
    assert accepted.send is None and rejections


def test_recruit_gets_next_id_and_lineage():
    state = initial_state(config())
    profile = AgentProfile(0, 20, "f", ("t",), "o")
    accepted, _ = validate_action(state, Action(3, 1, send=Send(NEW_AGENT, "x"), recruit=Recruit(profile, N)))
    assert accepted.recruit.profile.id == 6 and accepted.send.receiver == 6
    apply_actions(state, [accepted])
    assert state.lineage[6] == 3
    assert state.views[3][6] is N and state.views[6] == {3: N}


def test_two_recruits_in_a_round_numbered_by_actor():
    cfg = config(policy=PolicySpec("forced_recruit"), rounds=1)
    log = run(cfg, decide_forced_recruit)
    assert [(e["recruiter"], e["agent"]) for e in log.of_kind("recruit")] == [(1, 6), (2, 7), (3, 8), (4, 9), (5, 10)]


def test_invalid_recruit_profile_rejected():
    state = initial_state(config())
    bad = AgentProfile(0, -1, "", (), "")
    accepted, rejections = validate_action(state, Action(1, 1, recruit=Recruit(bad, P)))
    assert accepted.recruit is None and rejections[0].part == "recruit"


def test_relationship_change_is_subjective():
    state = initial_state(config())
    apply_actions(state, [Action(1, 1, relationship_changes=(RelationshipChange(2, N),))])
    assert state.views[1][2] is N and state.views[2][1] is P


def test_silent_run_shape():
    log = run(config())
    assert log.final_state_summary["roster_size"] == 5
    assert len(log.of_kind("round_boundary")) == 10
    assert len(log.of_kind("seed")) == 5
    assert log.of_kind("message") == []


@pytest.mark.parametrize("steps, agents", [(1, 10), (2, 20), (5, 160)])
def test_forced_recruit_doubles(steps, agents):
    log = run(config(rounds=steps), decide_forced_recruit)
    assert log.final_state_summary["roster_size"] == agents
    assert len(log.of_kind("message")) == 5 * (2**steps - 1)


def test_growth_bounds_hold_every_round():
    log = run(config(rounds=6), decide_forced_recruit)
    sent = 0
    for boundary in log.of_kind("round_boundary"):
        t = boundary["round"]
        sent += boundary["messages_sent"]
        assert boundary["roster_size"] <= 5 * 2**t
        assert sent <= 5 * (2**t - 1)


def test_no_message_delivered_in_its_send_round():
    cfg = config()
    sim = Simulation(cfg, decide_relay_top)
    sim.run()
    for agent in sim.state.roster:
        for m in sim.state.inbox(agent):
            if m.sender != ENV:
                assert m.delivery_round == m.round + 1


def test_lineage_is_a_forest_rooted_at_initial_agents():
    log = run(config(rounds=4), decide_forced_recruit)
    lineage = {int(k): v for k, v in log.final_state_summary["lineage"].items()}
    for agent in lineage:
        seen = set()
        while lineage[agent] != agent:
            assert agent not in seen
            seen.add(agent)
            agent = lineage[agent]
        assert agent in {1, 2, 3, 4, 5}


def test_failing_policy_degrades_to_noop():
    def explode(request):
        raise RuntimeError("boom")

    log = run(config(rounds=2), explode)
    decisions = log.of_kind("decision")
    assert len(decisions) == 10
    assert all("boom" in d["action"]["failure"] for d in decisions)


def test_policy_returning_garbage_degrades_to_noop():
    log = run(config(rounds=1), lambda request: "nonsense")
    assert all("invalid action" in d["action"]["failure"] for d in log.of_kind("decision"))


def test_invalid_config_refused():
    with pytest.raises(ConfigError):
        Simulation(config(rounds=0))


def test_parallel_decisions_match_serial():
    cfg = config(rounds=4, policy=PolicySpec("epidemic", {"p": 0.6}))
    policy = make_policy(cfg.policy)
    assert run(cfg, policy, max_workers=4).events == run(cfg, policy).events


def test_replay_rebuilds_final_state():
    log = run(config(rounds=3), decide_forced_recruit)
    assert replay(log.config, log.events) == log.final_state_summary


def test_store_mirrors_agent_state():
    store = InMemoryStore("run1")
    run(config(rounds=2), decide_forced_recruit, store=store)
    assert store.get("last_round") == 2
    assert store.get("agent:6")["relationships"] == {"1": "positive", "16": "positive"}
    assert store.get("agent:1")["profile"]["id"] == 1
