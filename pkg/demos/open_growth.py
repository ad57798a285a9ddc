"""
How fast can an open group grow?
================================

Every agent recruits one newcomer and messages it each round. The roster doubles
every round and the message count follows 5 * (2**t - 1).
"""

import time

from infocircle import PolicySpec, Simulation, make_config
from infocircle.policy import decide_forced_recruit

config = make_config("OG", "BC", "positive", "wheel", rounds=10, policy=PolicySpec("forced_recruit"))
sim = Simulation(config, decide_forced_recruit)

start = time.perf_counter()
sent = 0
print(f"{'round':>5} {'agents':>7} {'sent':>6} {'bound':>6}")
while not sim.finished:
    sim.step()
    boundary = sim.state.events[-1]
    sent += boundary["messages_sent"]
    t = boundary["round"]
    print(f"{t:>5} {boundary['roster_size']:>7} {sent:>6} {5 * (2**t - 1):>6}")
print(f"\nwall time {time.perf_counter() - start:.2f} s")
