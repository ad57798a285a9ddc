"""
Recruitment lineages as a graph
===============================

Two rounds of forced recruitment produce a forest of five lineages. We export
it as DOT (for Graphviz and friends) and JSON.
"""

import tempfile
from collections import Counter
from pathlib import Path

from infocircle import PolicySpec, make_config, run
from infocircle.graph import build_graph, export_graph
from infocircle.policy import decide_forced_recruit

config = make_config("LC", "OA", "positive", "wheel", rounds=2, policy=PolicySpec("forced_recruit"))
log = run(config, decide_forced_recruit)

graph = build_graph(log)
print("nodes per lineage:", dict(sorted(Counter(n["lineage"] for n in graph["nodes"]).items())))
print("first edges:")
for e in graph["edges"][:5]:
    print(f"  {e['source']} -> {e['target']} (round {e['round']}, seed similarity {e['seed_similarity']:.2f})")

out = Path(tempfile.mkdtemp()) / "lineage"
dot, js = export_graph(log, out)
print("\nwrote", dot, "and", js)
print(dot.read_text().splitlines()[2])
