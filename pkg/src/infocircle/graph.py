"""Lineage / message graph export (DOT and JSON).

Nodes are agents coloured by the initial agent their recruitment chain starts
from. Edges are agent-to-agent messages annotated with how similar the carried
content is to the seed and to each endpoint's own sent history.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from pathlib import Path
from typing import Any

from infocircle.core import INITIAL_AGENTS
from infocircle.engine import RunLog
from infocircle.similarity import SimilarityProvider, TfCosine

PALETTE = {1: "#1b9e77", 2: "#d95f02", 3: "#7570b3", 4: "#e7298a", 5: "#66a61e"}


def lineage_roots(log: RunLog) -> dict[int, int]:
    recruiter = {a: a for a in INITIAL_AGENTS}
    for e in log.events:
        if e["kind"] == "recruit":
            recruiter[e["agent"]] = e["recruiter"]
    roots = {}
    for agent in recruiter:
        node = agent
        while recruiter[node] != node:
            node = recruiter[node]
        roots[agent] = node
    return roots


def build_graph(
    log: RunLog, provider: SimilarityProvider | None = None, *, include_inactive: bool = False
) -> dict[str, Any]:
    provider = provider or TfCosine()
    seed = log.config.content.text
    roots = lineage_roots(log)
    recruiter = {e["agent"]: e["recruiter"] for e in log.events if e["kind"] == "recruit"}
    seeded = {e["receiver"] for e in log.events if e["kind"] == "seed"}
    messages = [e for e in log.events if e["kind"] == "message"]

    acted: set[int] = set()
    for e in log.events:
        if e["kind"] == "message":
            acted.add(e["sender"])
        elif e["kind"] == "recruit":
            acted.add(e["recruiter"])
        elif e["kind"] == "relationship_change":
            acted.add(e["owner"])

    history: dict[int, list[tuple[int, str]]] = defaultdict(list)
    for i, m in enumerate(messages):
        history[m["sender"]].append((i, m["content"]))

    def history_mean(agent: int, content: str, skip: int) -> float | None:
        sims = [provider.similarity(content, h) for j, h in history.get(agent, ()) if j != skip]
        return math.fsum(sims) / len(sims) if sims else None

    edges = []
    for i, m in enumerate(messages):
        edges.append(
            {
                "source": m["sender"],
                "target": m["receiver"],
                "round": m["round"],
                "seed_similarity": provider.similarity(m["content"], seed),
                "sender_history_similarity": history_mean(m["sender"], m["content"], i),
                "receiver_history_similarity": history_mean(m["receiver"], m["content"], i),
            }
        )

    shown = set(roots) if include_inactive else acted | {e["target"] for e in edges}
    nodes = [
        {
            "id": agent,
            "lineage": roots[agent],
            "recruiter": recruiter.get(agent),
            "acted": agent in acted,
            "seeded": agent in seeded,
        }
        for agent in sorted(shown)
    ]
    return {"scenario": log.config.name, "nodes": nodes, "edges": edges}


def to_dot(graph: dict[str, Any]) -> str:
    lines = [f'digraph "{graph["scenario"]}" {{', "  node [shape=circle, style=filled, fontcolor=white];"]
    for n in graph["nodes"]:
        shape = "doublecircle" if n["seeded"] else "circle"
        lines.append(
            f'  {n["id"]} [label="{n["id"]}", fillcolor="{PALETTE[n["lineage"]]}", '
            f'shape={shape}, lineage={n["lineage"]}];'
        )
    for e in graph["edges"]:
        sim = e["seed_similarity"]
        gray = round(85 * (1.0 - sim))  # darker edge = closer to the seed
        lines.append(
            f'  {e["source"]} -> {e["target"]} [label="r{e["round"]}", color="gray{gray}", '
            f'penwidth={1.0 + 2.0 * sim:.2f}, seed_similarity={sim:.4f}];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_graph(
    log: RunLog,
    out_stem: str | Path,
    provider: SimilarityProvider | None = None,
    *,
    include_inactive: bool = False,
) -> tuple[Path, Path]:
    graph = build_graph(log, provider, include_inactive=include_inactive)
    stem = Path(out_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    dot_path, json_path = stem.with_suffix(".dot"), stem.with_suffix(".json")
    dot_path.write_text(to_dot(graph))
    json_path.write_text(json.dumps(graph, indent=2) + "\n")
    return dot_path, json_path
