"""Diffusion metrics computed offline from a :class:`~infocircle.engine.RunLog`.

Conventions:

* a message "reaches" its receiver as soon as it is logged, including sends
  made in the final round; environment seeds count as received messages;
* the environment is never a sender for diffusion gap or retention;
* gap denominators are the final roster size, recruits included;
* gap numerators count distinct agents unless ``count_messages=True``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from itertools import combinations
from pathlib import Path
from typing import Any, Mapping, Sequence

from infocircle.core import INITIAL_AGENTS, init_relationships
from infocircle.engine import RunLog, replay
from infocircle.similarity import SimilarityProvider, TfCosine

_DEFAULT_PROVIDER = TfCosine()


@dataclass
class MetricsReport:
    action_similarity_bias: float | None
    relationship_perception_frequency: float
    information_gap: float
    diffusion_gap: float
    diffusion_conversion_gap: float
    information_retention: float
    avg_agent_increase_per_round: float
    new_agent_seed_similarity: float | None
    relationship_changes: float = 0
    agents_added: float = 0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _messages(log: RunLog) -> list[dict[str, Any]]:
    """Seed and peer messages in log order."""
    return [e for e in log.events if e["kind"] in ("seed", "message")]


class _SeedSimilarity:
    """Memoised sim(content, I_0) for one log."""

    def __init__(self, log: RunLog, provider: SimilarityProvider | None) -> None:
        self.provider = provider or _DEFAULT_PROVIDER
        self.seed = log.config.content.text
        self._memo: dict[str, float] = {}

    def __call__(self, content: str) -> float:
        if content not in self._memo:
            self._memo[content] = self.provider.similarity(content, self.seed)
        return self._memo[content]


def roster_size(log: RunLog) -> int:
    return len(INITIAL_AGENTS) + sum(1 for e in log.events if e["kind"] == "recruit")


def action_similarity_bias(
    log: RunLog, provider: SimilarityProvider | None = None, *, all_pairs: bool = False
) -> float | None:
    """Mean similarity between an agent's consecutive outputs, averaged over agents.

    Only agents with at least two sends contribute; ``None`` if there are none.
    ``all_pairs`` compares every pair of an agent's outputs instead.
    """
    provider = provider or _DEFAULT_PROVIDER
    outputs: dict[int, list[str]] = {}
    for e in log.events:
        if e["kind"] == "message":
            outputs.setdefault(e["sender"], []).append(e["content"])
    per_agent = []
    for agent in sorted(outputs):
        sent = outputs[agent]
        if len(sent) < 2:
            continue
        pairs = combinations(sent, 2) if all_pairs else zip(sent[1:], sent[:-1])
        sims = [provider.similarity(a, b) for a, b in pairs]
        per_agent.append(math.fsum(sims) / len(sims))
    if not per_agent:
        return None
    return math.fsum(per_agent) / len(per_agent)


def relationship_perception_frequency(log: RunLog) -> int:
    """Directed relationship entries that differ from their baseline, plus recruits.

    The baseline is the initial network for the first five agents and, for a
    recruit, the reciprocal entry it is created with. So a single recruit
    scores 2: one new entry in the recruiter's view and one added agent.
    """
    start = {
        owner: {str(t): k.value for t, k in view.items()}
        for owner, view in init_relationships(log.config.topology, log.config.initial_polarity).items()
    }
    recruits = 0
    for e in log.events:
        if e["kind"] == "recruit":
            recruits += 1
            start[e["agent"]] = {str(e["recruiter"]): e["relationship"]}
    end = replay(log.config, log.events)["views"]
    changed = 0
    for owner in set(start) | {int(o) for o in end}:
        before = start.get(owner, {})
        after = end.get(str(owner), {})
        changed += sum(1 for t in set(before) | set(after) if before.get(t) != after.get(t))
    return changed + recruits


def information_gap(
    log: RunLog,
    threshold: float | None = None,
    provider: SimilarityProvider | None = None,
    *,
    count_messages: bool = False,
) -> float:
    """Percentage of agents that received something similar to the seed."""
    threshold = log.config.similarity_threshold if threshold is None else threshold
    sim = _SeedSimilarity(log, provider)
    hits = [e["receiver"] for e in _messages(log) if sim(e["content"]) >= threshold]
    numerator = len(hits) if count_messages else len(set(hits))
    return 100.0 * numerator / roster_size(log)


def diffusion_gap(
    log: RunLog,
    threshold: float | None = None,
    provider: SimilarityProvider | None = None,
    *,
    count_messages: bool = False,
) -> float:
    """Percentage of agents that sent something similar to the seed."""
    threshold = log.config.similarity_threshold if threshold is None else threshold
    sim = _SeedSimilarity(log, provider)
    hits = [
        e["sender"]
        for e in log.events
        if e["kind"] == "message" and sim(e["content"]) >= threshold
    ]
    numerator = len(hits) if count_messages else len(set(hits))
    return 100.0 * numerator / roster_size(log)


def information_retention(
    log: RunLog, threshold: float | None = None, provider: SimilarityProvider | None = None
) -> int:
    """Number of rounds in which some agent sent a message similar to the seed."""
    threshold = log.config.similarity_threshold if threshold is None else threshold
    sim = _SeedSimilarity(log, provider)
    best: dict[int, float] = {}
    for e in log.events:
        if e["kind"] == "message":
            best[e["round"]] = max(best.get(e["round"], 0.0), sim(e["content"]))
    return sum(1 for value in best.values() if value >= threshold)


def new_agent_analytics(
    log: RunLog, provider: SimilarityProvider | None = None
) -> tuple[float, float | None]:
    """(agents added per round, mean seed similarity of each recruit's first inbound message)."""
    recruits = [e["agent"] for e in log.events if e["kind"] == "recruit"]
    per_round = len(recruits) / log.config.rounds
    first: dict[int, str] = {}
    for e in _messages(log):
        first.setdefault(e["receiver"], e["content"])
    sim = _SeedSimilarity(log, provider)
    sims = [sim(first[r]) for r in recruits if r in first]
    return per_round, (math.fsum(sims) / len(sims) if sims else None)


def compute_metrics(
    log: RunLog,
    provider: SimilarityProvider | None = None,
    threshold: float | None = None,
) -> MetricsReport:
    threshold = log.config.similarity_threshold if threshold is None else threshold
    provider = provider or _DEFAULT_PROVIDER
    provider.prefetch(sorted({e["content"] for e in _messages(log)} | {log.config.content.text}))
    info = information_gap(log, threshold, provider)
    diff = diffusion_gap(log, threshold, provider)
    per_round, recruit_sim = new_agent_analytics(log, provider)
    return MetricsReport(
        action_similarity_bias=action_similarity_bias(log, provider),
        relationship_perception_frequency=relationship_perception_frequency(log),
        information_gap=info,
        diffusion_gap=diff,
        diffusion_conversion_gap=info - diff,
        information_retention=information_retention(log, threshold, provider),
        avg_agent_increase_per_round=per_round,
        new_agent_seed_similarity=recruit_sim,
        relationship_changes=sum(1 for e in log.events if e["kind"] == "relationship_change"),
        agents_added=sum(1 for e in log.events if e["kind"] == "recruit"),
    )


def aggregate(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Field-wise mean; missing (None) values are left out of their field's mean."""
    if not reports:
        raise ValueError("cannot aggregate an empty list of reports")
    values: dict[str, Any] = {}
    for f in fields(MetricsReport):
        present = [getattr(r, f.name) for r in reports if getattr(r, f.name) is not None]
        values[f.name] = math.fsum(present) / len(present) if present else None
    return MetricsReport(**values)


# --- report files -------------------------------------------------------------

REPORT_FIELDS = [f.name for f in fields(MetricsReport)]
GAP_FIELDS = ["environment", "information_gap", "diffusion_gap", "conversion_gap"]


def reports_csv(rows: Mapping[str, MetricsReport], key: str = "environment") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([key, *REPORT_FIELDS])
    for name, report in rows.items():
        writer.writerow([name, *("" if v is None else v for v in (getattr(report, f) for f in REPORT_FIELDS))])
    return buf.getvalue()


def gap_csv(rows: Mapping[str, MetricsReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GAP_FIELDS)
    for name, r in rows.items():
        writer.writerow([name, r.information_gap, r.diffusion_gap, r.diffusion_conversion_gap])
    return buf.getvalue()


def write_report_files(rows: Mapping[str, MetricsReport], out_dir: str | Path, stem: str = "metrics") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{stem}.json", out / f"{stem}.csv", out / f"{stem}_gaps.csv"]
    paths[0].write_text(json.dumps({k: v.to_dict() for k, v in rows.items()}, indent=2) + "\n")
    paths[1].write_text(reports_csv(rows))
    paths[2].write_text(gap_csv(rows))
    return paths

