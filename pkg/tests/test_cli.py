from __future__ import annotations

import csv
import json

import pytest

from infocircle.cli import main, stress
from infocircle.store import read_run_log


def invoke(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_run_writes_log_and_report(tmp_path, capsys):
    code, out, _ = invoke(capsys, "run", "SH-BC-positive-wheel", "--policy", "relay_top", "--out-dir", str(tmp_path))
    assert code == 0
    result = json.loads(out)
    log = read_run_log(result["log"])
    assert log.config.policy.name == "relay_top"
    assert result["metrics"]["information_gap"] == 100.0
    assert list(tmp_path.glob("*.metrics_gaps.csv"))


def test_run_from_config_file(tmp_path, capsys):
    from infocircle.core import make_config, save_config

    path = tmp_path / "c.json"
    save_config(make_config("OG", "OA", "negative", "circle", rounds=2), path)
    code, out, _ = invoke(capsys, "run", "--config", str(path), "--out-dir", str(tmp_path))
    assert code == 0 and json.loads(out)["metrics"]["information_gap"] == 20.0


def test_run_with_seed_is_deterministic(tmp_path, capsys):
    args = ["run", "PP-BCR-positive-circle", "--policy", "epidemic", "--policy-param", "p=0.5", "--seed", "7"]
    invoke(capsys, *args, "--out-dir", str(tmp_path / "a"))
    invoke(capsys, *args, "--out-dir", str(tmp_path / "b"))
    a = next((tmp_path / "a").glob("*.jsonl")).read_bytes()
    b = next((tmp_path / "b").glob("*.jsonl")).read_bytes()
    assert a == b


def test_llm_without_credentials_is_a_config_error(tmp_path, capsys, monkeypatch):
    for var in ("LLM_API_KEY", "OPENAI_API_KEY", "LLM_BASE_URL", "LLM_MODEL"):
        monkeypatch.delenv(var, raising=False)
    code, _, err = invoke(capsys, "run", "SH-BC-positive-wheel", "--policy", "llm", "--out-dir", str(tmp_path))
    assert code == 1 and "LLM_API_KEY" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "SH-BC-positive-wheel", "--threshold", "1.5"],
        ["run", "SH-BC-positive-wheel", "--rounds", "0"],
        ["run", "no-such-scenario"],
        ["run"],
        ["frobnicate"],
        ["run", "SH-BC-positive-wheel", "--policy", "epidemic"],
    ],
)
def test_usage_errors_exit_one(tmp_path, capsys, argv):
    with pytest.raises(SystemExit) as exc:
        code = main([*argv, "--out-dir", str(tmp_path)] if argv[0] == "run" else argv)
        raise SystemExit(code)
    assert exc.value.code == 1


def test_batch_one_content_one_rep(tmp_path, capsys):
    code, out, _ = invoke(capsys, "batch", "--contents", "SH", "--reps", "1", "--out-dir", str(tmp_path))
    assert code == 0
    assert len(list((tmp_path / "logs").glob("*.jsonl"))) == 12
    rows = list(csv.DictReader((tmp_path / "gaps.csv").open()))
    assert len(rows) == 12 and set(rows[0]) == {"environment", "information_gap", "diffusion_gap", "conversion_gap"}
    assert json.loads((tmp_path / "failures.json").read_text()) == []


def test_default_batch_has_144_runs(tmp_path, capsys):
    code, out, _ = invoke(capsys, "batch", "--rounds", "2", "--out-dir", str(tmp_path))
    assert code == 0
    assert len(list((tmp_path / "logs").glob("*.jsonl"))) == 144
    assert json.loads(out)["environments"] == 48
    assert len(list(csv.DictReader((tmp_path / "aggregate.csv").open()))) == 48


def test_batch_aggregate_equals_mean_of_runs(tmp_path, capsys):
    invoke(capsys, "batch", "--contents", "LC", "--mechanisms", "BCR", "--topologies", "wheel",
           "--polarities", "positive", "--policy", "epidemic", "--policy-param", "p=0.5", "--out-dir", str(tmp_path))
    runs = list(csv.DictReader((tmp_path / "runs.csv").open()))
    agg = list(csv.DictReader((tmp_path / "aggregate.csv").open()))
    assert len(runs) == 3 and len(agg) == 1
    seeds = sorted(json.loads(p.read_text().splitlines()[0])["config"]["rng_seed"] for p in (tmp_path / "logs").glob("*.jsonl"))
    assert seeds == [0, 1, 2]
    mean = sum(float(r["information_gap"]) for r in runs) / 3
    assert float(agg[0]["information_gap"]) == pytest.approx(mean)


def test_batch_parallel_matches_serial(tmp_path, capsys):
    common = ["batch", "--contents", "OG", "--mechanisms", "BC", "--policy", "relay_top", "--reps", "1"]
    invoke(capsys, *common, "--out-dir", str(tmp_path / "s"))
    invoke(capsys, *common, "--jobs", "2", "--out-dir", str(tmp_path / "p"))
    assert (tmp_path / "s" / "aggregate.csv").read_text() == (tmp_path / "p" / "aggregate.csv").read_text()


def test_empty_batch_is_usage_error(tmp_path, capsys):
    code, _, err = invoke(capsys, "batch", "--contents", "", "--out-dir", str(tmp_path))
    assert code == 1 and "empty" in err


@pytest.fixture
def relay_log(tmp_path, capsys):
    invoke(capsys, "run", "SH-BC-positive-circle", "--policy", "relay_top", "--out-dir", str(tmp_path))
    return next(tmp_path.glob("*.jsonl"))


def test_metrics_recompute_matches_run_report(relay_log, capsys):
    at_run = json.loads(next(relay_log.parent.glob("*.metrics.json")).read_text())
    code, out, _ = invoke(capsys, "metrics", str(relay_log))
    assert code == 0
    assert json.loads(out)[relay_log.stem] == next(iter(at_run.values()))


def test_metrics_threshold_override_never_raises_gaps(relay_log, capsys, tmp_path):
    _, base, _ = invoke(capsys, "metrics", str(relay_log))
    _, strict, _ = invoke(capsys, "metrics", str(relay_log), "--threshold", "1.0", "--out-dir", str(tmp_path / "r"))
    a, b = json.loads(base)[relay_log.stem], json.loads(strict)[relay_log.stem]
    for key in ("information_gap", "diffusion_gap", "information_retention"):
        assert b[key] <= a[key]
    assert (tmp_path / "r" / "metrics_gaps.csv").exists()


def test_metrics_missing_file_names_path(capsys, tmp_path):
    code, _, err = invoke(capsys, "metrics", str(tmp_path / "ghost.jsonl"))
    assert code != 0 and "ghost.jsonl" in err


def test_metrics_embedding_failure_aborts_with_transport_code(relay_log, capsys):
    code, _, err = invoke(capsys, "metrics", str(relay_log), "--provider", "embedding_api",
                          "--provider-param", "base_url=http://127.0.0.1:9", "--provider-param", "timeout=0.5")
    assert code == 3 and "similarity provider failed" in err


def test_export_graph(relay_log, capsys, tmp_path):
    code, out, _ = invoke(capsys, "export-graph", str(relay_log), "--out", str(tmp_path / "g" / "graph"))
    assert code == 0
    paths = json.loads(out)
    dot = open(paths["dot"]).read()
    assert dot.startswith('digraph "SH-BC-positive-circle"') and "->" in dot
    graph = json.loads(open(paths["json"]).read())
    assert {n["id"] for n in graph["nodes"]} == {1, 2, 3, 4, 5}
    assert all(e["seed_similarity"] == 1.0 for e in graph["edges"])


def test_export_graph_silent_log(tmp_path, capsys):
    invoke(capsys, "run", "SH-BC-positive-wheel", "--out-dir", str(tmp_path))
    log = next(tmp_path.glob("*.jsonl"))
    invoke(capsys, "export-graph", str(log), "--out", str(tmp_path / "quiet"))
    assert json.loads((tmp_path / "quiet.json").read_text())["nodes"] == []
    invoke(capsys, "export-graph", str(log), "--out", str(tmp_path / "all"), "--include-inactive")
    nodes = json.loads((tmp_path / "all.json").read_text())["nodes"]
    assert len(nodes) == 5 and all(n["seeded"] for n in nodes)


def test_export_graph_forced_recruit_forest(tmp_path, capsys):
    invoke(capsys, "run", "OG-BC-positive-wheel", "--policy", "forced_recruit", "--rounds", "2", "--out-dir", str(tmp_path))
    log = next(tmp_path.glob("*.jsonl"))
    invoke(capsys, "export-graph", str(log), "--out", str(tmp_path / "f"))
    nodes = json.loads((tmp_path / "f.json").read_text())["nodes"]
    assert len(nodes) == 20
    assert {n["lineage"] for n in nodes} == {1, 2, 3, 4, 5}
    assert all(sum(n["lineage"] == root for n in nodes) == 4 for root in range(1, 6))


def test_export_graph_unreadable_log(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("not json\n")
    code, _, err = invoke(capsys, "export-graph", str(bad))
    assert code == 2 and "bad.jsonl:1" in err


@pytest.mark.parametrize("steps, agents, messages", [(1, 10, 5), (2, 20, 15), (9, 2560, 2555), (10, 5120, 5115)])
def test_stress_small(capsys, steps, agents, messages):
    code, out, _ = invoke(capsys, "stress", "--steps", str(steps))
    result = json.loads(out)
    assert code == 0 and (result["agents"], result["messages"]) == (agents, messages)
    assert result["max_prompt_words"] > 0


def test_stress_rejects_zero_steps():
    from infocircle.cli import UsageError

    with pytest.raises(UsageError):
        stress(0)


def test_replay(relay_log, capsys):
    code, out, _ = invoke(capsys, "replay", str(relay_log), "--rerun")
    assert code == 0 and json.loads(out) == {"log": str(relay_log), "summary_matches": True, "rerun_identical": True}


def test_replay_detects_tampering(relay_log, capsys):
    lines = relay_log.read_text().splitlines()
    summary = json.loads(lines[-1])
    summary["roster_size"] = 99
    lines[-1] = json.dumps(summary)
    relay_log.write_text("\n".join(lines) + "\n")
    code, out, _ = invoke(capsys, "replay", str(relay_log))
    assert code == 2 and json.loads(out)["summary_matches"] is False
