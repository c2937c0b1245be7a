"""CLI stages end to end on the bundled fixture, manifests, exit codes."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import pytest

from qaea_dr.cli import main

ARTIFACTS = [
    "corpus.jsonl",
    "queries.jsonl",
    "qrels.jsonl",
    "generations.jsonl",
    "embeddings.vec",
    "embeddings.meta.jsonl",
    "index/original.vec",
    "index/qa.vec",
    "index/event.vec",
    "runs.jsonl",
    "report.json",
    "per_query.csv",
]


def base_args(smoke_dir: Path, out: Path) -> list[str]:
    return [
        "--corpus", str(smoke_dir / "corpus.jsonl"),
        "--queries", str(smoke_dir / "queries.jsonl"),
        "--qrels", str(smoke_dir / "qrels.jsonl"),
        "--out", str(out),
    ]


def run_all_stages(smoke_dir: Path, out: Path, extra: list[str] = ()) -> None:
    args = base_args(smoke_dir, out) + list(extra)
    for stage in ("ingest", "augment", "embed", "index", "retrieve", "eval"):
        assert main([stage, *args]) == 0, stage


def snapshot(out: Path) -> dict[str, str]:
    return {
        name: hashlib.sha256((out / name).read_bytes()).hexdigest()
        for name in ARTIFACTS
    }


class TestEndToEnd:
    def test_mock_pipeline_produces_report(self, smoke_dir, tmp_path, capsys):
        out = tmp_path / "run"
        run_all_stages(smoke_dir, out)
        report = json.loads((out / "report.json").read_text())
        assert report["aggregates"]["ndcg@1"] == 1.0
        assert report["evaluated_queries"] == 20
        assert report["vector_count"] == 60  # originals + one qa + one event per doc
        assert report["config_hash"]
        stdout = capsys.readouterr().out
        assert "ndcg@1" in stdout

    def test_single_run_command(self, smoke_dir, tmp_path):
        out = tmp_path / "run"
        assert main(["run", *base_args(smoke_dir, out)]) == 0
        assert (out / "report.json").exists()

    def test_rerun_is_byte_identical(self, smoke_dir, tmp_path):
        out = tmp_path / "run"
        run_all_stages(smoke_dir, out)
        first = snapshot(out)
        run_all_stages(smoke_dir, out)
        assert snapshot(out) == first

    def test_ablate_emits_seven_rows(self, smoke_dir, tmp_path, capsys):
        out = tmp_path / "run"
        args = base_args(smoke_dir, out)
        for stage in ("ingest", "augment", "embed", "index"):
            assert main([stage, *args]) == 0
        assert main(["ablate", *args]) == 0
        with (out / "ablation.csv").open() as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 7
        assert [r["scenario"] for r in rows] == [
            "original", "qa", "event", "original+qa", "original+event",
            "qa+event", "original+qa+event",
        ]
        full = rows[-1]
        n = 20
        assert int(full["vectors"]) == 3 * n
        assert int(full["sim_count"]) == 3 * n * 20

    def test_strategy_flag_changes_artifacts(self, smoke_dir, tmp_path):
        out_tri = tmp_path / "tri"
        out_tmo = tmp_path / "tmo"
        run_all_stages(smoke_dir, out_tri, ["--strategy", "tri"])
        run_all_stages(smoke_dir, out_tmo, ["--strategy", "tmo"])
        tri_report = json.loads((out_tri / "report.json").read_text())
        tmo_report = json.loads((out_tmo / "report.json").read_text())
        assert tri_report["scenario"]["strategy"] == "tri"
        assert tmo_report["scenario"]["strategy"] == "tmo"


class TestManifests:
    def test_manifest_contents(self, smoke_dir, tmp_path):
        out = tmp_path / "run"
        assert main(["ingest", *base_args(smoke_dir, out)]) == 0
        manifest = json.loads((out / "ingest.manifest.json").read_text())
        assert manifest["stage"] == "ingest"
        assert manifest["config_hash"]
        assert manifest["stats"]["documents"] == 20
        assert set(manifest["inputs"]) == {"corpus", "queries", "qrels"}
        assert manifest["versions"]["prompts"] == "v1"

    def test_mixed_config_refused_then_forced(self, smoke_dir, tmp_path):
        out = tmp_path / "run"
        args = base_args(smoke_dir, out)
        for stage in ("ingest", "augment", "embed", "index"):
            assert main([stage, *args]) == 0
        # retrieve under a different threshold -> different config hash
        assert main(["retrieve", *args, "--tau", "5"]) == 0
        assert main(["eval", *args]) == 1
        assert main(["eval", *args, "--force"]) == 0


class TestErrorsAndExitCodes:
    def test_missing_upstream_stage_names_it(self, smoke_dir, tmp_path, caplog):
        out = tmp_path / "run"
        code = main(["augment", *base_args(smoke_dir, out)])
        assert code == 1
        assert "ingest" in caplog.text

    def test_usage_error_maps_to_one(self):
        assert main(["no-such-command"]) == 1

    def test_missing_input_file(self, tmp_path):
        code = main(
            [
                "ingest",
                "--corpus", str(tmp_path / "absent.jsonl"),
                "--queries", str(tmp_path / "absent.jsonl"),
                "--qrels", str(tmp_path / "absent.jsonl"),
                "--out", str(tmp_path / "out"),
            ]
        )
        assert code == 1

    def test_bad_config_file(self, tmp_path):
        bad = tmp_path / "config.json"
        bad.write_text("{not json")
        assert main(["verify-theory", "--instances", "10"]) == 0  # sanity
        assert main(["ingest", "--config", str(bad)]) == 1


class TestConfigPrecedence:
    def test_flag_overrides_file(self, smoke_dir, tmp_path):
        config_path = tmp_path / "config.json"
        config_path.write_text(
            json.dumps(
                {
                    "paths": {
                        "corpus": str(smoke_dir / "corpus.jsonl"),
                        "queries": str(smoke_dir / "queries.jsonl"),
                        "qrels": str(smoke_dir / "qrels.jsonl"),
                        "output_dir": str(tmp_path / "from_file"),
                    },
                    "threshold": 5,
                }
            )
        )
        out = tmp_path / "from_flag"
        assert main(["ingest", "--config", str(config_path), "--out", str(out)]) == 0
        assert (out / "corpus.jsonl").exists()
        manifest = json.loads((out / "ingest.manifest.json").read_text())
        assert manifest["config"]["threshold"] == 5  # file value survives

    def test_sampling_flag(self, smoke_dir, tmp_path):
        out = tmp_path / "run"
        assert main(
            ["ingest", *base_args(smoke_dir, out), "--sample-size", "5", "--seed", "7"]
        ) == 0
        lines = (out / "corpus.jsonl").read_text().strip().splitlines()
        assert len(lines) == 5


class TestVerifyTheoryCommand:
    def test_passes_and_prints(self, capsys):
        assert main(["verify-theory", "--instances", "200", "--seed", "3"]) == 0
        stdout = capsys.readouterr().out
        assert stdout.count("PASS") == 2
        assert "hand check" in stdout
        assert "worst slack" in stdout


class TestAnalyzeCommands:
    def prepared(self, smoke_dir, tmp_path) -> tuple[list[str], Path]:
        out = tmp_path / "run"
        args = base_args(smoke_dir, out)
        assert main(["ingest", *args]) == 0
        assert main(["augment", *args]) == 0
        return args, out

    def test_counts(self, smoke_dir, tmp_path):
        args, out = self.prepared(smoke_dir, tmp_path)
        assert main(["analyze", "counts", *args]) == 0
        with (out / "counts.csv").open() as f:
            row = list(csv.DictReader(f))[0]
        assert float(row["mean_qa_per_doc"]) >= 1.0
        assert float(row["mean_events_per_doc"]) >= 1.0

    def test_diversity(self, smoke_dir, tmp_path):
        args, out = self.prepared(smoke_dir, tmp_path)
        assert main(["analyze", "diversity", *args]) == 0
        with (out / "diversity.csv").open() as f:
            rows = list(csv.DictReader(f))
        kinds = {r["kind"] for r in rows}
        assert kinds == {"qa", "event"}
        for row in rows:
            assert 0.0 <= float(row["self_bleu"]) <= 1.0

    def test_noise(self, smoke_dir, tmp_path):
        args, out = self.prepared(smoke_dir, tmp_path)
        assert main(["analyze", "noise", *args, "--percentages", "0.2,0.5"]) == 0
        with (out / "noise.csv").open() as f:
            rows = list(csv.DictReader(f))
        assert {r["input_noise"] for r in rows} == {"0.20", "0.50"}
        for row in rows:
            assert 0.0 <= float(row["retained_noise"]) <= 1.0

    def test_import_generations(self, smoke_dir, tmp_path):
        args, out = self.prepared(smoke_dir, tmp_path)
        exported = tmp_path / "external.jsonl"
        exported.write_bytes((out / "generations.jsonl").read_bytes())
        assert main(["augment", *args, "--import-generations", str(exported)]) == 0
        assert (out / "generations.jsonl").read_bytes() == exported.read_bytes()
