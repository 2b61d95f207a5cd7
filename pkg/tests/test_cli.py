import json

import pytest

import unspsc_llm.client as client_module
from conftest import write_csv
from unspsc_llm.cli import RunConfig, main


@pytest.fixture
def big_csv(tmp_path):
    rows = [
        (f"Item {index}", f"Description {index}", f"{10 + index % 80:02d}{index % 90 + 10:02d}1234")
        for index in range(10)
    ]
    return write_csv(tmp_path / "big.csv", rows)


def classify_args(input_path, out_dir, extra=()):
    return [
        "classify",
        "--input",
        str(input_path),
        "--out",
        str(out_dir),
        "--backend",
        "mock",
        *extra,
    ]


class TestValidate:
    def test_clean_file(self, dataset_csv, capsys):
        assert main(["validate", "--input", str(dataset_csv)]) == 0
        out = capsys.readouterr().out
        assert "kept: 3" in out
        assert "rejected: 0" in out

    def test_bad_rows_still_exit_zero(self, tmp_path, capsys):
        path = write_csv(
            tmp_path / "data.csv",
            [("Good", "d", "43212110"), ("", "d", "43212110"), ("Bad gold", "d", "999")],
        )
        assert main(["validate", "--input", str(path)]) == 0
        out = capsys.readouterr().out
        assert "MissingName: 1" in out
        assert "InvalidGoldCode: 1" in out
        assert "row 2: MissingName" in out

    def test_missing_column_exits_two(self, tmp_path, capsys):
        path = write_csv(tmp_path / "data.csv", [("x", "y")], header=("A", "B"))
        assert main(["validate", "--input", str(path)]) == 2
        assert "error" in capsys.readouterr().err

    def test_missing_file_exits_two(self, tmp_path):
        assert main(["validate", "--input", str(tmp_path / "nope.csv")]) == 2

    def test_custom_schema_file(self, tmp_path, capsys):
        path = write_csv(
            tmp_path / "data.csv", [("Widget", "43212110")], header=("name", "code")
        )
        schema_path = tmp_path / "schema.json"
        schema_path.write_text(
            json.dumps({"item_name": "name", "gold_code": "code", "item_description": None}),
            encoding="utf-8",
        )
        assert main(["validate", "--input", str(path), "--schema", str(schema_path)]) == 0
        assert "kept: 1" in capsys.readouterr().out


class TestCensus:
    def test_prints_counts(self, dataset_csv, capsys):
        assert main(["census", "--input", str(dataset_csv)]) == 0
        out = capsys.readouterr().out
        assert "unique commodity codes: 3" in out
        assert "unique segment codes: 2" in out

    def test_writes_json(self, dataset_csv, tmp_path, capsys):
        out_dir = tmp_path / "census_out"
        assert main(["census", "--input", str(dataset_csv), "--out", str(out_dir)]) == 0
        payload = json.loads((out_dir / "census.json").read_text(encoding="utf-8"))
        assert payload["commodity"] == 3
        assert payload["segment"] == 2
        assert payload["records"] == 3


class TestTemplates:
    def test_prints_builtin_texts(self, capsys):
        assert main(["templates"]) == 0
        out = capsys.readouterr().out
        assert "=== P1 (instruction) ===" in out
        assert "Provide your output as the UNSPSC code only." in out
        assert "Expected Output: 43212110" in out
        assert "described as '{item_description}' is:" in out


class TestClassify:
    def test_full_sweep_line_count(self, big_csv, tmp_path, capsys):
        out_dir = tmp_path / "run"
        assert main(classify_args(big_csv, out_dir)) == 0
        lines = (out_dir / "results.jsonl").read_text(encoding="utf-8").splitlines()
        # 10 records x 3 templates x 3 temperatures
        assert len(lines) == 90
        first = json.loads(lines[0])
        assert first["prediction"]["outcome"] == "code"
        assert first["match"]["commodity"] is True

    def test_rerun_uses_cache_and_is_byte_identical(self, big_csv, tmp_path, monkeypatch):
        out_dir = tmp_path / "run"
        assert main(classify_args(big_csv, out_dir)) == 0
        first_bytes = (out_dir / "results.jsonl").read_bytes()

        calls = {"n": 0}
        original = client_module.MockBackend.complete

        def counting(self, request, record_id=None):
            calls["n"] += 1
            return original(self, request, record_id=record_id)

        monkeypatch.setattr(client_module.MockBackend, "complete", counting)
        assert main(classify_args(big_csv, out_dir)) == 0
        assert calls["n"] == 0
        assert (out_dir / "results.jsonl").read_bytes() == first_bytes

    def test_resume_after_interruption(self, big_csv, tmp_path):
        out_dir = tmp_path / "run"
        assert main(classify_args(big_csv, out_dir)) == 0
        expected = (out_dir / "results.jsonl").read_bytes()
        (out_dir / "results.jsonl").unlink()
        assert main(classify_args(big_csv, out_dir)) == 0
        assert (out_dir / "results.jsonl").read_bytes() == expected

    def test_independent_runs_are_byte_identical(self, big_csv, tmp_path):
        # cold caches in separate out dirs: determinism must not rely on the cache
        assert main(classify_args(big_csv, tmp_path / "one")) == 0
        assert main(classify_args(big_csv, tmp_path / "two")) == 0
        assert (tmp_path / "one" / "results.jsonl").read_bytes() == (
            tmp_path / "two" / "results.jsonl"
        ).read_bytes()

    def test_manifest_round_trips_config(self, big_csv, tmp_path):
        out_dir = tmp_path / "run"
        args = classify_args(
            big_csv,
            out_dir,
            extra=["--template", "p1", "--temperatures", "0,1", "--seed", "3", "--model", "test-model"],
        )
        assert main(args) == 0
        manifest = json.loads((out_dir / "run_manifest.json").read_text(encoding="utf-8"))
        config = RunConfig.from_dict(manifest["config"])
        assert config.templates == ["p1"]
        assert config.temperatures == [0.0, 1.0]
        assert config.seed == 3
        assert config.model == "test-model"
        assert RunConfig.from_dict(config.to_dict()) == config
        assert manifest["results"] == 20

    def test_mock_corruption_flags(self, big_csv, tmp_path):
        out_dir = tmp_path / "run"
        args = classify_args(
            big_csv,
            out_dir,
            extra=["--template", "p1", "--temperatures", "0", "--mock-corruption", "commodity=1"],
        )
        assert main(args) == 0
        for line in (out_dir / "results.jsonl").read_text(encoding="utf-8").splitlines():
            data = json.loads(line)
            assert data["match"]["commodity"] is False
            assert data["match"]["class"] is True

    def test_sampling(self, big_csv, tmp_path):
        out_dir = tmp_path / "run"
        args = classify_args(
            big_csv, out_dir, extra=["--sample-size", "4", "--template", "p1", "--temperatures", "0"]
        )
        assert main(args) == 0
        assert len((out_dir / "results.jsonl").read_text(encoding="utf-8").splitlines()) == 4

    def test_custom_template_file(self, big_csv, tmp_path):
        template_path = tmp_path / "mine.txt"
        template_path.write_text("Choose a code.\n---\nItem: {item_name}", encoding="utf-8")
        out_dir = tmp_path / "run"
        args = classify_args(
            big_csv, out_dir, extra=["--template", f"@{template_path}", "--temperatures", "0"]
        )
        assert main(args) == 0
        line = json.loads((out_dir / "results.jsonl").read_text(encoding="utf-8").splitlines()[0])
        assert line["template_id"] == "mine"

    def test_missing_credential_exits_three(self, big_csv, tmp_path, monkeypatch, capsys):
        monkeypatch.delenv("UNSPSC_LLM_API_KEY", raising=False)
        args = [
            "classify",
            "--input",
            str(big_csv),
            "--out",
            str(tmp_path / "run"),
            "--backend",
            "openai",
            "--endpoint",
            "https://api.example.test/v1/chat/completions",
        ]
        assert main(args) == 3
        assert "UNSPSC_LLM_API_KEY" in capsys.readouterr().err

    def test_missing_endpoint_exits_three(self, big_csv, tmp_path, monkeypatch):
        monkeypatch.setenv("UNSPSC_LLM_API_KEY", "sk-test")
        args = ["classify", "--input", str(big_csv), "--out", str(tmp_path / "run"), "--backend", "openai"]
        assert main(args) == 3

    def test_unknown_template_exits_two(self, big_csv, tmp_path):
        args = classify_args(big_csv, tmp_path / "run", extra=["--template", "p9"])
        assert main(args) == 2

    def test_bad_temperature_exits_two(self, big_csv, tmp_path):
        args = classify_args(big_csv, tmp_path / "run", extra=["--temperatures", "0,3.5"])
        assert main(args) == 2

    def test_config_file_with_flag_override(self, big_csv, tmp_path):
        config_path = tmp_path / "run.json"
        config_path.write_text(
            json.dumps(
                {
                    "input": str(big_csv),
                    "backend": "mock",
                    "templates": ["p1", "p2"],
                    "temperatures": [0.0],
                    "out": str(tmp_path / "from_config"),
                }
            ),
            encoding="utf-8",
        )
        out_dir = tmp_path / "override"
        assert main(["classify", "--config", str(config_path), "--out", str(out_dir)]) == 0
        lines = (out_dir / "results.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 20
        assert not (tmp_path / "from_config").exists()


class TestReport:
    def run_classify(self, big_csv, tmp_path, extra=()):
        out_dir = tmp_path / "run"
        assert main(classify_args(big_csv, out_dir, extra=extra)) == 0
        return out_dir / "results.jsonl"

    def test_report_files_per_template_and_format(self, big_csv, tmp_path, capsys):
        results = self.run_classify(big_csv, tmp_path)
        report_dir = tmp_path / "reports"
        args = [
            "report",
            "--results",
            str(results),
            "--out",
            str(report_dir),
            "--format",
            "markdown,csv,json",
        ]
        assert main(args) == 0
        for template_id in ("P1", "P2", "P3"):
            for extension in ("md", "csv", "json"):
                assert (report_dir / f"report_{template_id}.{extension}").exists()
        markdown = (report_dir / "report_P1.md").read_text(encoding="utf-8")
        assert "| Temperature | Accuracy Commodity |" in markdown
        assert markdown.count("| 1 |") == 1

    def test_matrix_shape(self, big_csv, tmp_path):
        results = self.run_classify(big_csv, tmp_path)
        report_dir = tmp_path / "reports"
        assert main(
            ["report", "--results", str(results), "--out", str(report_dir), "--format", "json"]
        ) == 0
        payload = json.loads((report_dir / "report_P2.json").read_text(encoding="utf-8"))
        (matrix,) = payload["matrices"]
        assert [row["temperature"] for row in matrix["rows"]] == [1.0, 0.5, 0.0]
        assert all(row["n"] == 10 for row in matrix["rows"])

    def test_empty_results_file(self, tmp_path, capsys):
        results = tmp_path / "results.jsonl"
        results.write_text("", encoding="utf-8")
        report_dir = tmp_path / "reports"
        assert main(["report", "--results", str(results), "--out", str(report_dir)]) == 0
        assert "No results." in (report_dir / "report.md").read_text(encoding="utf-8")

    def test_malformed_results_exit_two(self, tmp_path, capsys):
        results = tmp_path / "results.jsonl"
        results.write_text('{"not": "a result"}\n', encoding="utf-8")
        assert main(["report", "--results", str(results), "--out", str(tmp_path / "r")]) == 2
        assert "malformed" in capsys.readouterr().err

    def test_missing_results_exit_two(self, tmp_path):
        assert main(["report", "--results", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path)]) == 2

    def test_unknown_format_exit_two(self, big_csv, tmp_path, capsys):
        results = self.run_classify(big_csv, tmp_path, extra=["--template", "p1", "--temperatures", "0"])
        args = ["report", "--results", str(results), "--out", str(tmp_path / "r"), "--format", "yaml"]
        assert main(args) == 2
        assert "unknown format" in capsys.readouterr().err


class TestMockOracleViaCli:
    def test_refusals_counted(self, big_csv, tmp_path):
        out_dir = tmp_path / "run"
        args = classify_args(
            big_csv,
            out_dir,
            extra=["--template", "p1", "--temperatures", "0", "--mock-refusal-rate", "1"],
        )
        assert main(args) == 0
        report_dir = tmp_path / "reports"
        assert main(
            [
                "report",
                "--results",
                str(out_dir / "results.jsonl"),
                "--out",
                str(report_dir),
                "--format",
                "json",
            ]
        ) == 0
        payload = json.loads((report_dir / "report_P1.json").read_text(encoding="utf-8"))
        row = payload["matrices"][0]["rows"][0]
        assert row["refusals"] == 10
        assert row["levels"]["segment"]["correct"] == 0
