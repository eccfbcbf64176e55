"""Tests for the txtrec command line."""

import json
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner, Result

from txtrec.cli import main
from txtrec.serve import RecommendationServer
from txtrec.store import ModelBundle

TRAIN_FLAGS = [
    "--model", "txt", "--d-embed", "8", "--epochs", "2", "--batch-size", "32", "--seed", "7",
]


def invoke(*args: str) -> Result:
    return CliRunner().invoke(main, list(args))


@pytest.fixture
def trained(tmp_path: Path, synthetic_csv: Path) -> Path:
    """Output directory of a small TxT training run with a validation split."""
    out = tmp_path / "run"
    result = invoke(
        "train", "--data", str(synthetic_csv), "--out", str(out), "--valid-cutoff", "2024-11-01",
        "--version", "t1", *TRAIN_FLAGS,
    )
    assert result.exit_code == 0, result.output
    return out


class TestSynth:
    """Tests for the synth command."""

    def test_preset(self, tmp_path: Path) -> None:
        """A preset writes the CSV and its metadata."""
        out = tmp_path / "orders.csv"
        result = invoke("synth", "--spec", "overfit", "--out", str(out))
        assert result.exit_code == 0, result.output
        assert "Wrote 200 orders" in result.output
        assert out.read_text().splitlines()[0].startswith("order_id,")
        meta = yaml.safe_load(out.with_suffix(".meta.yaml").read_text())
        assert meta["rule"] == "joint"

    def test_unknown_spec(self, tmp_path: Path) -> None:
        result = invoke("synth", "--spec", "no-such-spec", "--out", str(tmp_path / "x.csv"))
        assert result.exit_code == 1
        assert "Error [config]" in result.output


class TestPreprocess:
    """Tests for the preprocess command."""

    def test_cache_then_train(self, tmp_path: Path, synthetic_csv: Path) -> None:
        """A cache directory is accepted wherever a CSV is."""
        cache = tmp_path / "cache"
        result = invoke(
            "--json", "preprocess", "--data", str(synthetic_csv), "--out", str(cache),
            "--valid-cutoff", "2024-11-01",
        )
        assert result.exit_code == 0, result.output
        summary = json.loads(result.output)
        assert 3 < summary["items"] <= 12
        assert summary["valid_examples"] > 0
        assert (cache / "run_config.yaml").is_file()

        out = tmp_path / "run"
        result = invoke("train", "--data", str(cache), "--out", str(out), *TRAIN_FLAGS)
        assert result.exit_code == 0, result.output
        assert (out / "eval_report.txt").is_file()

    def test_mixed_time_offsets(self, tmp_path: Path) -> None:
        """Offset, Z-suffixed and naive times split against an offset cutoff."""
        csv = tmp_path / "orders.csv"
        csv.write_text(
            "order_id,timestamp,store_id,region,weather,temperature_c,items\n"
            "a,2024-03-01T09:00:00+02:00,s1,r,sunny,10,burger|fries\n"
            "b,2024-03-01T07:30:00,s1,r,sunny,10,burger|cola\n"
            "c,2024-03-01T08:00:00Z,s1,r,rain,10,fries|cola\n"
            "d,2024-03-01T12:00:00+01:00,s1,r,rain,10,burger|fries\n"
        )
        result = invoke(
            "--json", "preprocess", "--data", str(csv), "--out", str(tmp_path / "cache"),
            "--valid-cutoff", "2024-03-01T09:45:00+02:00",
        )
        assert result.exit_code == 0, result.output
        summary = json.loads(result.output)
        assert summary["train_examples"] == 2
        assert summary["valid_examples"] == 2



class TestTrain:
    """Tests for the train command."""

    def test_outputs(self, trained: Path) -> None:
        """Training writes the bundle, loss trace, run config and report."""
        assert ModelBundle.load(trained / "bundle.txtb").version_tag == "t1"
        trace = (trained / "loss_trace.txt").read_text().splitlines()
        assert trace[0].startswith("1\t")
        run = yaml.safe_load((trained / "run_config.yaml").read_text())
        assert run["command"] == "train"
        assert run["train"]["seed"] == 7
        assert run["model"]["options"]["txt"]["d_embed"] == 8
        assert (trained / "eval_report.txt").read_text().startswith("model\tk\taccuracy\tn")

    def test_same_seed_same_bundle(self, tmp_path: Path, synthetic_csv: Path) -> None:
        """Two runs with one seed write byte-identical bundles."""
        for name in ("a", "b"):
            out = tmp_path / name
            result = invoke("train", "--data", str(synthetic_csv), "--out", str(out), *TRAIN_FLAGS)
            assert result.exit_code == 0, result.output
        first, second = (tmp_path / name / "bundle.txtb" for name in ("a", "b"))
        assert first.read_bytes() == second.read_bytes()

    def test_rerun_from_run_config(
        self, trained: Path, tmp_path: Path, synthetic_csv: Path
    ) -> None:
        """The written run config reproduces the bundle."""
        again = tmp_path / "again"
        result = invoke(
            "--config", str(trained / "run_config.yaml"),
            "train", "--data", str(synthetic_csv), "--out", str(again),
        )
        assert result.exit_code == 0, result.output
        assert (again / "bundle.txtb").read_bytes() == (trained / "bundle.txtb").read_bytes()

    def test_run_config_keeps_version_and_created(
        self, tmp_path: Path, synthetic_csv: Path
    ) -> None:
        """Version tag and creation time are part of the written run config."""
        first = tmp_path / "first"
        result = invoke(
            "train", "--data", str(synthetic_csv), "--out", str(first), "--model", "itemcf",
            "--version", "v9", "--created", "2025-01-02T03:04:05Z",
        )
        assert result.exit_code == 0, result.output
        run = yaml.safe_load((first / "run_config.yaml").read_text())
        assert run["bundle"] == {"version": "v9", "created": "2025-01-02T03:04:05Z"}

        second = tmp_path / "second"
        result = invoke(
            "--config", str(first / "run_config.yaml"),
            "train", "--data", str(synthetic_csv), "--out", str(second),
        )
        assert result.exit_code == 0, result.output
        assert ModelBundle.load(second / "bundle.txtb").version_tag == "v9"
        assert (second / "bundle.txtb").read_bytes() == (first / "bundle.txtb").read_bytes()

    def test_bad_created(self, tmp_path: Path, synthetic_csv: Path) -> None:
        result = invoke(
            "train", "--data", str(synthetic_csv), "--out", str(tmp_path / "r"),
            "--created", "last tuesday",
        )
        assert result.exit_code == 1
        assert "Error [config]" in result.output

    def test_json_summary(self, tmp_path: Path, synthetic_csv: Path) -> None:
        result = invoke(
            "--json", "train", "--data", str(synthetic_csv), "--out", str(tmp_path / "r"),
            "--model", "itemcf",
        )
        assert result.exit_code == 0, result.output
        summary = json.loads(result.output)
        assert summary["kind"] == "itemcf"
        assert summary["steps"] == 0
        assert summary["version"].startswith("itemcf-")

    def test_bad_config_key(self, tmp_path: Path, synthetic_csv: Path) -> None:
        """Configuration errors exit 1 with a categorized line."""
        config = tmp_path / "bad.yaml"
        config.write_text("train:\n  epoch: 3\n")
        result = invoke(
            "--config", str(config),
            "train", "--data", str(synthetic_csv), "--out", str(tmp_path / "r"),
        )
        assert result.exit_code == 1
        assert "Error [config]" in result.output
        assert "train.epoch" in result.output

    def test_bad_flag(self, tmp_path: Path, synthetic_csv: Path) -> None:
        """Unknown choices are usage errors."""
        result = invoke(
            "train", "--data", str(synthetic_csv), "--out", str(tmp_path), "--model", "lstm"
        )
        assert result.exit_code == 2

    def test_missing_data(self, tmp_path: Path) -> None:
        result = invoke("train", "--data", str(tmp_path / "absent.csv"), "--out", str(tmp_path))
        assert result.exit_code == 2


class TestEval:
    """Tests for the eval command."""

    def test_report(self, trained: Path, synthetic_csv: Path) -> None:
        """The report lists each k and Top-1 never beats Top-3."""
        bundle = str(trained / "bundle.txtb")
        result = invoke("--json", "eval", "--bundle", bundle, "--data", str(synthetic_csv))
        assert result.exit_code == 0, result.output
        report = json.loads(result.output)
        assert report["model"] == "t1"
        assert report["accuracy"]["top1"] <= report["accuracy"]["top3"]

    def test_text_and_out(self, trained: Path, synthetic_csv: Path, tmp_path: Path) -> None:
        out = tmp_path / "eval"
        result = invoke(
            "eval", "--bundle", str(trained / "bundle.txtb"), "--data", str(synthetic_csv),
            "--k", "1", "--k", "5", "--out", str(out),
        )
        assert result.exit_code == 0, result.output
        lines = result.output.splitlines()
        assert lines[0] == "model\tk\taccuracy\tn"
        assert [line.split("\t")[1] for line in lines[1:]] == ["1", "5"]
        assert (out / "eval_report.txt").read_text() == result.output


class TestPredict:
    """Tests for the predict command."""

    def test_basket(self, trained: Path) -> None:
        result = invoke(
            "predict", "--bundle", str(trained / "bundle.txtb"), "--item", "item_001",
            "--context", "weather=rain", "--context", "timestamp=2024-05-01T12:00:00", "--k", "2",
        )
        assert result.exit_code == 0, result.output
        lines = result.output.splitlines()
        assert [line.split("\t")[0] for line in lines] == ["1", "2", "version"]
        assert lines[-1] == "version\tt1"

    def test_cold_start(self, trained: Path) -> None:
        result = invoke("--json", "predict", "--bundle", str(trained / "bundle.txtb"))
        assert result.exit_code == 0, result.output
        reply = json.loads(result.output)
        assert reply["cold_start"] is True
        assert len(reply["recommendations"]) == 3

    def test_needs_one_source(self, trained: Path) -> None:
        """Exactly one of --bundle and --endpoint is required."""
        assert invoke("predict", "--item", "item_001").exit_code == 2
        result = invoke(
            "predict", "--bundle", str(trained / "bundle.txtb"), "--endpoint", "localhost:1"
        )
        assert result.exit_code == 2

    def test_bad_k(self, trained: Path) -> None:
        result = invoke("predict", "--bundle", str(trained / "bundle.txtb"), "--k", "0")
        assert result.exit_code == 1
        assert "Error [contract]" in result.output

    def test_bad_context(self, trained: Path) -> None:
        result = invoke("predict", "--bundle", str(trained / "bundle.txtb"), "--context", "rain")
        assert result.exit_code == 1
        assert "key=value" in result.output


class TestBundleCommands:
    """Tests for inspect, publish and dump-attention."""

    def test_inspect(self, trained: Path) -> None:
        result = invoke("inspect", str(trained / "bundle.txtb"))
        assert result.exit_code == 0, result.output
        assert "Model Bundle" in result.output
        assert "Version tag:    t1" in result.output

    def test_inspect_corrupt(self, trained: Path, tmp_path: Path) -> None:
        """A damaged bundle reports a checksum error."""
        data = (trained / "bundle.txtb").read_bytes()
        broken = tmp_path / "broken.txtb"
        broken.write_bytes(data[:-10])
        result = invoke("inspect", str(broken))
        assert result.exit_code == 1
        assert "Error [checksum]" in result.output

    def test_publish(self, trained: Path, tmp_path: Path) -> None:
        store = tmp_path / "store"
        result = invoke("--json", "publish", str(trained / "bundle.txtb"), "--store", str(store))
        assert result.exit_code == 0, result.output
        assert json.loads(result.output)["version_tag"] == "t1"
        assert (store / "t1.txtb").is_file()

    def test_dump_attention(self, trained: Path, tmp_path: Path) -> None:
        """The table has one row per head and query field."""
        out = tmp_path / "attention.tsv"
        result = invoke(
            "dump-attention", "--bundle", str(trained / "bundle.txtb"),
            "--context", "weather=sunny", "--out", str(out),
        )
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "layer\thead\tquery\thour\tweekday\ttemperature\tweather\tstore\tregion"
        assert len(lines) == 1 + 2 * 6

    def test_dump_attention_needs_txt(self, tmp_path: Path, synthetic_csv: Path) -> None:
        out = tmp_path / "rnn"
        result = invoke(
            "train", "--data", str(synthetic_csv), "--out", str(out), "--model", "rnn",
            "--d-embed", "4", "--epochs", "1",
        )
        assert result.exit_code == 0, result.output
        result = invoke("dump-attention", "--bundle", str(out / "bundle.txtb"))
        assert result.exit_code == 1
        assert "Error [contract]" in result.output


class TestServe:
    """Tests for the serve command."""

    def test_reports_bound_port(self, monkeypatch: pytest.MonkeyPatch, trained: Path) -> None:
        """Asking for port 0 reports the port the system picked."""
        monkeypatch.setattr(RecommendationServer, "serve_forever", lambda self, *_: None)
        result = invoke("serve", "--bundle", str(trained / "bundle.txtb"), "--port", "0")
        assert result.exit_code == 0, result.output
        assert "Serving t1 on 127.0.0.1:" in result.output
        port = int(result.output.split("127.0.0.1:")[1].split()[0])
        assert port > 0

    def test_needs_one_source(self, trained: Path) -> None:
        assert invoke("serve").exit_code == 2
