"""Tests for run configuration loading."""

from datetime import datetime
from pathlib import Path

import pytest
import yaml

from tests.conftest import tiny_context_fields
from txtrec.config import RunConfig, load_defaults, load_run_config, merge, read_config_file
from txtrec.data import ContextSchema
from txtrec.errors import ConfigError
from txtrec.models import TxTConfig


def write_yaml(path: Path, data: object) -> Path:
    path.write_text(yaml.safe_dump(data))
    return path


class TestDefaults:
    """Tests for the packaged defaults."""

    def test_defaults_resolve(self) -> None:
        """Defaults alone give a complete configuration."""
        config = load_run_config()
        assert config.model_kind == "txt"
        assert config.data.seq_len == 5
        assert config.train.batch_size == 512
        assert config.train.lr == 0.001
        assert config.serve.port == 7878
        assert config.model_options["txt"]["d_embed"] == 100
        assert config.data.context == ContextSchema()

    def test_every_kind_has_options(self) -> None:
        defaults = load_defaults()
        assert set(defaults["model"]["options"]) == {"txt", "rnn", "rnn-latent-cross", "itemcf"}


class TestPrecedence:
    """Tests for defaults < file < flags."""

    def test_file_overrides_defaults(self, tmp_path: Path) -> None:
        path = write_yaml(
            tmp_path / "run.yaml",
            {"train": {"epochs": 7}, "model": {"kind": "rnn", "options": {"rnn": {"d_embed": 16}}}},
        )
        config = load_run_config(path)
        assert config.train.epochs == 7
        assert config.train.batch_size == 512
        assert config.model_kind == "rnn"
        assert config.model_options["rnn"] == {"d_embed": 16}
        assert config.model_options["txt"]["d_embed"] == 100

    def test_flags_override_file(self, tmp_path: Path) -> None:
        """Set flags win over the file; unset (None) flags leave it alone."""
        path = write_yaml(tmp_path / "run.yaml", {"train": {"epochs": 7, "lr": 0.5}})
        config = load_run_config(path, {"train.epochs": 2, "train.lr": None})
        assert config.train.epochs == 2
        assert config.train.lr == 0.5

    def test_unquoted_cutoff_date(self, tmp_path: Path) -> None:
        """A YAML date for the cutoff is accepted."""
        path = tmp_path / "run.yaml"
        path.write_text("data:\n  valid_cutoff: 2024-11-01\n")
        config = load_run_config(path)
        assert config.data.cutoff is not None
        assert config.data.cutoff.month == 11


class TestValidation:
    """Tests for rejected configurations."""

    def test_unknown_file_key(self, tmp_path: Path) -> None:
        path = write_yaml(tmp_path / "run.yaml", {"train": {"epoch": 3}})
        with pytest.raises(ConfigError, match="train.epoch"):
            load_run_config(path)

    def test_unknown_flag_key(self) -> None:
        with pytest.raises(ConfigError, match="serve.hostname"):
            load_run_config(overrides={"serve.hostname": "x"})

    def test_mapping_replaced_by_scalar(self) -> None:
        with pytest.raises(ConfigError, match="must be a mapping"):
            merge(load_defaults(), {"train": 3})

    def test_bad_values(self, tmp_path: Path) -> None:
        """Values are validated by the section they belong to."""
        with pytest.raises(ConfigError, match="batch_size"):
            load_run_config(overrides={"train.batch_size": 0})
        with pytest.raises(ConfigError, match="seq_len"):
            load_run_config(overrides={"data.seq_len": 0})
        with pytest.raises(ConfigError, match="model.kind"):
            load_run_config(overrides={"model.kind": "lstm"})
        with pytest.raises(ConfigError, match="valid_cutoff"):
            load_run_config(overrides={"data.valid_cutoff": "yesterday"})
        with pytest.raises(ConfigError, match="Port"):
            load_run_config(overrides={"serve.port": -1})
        with pytest.raises(ConfigError, match="bundle.created"):
            load_run_config(overrides={"bundle.created": "soon"})

    def test_not_a_mapping(self, tmp_path: Path) -> None:
        path = tmp_path / "run.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError, match="mapping"):
            read_config_file(path)

    def test_invalid_yaml(self, tmp_path: Path) -> None:
        path = tmp_path / "run.yaml"
        path.write_text("train: [unclosed\n")
        with pytest.raises(ConfigError, match="not valid YAML"):
            read_config_file(path)

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(ConfigError, match="Cannot read"):
            read_config_file(tmp_path / "absent.yaml")

    def test_empty_file(self, tmp_path: Path) -> None:
        path = tmp_path / "run.yaml"
        path.write_text("")
        assert read_config_file(path) == {}


class TestRunConfig:
    """Tests for the resolved configuration object."""

    def test_yaml_round_trip(self, tmp_path: Path) -> None:
        """A written run config loads back to the same values."""
        config = load_run_config(overrides={"train.epochs": 4, "data.valid_cutoff": "2024-10-01"})
        path = config.write(tmp_path / "out")
        assert path.name == "run_config.yaml"
        assert load_run_config(path) == config

    def test_bundle_identity_round_trip(self, tmp_path: Path) -> None:
        """Version tag and creation time survive a written run config."""
        config = load_run_config(
            overrides={"bundle.version": "v2", "bundle.created": "2024-06-01T10:00:00+02:00"}
        )
        assert config.version_tag == "v2"
        assert config.created_at == datetime(2024, 6, 1, 8, 0)
        assert load_run_config(config.write(tmp_path)) == config
        assert load_run_config().version_tag is None

    def test_to_dict_from_dict(self) -> None:
        config = load_run_config(overrides={"model.kind": "itemcf"})
        assert RunConfig.from_dict(config.to_dict()) == config

    def test_model_config_sized_to_vocab(self) -> None:
        """The model config takes sizes from the data and options from the file."""

        class FakeVocabs:
            items = range(30)

            def context_fields(self) -> tuple:
                return tiny_context_fields()

        config = load_run_config(
            overrides={"model.options.txt.d_embed": 8, "model.options.txt.seq_heads": 2}
        )
        model_config = config.model_config(FakeVocabs())  # type: ignore[arg-type]
        assert isinstance(model_config, TxTConfig)
        assert model_config.item_vocab_size == 30
        assert model_config.d_embed == 8
        assert model_config.context_names == ("hour", "weather", "store")

    def test_seed(self) -> None:
        assert load_run_config(overrides={"train.seed": 11}).seed == 11
