"""Tests for the CLI argument parser."""

import json

import pytest

from src.cli import parse_args
from src.errors import UsageError


def test_basic_args():
    invocation = parse_args(["synth", "--seed", "7"])
    assert invocation.subcommand == "synth"
    assert invocation.config.seed == 7
    assert invocation.config.out_dir == "./out"
    assert invocation.models == []
    assert invocation.days == []
    assert invocation.baseline is None


def test_seed_optional_at_parse_time():
    assert parse_args(["build"]).config.seed is None


def test_output_dir():
    invocation = parse_args(["build", "-o", "/tmp/lifelog"])
    assert invocation.config.out_dir == "/tmp/lifelog"


def test_verbose_and_workers():
    config = parse_args(["build", "-v", "--workers", "8"]).config
    assert config.verbose is True
    assert config.workers == 8


def test_train_flags():
    invocation = parse_args(
        ["train", "--baseline", "--kappa", "-1", "--latent-dim", "3", "--epochs", "10", "--lr-enc", "0.01"]
    )
    assert invocation.baseline is True
    assert invocation.config.ccm.kappa == -1.0
    assert invocation.config.ccm.d == 3
    assert invocation.config.train.epochs == 10
    assert invocation.config.train.lr_enc == 0.01


def test_membership_form_choice():
    assert parse_args(["train", "--membership-form", "printed"]).config.ccm.membership_form == "printed"
    with pytest.raises(UsageError, match="invalid choice"):
        parse_args(["train", "--membership-form", "cubic"])


def test_zero_kappa_rejected():
    with pytest.raises(UsageError):
        parse_args(["train", "--kappa", "0"])


def test_repeatable_model_and_day():
    assert parse_args(["embed", "--model", "ae", "--model", "ccm_aae"]).models == ["ae", "ccm_aae"]
    assert parse_args(["viz", "--day", "u1:2013-11-05", "--day", "u2:2013-11-06"]).days == [
        "u1:2013-11-05",
        "u2:2013-11-06",
    ]


def test_analyze_flags():
    config = parse_args(
        ["analyze", "--no-svg", "--clusters", "3", "--runs", "2", "--aggregate-by-user", "--perplexity", "5"]
    ).config
    assert config.analysis.svg is False
    assert config.analysis.clusters == 3
    assert config.analysis.runs == 2
    assert config.analysis.aggregate_by_user is True
    assert config.analysis.perplexity == 5.0
    assert config.analysis.project is False


def test_ingest_flags():
    config = parse_args(
        [
            "ingest",
            "--dataset-root",
            "/data",
            "--timestamp-format",
            "%d/%m/%Y %H:%M",
            "--timestamp-format",
            "%Y%m%d%H%M%S",
            "--min-days",
            "3",
        ]
    ).config
    assert config.dataset_root == "/data"
    assert config.timestamp_formats == ["%d/%m/%Y %H:%M", "%Y%m%d%H%M%S"]
    assert config.min_days_per_user == 3


def test_synth_days_flag():
    invocation = parse_args(["synth", "--days", "5", "--users-per-archetype", "2"])
    assert invocation.config.synth.days == 5
    assert invocation.config.synth.users_per_archetype == 2
    assert invocation.days == []


class TestConfigFile:
    @pytest.fixture
    def config_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"seed": 3, "workers": 2, "ccm": {"kappa": -1.0, "d": 4}, "train": {"epochs": 50}}))
        return str(path)

    def test_values_from_file(self, config_file):
        config = parse_args(["train", "--config", config_file]).config
        assert config.seed == 3
        assert config.workers == 2
        assert config.ccm.kappa == -1.0
        assert config.ccm.d == 4
        assert config.train.epochs == 50
        assert config.train.batch_size == 16

    def test_flags_win(self, config_file):
        config = parse_args(["train", "--config", config_file, "--seed", "9", "--latent-dim", "2"]).config
        assert config.seed == 9
        assert config.ccm.d == 2
        assert config.ccm.kappa == -1.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(UsageError):
            parse_args(["build", "--config", str(tmp_path / "nope.json")])


def test_subcommand_required():
    with pytest.raises(UsageError):
        parse_args([])


def test_bad_flag_value_is_usage_error():
    with pytest.raises(UsageError, match="invalid int value"):
        parse_args(["train", "--seed", "1", "--epochs", "x"])
    with pytest.raises(UsageError, match="unrecognized arguments"):
        parse_args(["synth", "--seed", "1", "--no-such-flag"])


def test_help_still_exits_cleanly(capsys):
    with pytest.raises(SystemExit) as exc:
        parse_args(["synth", "--help"])
    assert exc.value.code == 0
    assert "--users-per-archetype" in capsys.readouterr().out
