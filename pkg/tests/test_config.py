from pathlib import Path

import pytest

from callaudit.config import (
    Ablation,
    LossName,
    ModelConfig,
    RunConfig,
    load_config,
    parse_config_text,
)
from callaudit.exceptions import ConfigurationError


def test_defaults() -> None:
    config = ModelConfig()
    assert (config.epochs, config.batch_size, config.learning_rate) == (600, 30, 2.5e-4)
    assert (config.heads, config.head_dim, config.hidden) == (8, 64, 256)
    assert config.embedding_dim == 64
    assert config.ablation == Ablation.FULL
    assert config.num_logits == 2
    assert ModelConfig(loss=LossName.BCE_LOGITS).num_logits == 1


def test_ablation_switches() -> None:
    assert not Ablation.GCN_ONLY.uses_edge_predictor
    assert Ablation.EDGE_GCN.uses_edge_predictor and not Ablation.EDGE_GCN.uses_cluster
    assert Ablation.EDGE_CLUSTER_GCN.uses_cluster and not Ablation.EDGE_CLUSTER_GCN.uses_conformer
    assert Ablation.FULL.uses_conformer


def test_parse_config_text() -> None:
    text = """
# model settings
hidden = 128
ablation = "edge_gcn"   # quoted
betas = 0.9, 0.98

learning_rate=0.001
"""
    assert parse_config_text(text) == {
        "hidden": ("128", 3),
        "ablation": ("edge_gcn", 4),
        "betas": ("0.9, 0.98", 5),
        "learning_rate": ("0.001", 7),
    }


@pytest.mark.parametrize("line", ["hidden", "= 3", "just words"])
def test_parse_config_text_rejects_malformed_lines(line: str) -> None:
    with pytest.raises(ConfigurationError, match="cfg:1: expected 'key = value'"):
        parse_config_text(line, "cfg")


def test_load_config_from_file(tmp_path: Path) -> None:
    path = tmp_path / "run.cfg"
    path.write_text(
        "hidden = 32\nadj_sq = true\nbetas = 0.8, 0.9\nvariants = gcn_only, full\n"
        "seeds = 1,2,3\nmanifest = data/manifest.jsonl\n",
        encoding="utf-8",
    )
    config = load_config(path)
    assert config.hidden == 32
    assert config.adj_sq is True
    assert config.betas == (0.8, 0.9)
    assert config.variants == (Ablation.GCN_ONLY, Ablation.FULL)
    assert config.seeds == (1, 2, 3)
    assert config.manifest == Path("data/manifest.jsonl")


def test_overrides_win_and_none_is_ignored(tmp_path: Path) -> None:
    path = tmp_path / "run.cfg"
    path.write_text("epochs = 10\nseed = 4\n", encoding="utf-8")
    config = load_config(path, {"epochs": 3, "seed": None})
    assert (config.epochs, config.seed) == (3, 4)
    assert load_config(None, {"epochs": None}).epochs == 600


def test_unknown_key_names_the_line(tmp_path: Path) -> None:
    path = tmp_path / "run.cfg"
    path.write_text("hidden = 8\nhiden = 9\n", encoding="utf-8")
    with pytest.raises(ConfigurationError, match=r"run.cfg:2: unknown configuration key 'hiden'"):
        load_config(path)
    with pytest.raises(ConfigurationError, match="unknown configuration key 'colour'"):
        load_config(None, {"colour": "red"})


@pytest.mark.parametrize(
    "settings,field",
    [
        ({"hidden": "0"}, "hidden"),
        ({"conv_kernel_size": "4"}, "conv_kernel_size"),
        ({"betas": "0.9, 1.5"}, "betas"),
        ({"dropout": "1.0"}, "dropout"),
        ({"dtype": "float16"}, "dtype"),
        ({"ablation": "everything"}, "ablation"),
    ],
)
def test_invalid_values(settings: dict[str, str], field: str) -> None:
    with pytest.raises(ConfigurationError, match=f"invalid configuration: {field}"):
        load_config(None, settings)


def test_missing_config_file(tmp_path: Path) -> None:
    with pytest.raises(ConfigurationError, match="cannot read config file"):
        load_config(tmp_path / "absent.cfg")


def test_model_settings_drop_run_options(tmp_path: Path) -> None:
    config = RunConfig(hidden=16, out=tmp_path, workers=4, seeds=(1, 2))
    settings = config.model_settings()
    assert type(settings) is ModelConfig
    assert settings.hidden == 16
    assert "out" not in settings.model_dump()
