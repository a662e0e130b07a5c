"""Flat config: parsing, validation, overrides, ablation toggles."""
import pytest
import yaml

from driftlearn.config import (
    ABLATION_TOGGLES,
    RunConfig,
    apply_overrides,
    apply_toggles,
    from_mapping,
    load_config,
    parse_drifts,
    parse_seeds,
    save_config,
)
from driftlearn.errors import ConfigError


def test_defaults_validate():
    RunConfig().validate()


def test_yaml_round_trip(tmp_path):
    cfg = RunConfig(seeds=(3, 4), synthetic_drifts="20:abrupt", out="runs/x")
    path = tmp_path / "cfg.yaml"
    save_config(cfg, path)
    assert load_config(path) == cfg


def test_config_file_is_flat_yaml(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump({"mode": "one-step-ahead", "epochs": 2}))
    cfg = load_config(path)
    assert cfg.mode == "one-step-ahead" and cfg.epochs == 2


def test_unknown_field_is_named():
    with pytest.raises(ConfigError, match="mystery"):
        from_mapping({"mystery": 1})


def test_non_mapping_file_rejected(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("- just\n- a list\n")
    with pytest.raises(ConfigError, match="flat key-value"):
        load_config(path)


def test_missing_file_is_config_error():
    with pytest.raises(ConfigError, match="not found"):
        load_config("nope/definitely_missing.yaml")


@pytest.mark.parametrize(
    "field,value",
    [
        ("mode", "batchwise"),
        ("fusion", "both"),
        ("normalization", "zscore"),
        ("sensor_path", "conv2"),
        ("image_stack", "tiny"),
        ("data", "stream.parquet"),
    ],
)
def test_enum_fields_reject_unknown_values(field, value):
    cfg = apply_overrides(RunConfig(), {field: value})
    with pytest.raises(ConfigError, match=field):
        cfg.validate()


def test_string_coercion_from_overrides():
    cfg = apply_overrides(
        RunConfig(),
        {"epochs": "3", "momentum": "0.5", "replay": "false", "seeds": "1,2"},
    )
    assert cfg.epochs == 3
    assert cfg.momentum == 0.5
    assert cfg.replay is False
    assert cfg.seeds == (1, 2)


def test_bad_coercion_names_the_field():
    with pytest.raises(ConfigError, match="epochs"):
        from_mapping({"epochs": "three"})


def test_override_none_is_skipped():
    cfg = apply_overrides(RunConfig(mode="one-step-ahead"), {"mode": None})
    assert cfg.mode == "one-step-ahead"


def test_override_unknown_key_rejected():
    with pytest.raises(ConfigError, match="nope"):
        apply_overrides(RunConfig(), {"nope": 1})


# ---------------------------------------------------------------- seeds


def test_seeds_from_list_and_string():
    assert parse_seeds([1, 2]) == (1, 2)
    assert parse_seeds("0, 5,9") == (0, 5, 9)


def test_seeds_duplicates_rejected():
    with pytest.raises(ConfigError, match="duplicates"):
        parse_seeds("1,1")


def test_empty_seeds_fail_validation():
    cfg = RunConfig(seeds=())
    with pytest.raises(ConfigError, match="seeds"):
        cfg.validate()


# ---------------------------------------------------------------- drifts


def test_drift_schedule_string_forms():
    assert parse_drifts("") == ()
    assert parse_drifts("20:abrupt,40:gradual") == ((20, "abrupt"), (40, "gradual"))
    assert parse_drifts("15") == ((15, "abrupt"),)


def test_drift_schedule_bad_batch():
    with pytest.raises(ConfigError, match="synthetic_drifts"):
        parse_drifts("x:abrupt")


def test_drift_schedule_bad_kind_caught_by_validation():
    cfg = RunConfig(synthetic_drifts="20:sideways")
    with pytest.raises(ConfigError, match="sideways"):
        cfg.validate()


# ---------------------------------------------------------------- more rules


def test_alpha_ordering_enforced():
    cfg = RunConfig(alpha_drift=0.01, alpha_warning=0.001)
    with pytest.raises(ConfigError, match="alpha"):
        cfg.validate()


def test_image_fusion_needs_synthetic_images():
    with pytest.raises(ConfigError, match="fusion"):
        RunConfig(fusion="concat").validate()
    RunConfig(fusion="concat", synthetic_images=True).validate()


# ---------------------------------------------------------------- toggles


@pytest.mark.parametrize(
    "toggle,field,value",
    [
        ("no-evolve", "evolve", False),
        ("no-replay", "replay", False),
        ("no-softforget", "soft_forgetting", False),
        ("no-1dcnn", "sensor_path", "raw"),
        ("shrink-2dcnn", "image_stack", "small"),
    ],
)
def test_each_toggle_maps_to_one_field(toggle, field, value):
    cfg = apply_toggles(RunConfig(), (toggle,))
    assert getattr(cfg, field) == value


def test_unknown_toggle_lists_known_ones():
    with pytest.raises(ConfigError) as err:
        apply_toggles(RunConfig(), ("warp-speed",))
    for known in ABLATION_TOGGLES:
        assert known in str(err.value)


def test_empty_toggles_change_nothing():
    assert apply_toggles(RunConfig(), ()) == RunConfig()
