from dataclasses import replace
from pathlib import Path

import pytest

from modules.analytic_utils import visibility_bound
from modules.errors import InputError, InvalidValue, InvariantViolation, UnknownKey
from modules.model_config import (
    KEY_TABLE,
    ExperimentConfig,
    config_digest,
    key_documentation,
    load_config,
    parse_config,
    serialize_config,
    validate,
)
from modules.model_params import FacetParams


def test_defaults_are_valid():
    config = ExperimentConfig()
    assert validate(config) == []
    assert config.histogram_bin == 164.0
    assert len(config.hom.delays) == 41
    assert config.hom.delays[0] == -2.0 and config.hom.delays[-1] == 2.0


def test_empty_document_gives_defaults():
    assert parse_config("# nothing here\n\n") == ExperimentConfig()


def test_serialize_parse_is_identity():
    config = replace(ExperimentConfig(), facets=FacetParams(reflectivity=0.1, eta_te=0.5, eta_tm=0.25))
    assert parse_config(serialize_config(config)) == config
    assert config_digest(parse_config(serialize_config(config))) == config_digest(config)


def test_values_and_inline_comments():
    config = parse_config(
        "source.pair_rate = 1e5   # reduced brightness\n"
        "hom.delays = -1:1:0.5\n"
        "detector_a.dark_rate = 250\n"
    )
    assert config.source.pair_rate == 1e5
    assert config.hom.delays == (-1.0, -0.5, 0.0, 0.5, 1.0)
    assert config.detector_a.dark_rate == 250.0
    assert config.detector_b.dark_rate == ExperimentConfig().detector_b.dark_rate


def test_unknown_key_reports_line():
    with pytest.raises(UnknownKey) as excinfo:
        parse_config("source.pair_rate = 1e5\nsource.colour = blue\n")
    assert excinfo.value.key == "source.colour"
    assert excinfo.value.line == 2


@pytest.mark.parametrize("text", [
    "source.pair_rate = fast",
    "source.pair_rate = nan",
    "source.pair_rate = 1\nsource.pair_rate = 2",
    "just some words",
])
def test_invalid_values(text):
    with pytest.raises(InvalidValue):
        parse_config(text)


def test_invariants_are_collected():
    with pytest.raises(InvariantViolation) as excinfo:
        parse_config("facets.reflectivity = 1.0\ndetector_a.efficiency = 1.5\n")
    violations = excinfo.value.violations
    assert any(v.startswith("facets.reflectivity") for v in violations)
    assert any(v.startswith("detector_a.efficiency") for v in violations)


def test_histogram_range_needs_ten_bins():
    with pytest.raises(InvariantViolation):
        parse_config("experiment.histogram_bin = 164\nexperiment.histogram_range = 1000\n")


def test_franson_window_below_imbalance():
    with pytest.raises(InvariantViolation):
        parse_config("franson.window = 3000\n")


def test_key_documentation_lists_every_key():
    rows = key_documentation()
    assert [row[0] for row in rows] == [spec.key for spec in KEY_TABLE]
    assert dict((row[0], row[2]) for row in rows)["source.pair_rate"] == "7200000.0"


def test_load_config(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("franson.path_imbalance = 3000\n", encoding="utf-8")
    assert load_config(path).franson.path_imbalance == 3000.0
    assert load_config(None) == ExperimentConfig()
    with pytest.raises(InputError):
        load_config(tmp_path / "missing.conf")


def test_timescales_follow_config():
    t = ExperimentConfig().timescales()
    assert t.path_imbalance == 2500.0
    assert t.detector_jitter == 200.0
    assert t.pump_coherence == 1e6
    assert 0.6 < t.photon_coherence < 0.85


def test_reference_source_config():
    config = load_config(Path(__file__).resolve().parent.parent / "configs" / "reference_source.conf")
    assert validate(config) == []
    assert config.hom.delays[0] == -1.5 and len(config.hom.delays) == 31
    assert visibility_bound(config.facets) == pytest.approx(0.905, abs=5e-4)
