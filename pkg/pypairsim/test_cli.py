import json
import math

import pytest

from modules.model_config import load_config
from modules.run_service import read_results
from pypairsim.main import main

PAIRS_CONFIG = """\
source.pair_rate = 1e6
detector_a.dark_rate = 1.3e5
detector_b.dark_rate = 1.3e5
detector_a.dead_time = 0
detector_b.dead_time = 0
experiment.duration = 2.0
"""

FRANSON_CONFIG = """\
source.pair_rate = 1e5
detector_a.efficiency = 1
detector_b.efficiency = 1
detector_a.dead_time = 0
detector_b.dead_time = 0
franson.intrinsic_visibility = 0.956
"""


def write_config(tmp_path, text: str, name: str = "run.conf"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def simulate_pairs(directory, config: str, seed: int = 1) -> int:
    return main(["simulate-pairs", config, "--seed", str(seed),
                 "--out", str(directory / "events.csv"), "--hist", str(directory / "histogram.csv")])


def test_keys_lists_the_table(capsys):
    assert main(["keys"]) == 0
    out = capsys.readouterr().out
    assert "source.pair_rate" in out
    assert "experiment.histogram_bin" in out


def test_simulate_pairs_is_byte_identical(tmp_path):
    config = write_config(tmp_path, PAIRS_CONFIG)
    first, second = tmp_path / "first", tmp_path / "second"
    first.mkdir()
    second.mkdir()
    assert simulate_pairs(first, config) == 0
    assert simulate_pairs(second, config) == 0
    for name in ("events.csv", "histogram.csv", "events_results.csv", "simulate-pairs.manifest.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name

    manifest = json.loads((first / "simulate-pairs.manifest.json").read_text(encoding="utf-8"))
    assert manifest["seed"] == 1
    assert set(manifest["outputs"]) == {"events.csv", "histogram.csv", "events_results.csv"}
    centers = [line.split(",")[0] for line in (first / "histogram.csv").read_text().splitlines()[1:3]]
    assert float(centers[1]) - float(centers[0]) == 164.0

    results = read_results(first / "events_results.csv")
    car, oracle = float(results["car"][0]), float(results["car_predicted"][0])
    assert car == pytest.approx(oracle, rel=0.1)


def test_silent_source_reports_undefined_car(tmp_path, capsys):
    config = write_config(tmp_path, "source.pair_rate = 0\ndetector_a.dark_rate = 0\ndetector_b.dark_rate = 0\n")
    assert simulate_pairs(tmp_path, config) == 0
    assert "CAR undefined" in capsys.readouterr().out
    assert read_results(tmp_path / "events_results.csv")["car"] == ("nan", "nan")


def test_config_errors_exit_with_two(tmp_path):
    assert simulate_pairs(tmp_path, write_config(tmp_path, "source.colour = blue\n")) == 2
    assert simulate_pairs(tmp_path, write_config(tmp_path, "facets.reflectivity = 2\n")) == 2
    assert simulate_pairs(tmp_path, str(tmp_path / "missing.conf")) == 2


def test_capacity_error_exits_with_three(tmp_path):
    assert simulate_pairs(tmp_path, write_config(tmp_path, "experiment.duration = 100\n")) == 3


def test_single_point_hom_scan_fails_fit_but_keeps_scan(tmp_path):
    out = tmp_path / "scan.csv"
    code = main(["hom", "--delays", "0", "--pairs", "1e5", "--out", str(out), "--fit"])
    assert code == 4
    assert out.is_file()
    assert (tmp_path / "hom.manifest.json").is_file()


def test_bad_delay_spec_exits_with_two(tmp_path):
    assert main(["hom", "--delays", "1:0:0.1", "--out", str(tmp_path / "scan.csv")]) == 2


def test_report_of_full_run(tmp_path, capsys):
    assert simulate_pairs(tmp_path, write_config(tmp_path, PAIRS_CONFIG)) == 0
    assert main(["hom", "--delays=-1.5:1.5:0.1", "--out", str(tmp_path / "scan.csv"), "--fit",
                 "--gnuplot"]) == 0
    assert main(["franson", write_config(tmp_path, FRANSON_CONFIG, "franson.conf"), "--pairs", "1e5",
                 "--out", str(tmp_path / "fringe.csv"), "--fit", "--gnuplot"]) == 0
    assert (tmp_path / "scan.gp").is_file()
    assert (tmp_path / "fringe_fit.csv").is_file()
    fringe_rows = (tmp_path / "fringe.csv").read_text().splitlines()
    assert fringe_rows[0] == "phase_rad,left,center,right"
    assert len(fringe_rows) == 13
    capsys.readouterr()

    assert main(["report", str(tmp_path)]) == 0
    table = capsys.readouterr().out
    assert "missing" not in table
    assert "6/6 acceptance thresholds met" in table

    results = {}
    for name in ("events_results.csv", "scan_results.csv", "fringe_results.csv"):
        results.update(read_results(tmp_path / name))
    for quantity in ("car", "hom_visibility_net", "hom_fwhm", "franson_visibility_net", "bell_s",
                     "bell_violation_sigmas"):
        value, sigma = results[quantity]
        assert value in table
    assert float(results["satellite_flatness_p"][0]) > 5.7e-7

    franson = load_config(str(tmp_path / "franson.conf"))
    expected = franson.franson.intrinsic_visibility * math.exp(
        -franson.franson.path_imbalance / franson.source.pump_coherence)
    value, sigma = (float(v) for v in results["franson_visibility_net"])
    assert abs(value - expected) < 2 * sigma


def test_report_of_empty_directory(tmp_path):
    assert main(["report", str(tmp_path)]) == 2


def test_sweep_and_tuning(tmp_path):
    config = write_config(tmp_path, PAIRS_CONFIG)
    assert main(["sweep", config, "--powers", "312.5,625", "--out", str(tmp_path / "sweep.csv")]) == 0
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert rows[0] == "power_uW,pair_rate_hz,car,car_sigma,car_predicted"
    assert rows[1].split(",")[1] == "500000.0"
    assert main(["tuning", "--detunings=-0.02,-0.004,0", "--out", str(tmp_path / "tuning.csv")]) == 0
    lines = (tmp_path / "tuning.csv").read_text().splitlines()
    assert lines[-1] == "0.0,1566.0,1566.0,1"
    assert lines[1].endswith(",0")


def test_default_config_car_matches_oracle_under_dead_time(tmp_path):
    config = write_config(tmp_path, "experiment.duration = 8\n")
    assert main(["simulate-pairs", config, "--out", str(tmp_path / "events.csv"),
                 "--hist", str(tmp_path / "histogram.csv")]) == 0
    results = read_results(tmp_path / "events_results.csv")
    car, sigma = (float(v) for v in results["car"])
    oracle = float(results["car_predicted"][0])
    assert car == pytest.approx(oracle, rel=0.1)
    assert abs(car - oracle) < 3 * sigma


def test_franson_without_entanglement_gives_no_violation(tmp_path):
    text = FRANSON_CONFIG.replace("franson.intrinsic_visibility = 0.956", "franson.intrinsic_visibility = 0")
    config = write_config(tmp_path, text)
    assert main(["franson", config, "--pairs", "1e5", "--out", str(tmp_path / "fringe.csv"), "--fit"]) == 0
    results = read_results(tmp_path / "fringe_results.csv")
    assert float(results["franson_visibility_net"][0]) < 0.05
    assert float(results["bell_s"][0]) < 0.15


def test_hom_without_facet_reflections_reaches_full_visibility(tmp_path):
    config = write_config(tmp_path, "facets.reflectivity = 0\nhom.intrinsic_visibility = 1\n")
    assert main(["hom", config, "--out", str(tmp_path / "scan.csv"), "--fit"]) == 0
    value, sigma = (float(v) for v in read_results(tmp_path / "scan_results.csv")["hom_visibility_net"])
    assert abs(value - 1.0) < 2 * sigma


def test_unwritable_output_exits_with_two(tmp_path):
    config = write_config(tmp_path, PAIRS_CONFIG)
    code = main(["simulate-pairs", config, "--out", str(tmp_path / "events.csv"),
                 "--hist", str(tmp_path / "missing" / "histogram.csv")])
    assert code == 2
