import argparse
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from numpy.random import SeedSequence

from modules.analytic_utils import (
    bell_from_visibility,
    filter_transmits,
    pair_rate_at_power,
    timescale_check,
    tuning_split,
    visibility_bound,
)
from modules.errors import FitError, InputError, NoBackground, NoPeak, PairSimError
from modules.fit_utils import background_from_singles, fit_fringe, fit_hom, raw_and_net_visibility
from modules.general_utils import Estimate, format_number, parse_scan_range
from modules.model_config import ExperimentConfig, key_documentation, load_config
from modules.model_fit import DataPoint
from modules.model_histogram import Window
from modules.run_service import Run, build_report, format_report, fringe_gnuplot, hom_gnuplot
from modules.simulation_utils import simulate_franson_scan, simulate_hom_scan, simulate_pair_stream
from modules.tdc_utils import (
    accidental_level,
    build_histogram,
    car_oracle,
    compute_car,
    flatness_test,
    franson_peak_counts,
    peak_window,
)

logger = logging.getLogger("pypairsim")

DEFAULT_SEED = 1566
LOG_LEVEL_ENV = "PYPAIRSIM_LOG_LEVEL"
DEFAULT_PHASES = "0:11*pi/12:pi/12"
DEFAULT_POWERS = "100,200,400,625,800"
DEFAULT_DETUNINGS = "-0.012:0.002:0.002"


def configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else os.getenv(LOG_LEVEL_ENV, "WARNING").upper()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("[%(levelname)s] %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    try:
        root.setLevel(level)
    except ValueError:
        root.setLevel(logging.WARNING)
        logger.warning(f"unknown log level {level!r}, using WARNING")


def _count(text: str) -> int:
    value = float(text)
    if not value.is_integer() or value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(value)


def _histogram_car(config: ExperimentConfig, stream, histogram) -> tuple[float, float, float]:
    """(car, sigma, oracle); nan when no peak or no background is found."""
    try:
        window = peak_window(histogram)
        car = compute_car(histogram, window)
    except (NoPeak, NoBackground) as e:
        logger.warning(f"CAR undefined: {e}")
        return math.nan, math.nan, math.nan
    oracle = car_oracle(config, stream, histogram, window) if car.defined else math.nan
    return car.car, car.sigma, oracle


def cmd_simulate_pairs(args) -> int:
    config = load_config(args.config)
    out = Path(args.out)
    run = Run("simulate-pairs", out.parent, config, args.seed, out.stem)

    stream = simulate_pair_stream(config, args.seed)
    run.add_output(stream.to_csv(out))
    histogram = build_histogram(stream, config.histogram_bin, config.histogram_range)
    run.add_output(histogram.to_csv(Path(args.hist)))
    print(f"✓ {len(stream)} events, {histogram.total} coincidences in {len(histogram)} bins")

    car, sigma, oracle = _histogram_car(config, stream, histogram)
    run.add_result("singles_a", stream.singles(0))
    run.add_result("singles_b", stream.singles(1))
    run.add_result("coincidences", histogram.total)
    run.add_result("car", car, sigma)
    run.add_result("car_predicted", oracle)
    if math.isnan(car):
        print("✓ CAR undefined")
    else:
        print(f"✓ CAR = {car:.4g} ± {sigma:.2g} (predicted {oracle:.4g})")
    run.finish()
    return 0


def _write_hom_scan(path: Path, points) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("delay_ps,coincidences,sigma,singles_a,singles_b,acquisition_s,window_ps\n")
        for point in points:
            sigma = max(math.sqrt(point.coincidences), 1.0)
            f.write(",".join([format_number(point.control), str(point.coincidences), format_number(sigma),
                              str(point.singles_a), str(point.singles_b),
                              format_number(point.acquisition_time), format_number(point.accidentals_window)]))
            f.write("\n")
    return path


def cmd_hom(args) -> int:
    config = load_config(args.config)
    hom = config.hom
    if args.delays:
        hom = replace(hom, delays=tuple(parse_scan_range(args.delays)))
    out = Path(args.out)
    run = Run("hom", out.parent, config, args.seed, out.stem)

    points = simulate_hom_scan(config, hom, args.pairs, args.seed)
    run.add_output(_write_hom_scan(out, points))
    print(f"✓ HOM scan of {len(points)} delays written to {out}")

    parameters = None
    try:
        if args.fit:
            data = [DataPoint.from_counts(p.control, p.coincidences) for p in points]
            backgrounds = [background_from_singles(p) for p in points]
            try:
                visibilities = raw_and_net_visibility(data, backgrounds, fit_hom,
                                                      center_wavelength=config.filter.center_wavelength)
            except FitError as e:
                best = getattr(e, "best", None)
                if best is not None:
                    run.add_output(out.with_name(out.stem + "_fit.csv")).write_text(best.to_csv(), encoding="utf-8")
                raise
            net = visibilities.net_fit
            parameters = net.parameters
            bound = visibility_bound(config.facets)
            print(net.report())
            print(f"✓ V raw = {visibilities.raw}, V net = {visibilities.net}, facet ceiling = {bound:.4f}")
            run.add_output(out.with_name(out.stem + "_fit.csv")).write_text(net.to_csv(), encoding="utf-8")
            run.add_result("hom_amplitude", net.value("amplitude"), net.sigma("amplitude"))
            run.add_result("hom_visibility_raw", visibilities.raw.value, visibilities.raw.sigma)
            run.add_result("hom_visibility_net", visibilities.net.value, visibilities.net.sigma)
            run.add_result("hom_fwhm", net.value("fwhm"), net.sigma("fwhm"))
            run.add_result("hom_visibility_bound", bound)
            run.add_result("hom_chi2_per_dof", net.reduced_chi2)
        if args.gnuplot:
            script = hom_gnuplot(out.name, config.filter.center_wavelength, parameters)
            run.add_output(out.with_suffix(".gp")).write_text(script, encoding="utf-8")
    finally:
        run.finish()
    return 0


def cmd_franson(args) -> int:
    config = load_config(args.config)
    franson = config.franson
    phases = parse_scan_range(args.phases)
    out = Path(args.out)
    run = Run("franson", out.parent, config, args.seed, out.stem)

    report = timescale_check(config.timescales())
    for name, ratio in report.ratios.items():
        print(f"  timescale {name}: ratio {ratio:.3g} (margin {report.margins[name]:.3g})")

    scan = simulate_franson_scan(config, franson, phases, args.pairs, args.seed)
    windows = [Window(-franson.path_imbalance, franson.window), Window(0.0, franson.window),
               Window(franson.path_imbalance, franson.window)]
    peaks, accidentals = [], []
    for phase, stream in scan:
        histogram = build_histogram(stream, config.histogram_bin, config.histogram_range)
        counts = franson_peak_counts(histogram, franson.path_imbalance, franson.window)
        level = accidental_level(histogram, windows)
        peaks.append((phase, counts))
        accidentals.append(Estimate(level.value * counts.bins_center, level.sigma * counts.bins_center))

    with open(out, "w", encoding="utf-8", newline="\n") as f:
        f.write("phase_rad,left,center,right\n")
        for phase, counts in peaks:
            f.write(f"{format_number(phase)},{counts.left},{counts.center},{counts.right}\n")
    run.add_output(out)
    print(f"✓ Franson scan of {len(peaks)} phases written to {out}")

    flatness = flatness_test([counts.satellites for _, counts in peaks])
    print(f"✓ satellite flatness chi2 = {flatness.chi2:.3g} / {flatness.dof}, "
          f"p = {flatness.p_value:.3g} ({'pass' if flatness.passed else 'FAIL'})")
    run.add_result("satellite_flatness_chi2", flatness.chi2)
    run.add_result("satellite_flatness_p", flatness.p_value)

    parameters = None
    try:
        if args.fit:
            data = [DataPoint.from_counts(phase, counts.center) for phase, counts in peaks]
            background = Estimate(float(np.mean([a.value for a in accidentals])),
                                  math.sqrt(sum(a.sigma ** 2 for a in accidentals)) / len(accidentals))
            try:
                visibilities = raw_and_net_visibility(data, background, fit_fringe)
            except FitError as e:
                best = getattr(e, "best", None)
                if best is not None:
                    run.add_output(out.with_name(out.stem + "_fit.csv")).write_text(best.to_csv(), encoding="utf-8")
                raise
            net = visibilities.net_fit
            parameters = net.parameters
            bell = bell_from_visibility(visibilities.net.value, visibilities.net.sigma)
            bell_raw = bell_from_visibility(visibilities.raw.value, visibilities.raw.sigma)
            print(net.report())
            print(f"✓ V raw = {visibilities.raw}, V net = {visibilities.net}")
            print(f"✓ S = {bell.s_value:.4g} ± {bell.sigma_s:.2g}, violation {bell.violation_sigmas:.3g}σ "
                  f"(raw S = {bell_raw.s_value:.4g}, {bell_raw.violation_sigmas:.3g}σ)")
            run.add_output(out.with_name(out.stem + "_fit.csv")).write_text(net.to_csv(), encoding="utf-8")
            run.add_result("franson_background", background.value, background.sigma)
            run.add_result("franson_visibility_raw", visibilities.raw.value, visibilities.raw.sigma)
            run.add_result("franson_visibility_net", visibilities.net.value, visibilities.net.sigma)
            run.add_result("franson_phase_offset", net.value("phase_offset"), net.sigma("phase_offset"))
            run.add_result("bell_s", bell.s_value, bell.sigma_s)
            run.add_result("bell_violation_sigmas", bell.violation_sigmas)
            run.add_result("bell_s_raw", bell_raw.s_value, bell_raw.sigma_s)
            run.add_result("bell_violation_sigmas_raw", bell_raw.violation_sigmas)
        if args.gnuplot:
            run.add_output(out.with_suffix(".gp")).write_text(fringe_gnuplot(out.name, parameters), encoding="utf-8")
    finally:
        run.finish()
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    powers = parse_scan_range(args.powers)
    out = Path(args.out)
    run = Run("sweep", out.parent, config, args.seed, out.stem)
    seeds = SeedSequence(args.seed).generate_state(len(powers)).tolist()

    with open(out, "w", encoding="utf-8", newline="\n") as f:
        f.write("power_uW,pair_rate_hz,car,car_sigma,car_predicted\n")
        for power, seed in zip(powers, seeds):
            rate = pair_rate_at_power(power, config.source.internal_pump_power, config.source.pair_rate)
            point = replace(config, source=replace(config.source, pair_rate=rate, internal_pump_power=power))
            stream = simulate_pair_stream(point, int(seed))
            histogram = build_histogram(stream, point.histogram_bin, point.histogram_range)
            car, sigma, oracle = _histogram_car(point, stream, histogram)
            f.write(",".join(format_number(v) for v in (float(power), rate, car, sigma, oracle)) + "\n")
            print(f"✓ {power:g} µW: CAR = {car:.4g} ± {sigma:.2g} (predicted {oracle:.4g})")
    run.add_output(out)
    run.finish()
    return 0


def cmd_tuning(args) -> int:
    config = load_config(args.config)
    detunings = parse_scan_range(args.detunings)
    out = Path(args.out)
    run = Run("tuning", out.parent, config, args.seed, out.stem)

    transmitted = 0
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        f.write("pump_detuning_nm,signal_nm,idler_nm,transmitted\n")
        for detuning in detunings:
            split = tuning_split(detuning, config.source.degeneracy_wavelength)
            passes = filter_transmits(split, config.filter)
            transmitted += passes
            signal, idler = split if split else (math.nan, math.nan)
            f.write(f"{format_number(detuning)},{format_number(signal)},{format_number(idler)},{int(passes)}\n")
            status = "no phase matching" if split is None else f"{signal:.2f} / {idler:.2f} nm"
            print(f"  {detuning:+.4f} nm: {status}{' (in filter)' if passes else ''}")
    run.add_output(out)
    run.add_result("transmitted_detunings", transmitted)
    run.finish()
    print(f"✓ {transmitted} of {len(detunings)} detunings pass the filter")
    return 0


def cmd_keys(args) -> int:
    rows = key_documentation()
    width = max(len(key) for key, *_ in rows)
    for key, unit, default, description in rows:
        print(f"{key:<{width}}  [{unit}]  default {default}  {description}")
    return 0


def cmd_report(args) -> int:
    rows = build_report(args.run_dir)
    print(format_report(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pypairsim", description="Photon-pair source simulation and analysis")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    def command(name: str, handler, help_text: str, config: bool = True, seed: bool = True):
        sub = commands.add_parser(name, help=help_text)
        if config:
            sub.add_argument("config", nargs="?", default=None, help="experiment configuration file")
        if seed:
            sub.add_argument("--seed", type=int, default=DEFAULT_SEED)
        sub.set_defaults(handler=handler)
        return sub

    sub = command("simulate-pairs", cmd_simulate_pairs, "TE/TM coincidence histogram and CAR")
    sub.add_argument("--out", default="events.csv")
    sub.add_argument("--hist", default="histogram.csv")

    sub = command("hom", cmd_hom, "Hong-Ou-Mandel delay scan")
    sub.add_argument("--delays", default=None, help="start:stop:step in ps (default from config)")
    sub.add_argument("--pairs", type=_count, default=10_000_000, help="generated pairs per delay")
    sub.add_argument("--out", default="hom_scan.csv")
    sub.add_argument("--fit", action="store_true")
    sub.add_argument("--gnuplot", action="store_true")

    sub = command("franson", cmd_franson, "Franson phase scan")
    sub.add_argument("--phases", default=DEFAULT_PHASES, help="start:stop:step in rad, pi allowed")
    sub.add_argument("--pairs", type=_count, default=1_000_000, help="pairs entering the interferometer per phase")
    sub.add_argument("--out", default="fringe.csv")
    sub.add_argument("--fit", action="store_true")
    sub.add_argument("--gnuplot", action="store_true")

    sub = command("sweep", cmd_sweep, "CAR versus internal pump power")
    sub.add_argument("--powers", default=DEFAULT_POWERS, help="comma list or start:stop:step in µW")
    sub.add_argument("--out", default="sweep.csv")

    sub = command("tuning", cmd_tuning, "signal/idler split versus pump detuning")
    sub.add_argument("--detunings", default=DEFAULT_DETUNINGS, help="start:stop:step in nm")
    sub.add_argument("--out", default="tuning.csv")

    command("keys", cmd_keys, "list configuration keys", config=False, seed=False)

    sub = command("report", cmd_report, "summary of a run directory", config=False, seed=False)
    sub.add_argument("run_dir")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.handler(args)
    except PairSimError as e:
        logger.error(str(e))
        return e.exit_code
    except OSError as e:
        logger.error(f"file error: {e}")
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
