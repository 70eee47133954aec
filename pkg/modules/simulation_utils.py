"""
Seeded Monte Carlo generation of detection events.

Every run draws from numpy's PCG64 generator seeded through a SeedSequence;
scan points get their own child sequence via `SeedSequence.spawn`, so the
output depends only on (config, seed) and never on the worker count.
"""
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Callable, Sequence

import numpy as np
from numpy.random import PCG64, Generator, SeedSequence
from tqdm import tqdm

from modules.analytic_utils import HomDipParams, franson_peak_weights, hom_dip_rate, timescale_check
from modules.errors import CapacityError, DomainError
from modules.general_utils import PS_PER_NS, PS_PER_S, sigma_from_fwhm
from modules.model_config import ExperimentConfig, config_digest
from modules.model_events import EventStream, ScanPoint
from modules.model_params import DetectorParams, FransonConfig, HomConfig

logger = logging.getLogger(__name__)

MAX_EXPECTED_EVENTS = 5e7
WORKERS_ENV = "PYPAIRSIM_WORKERS"


def make_rng(seed: int | SeedSequence) -> Generator:
    if not isinstance(seed, SeedSequence):
        seed = SeedSequence(seed)
    return Generator(PCG64(seed))


def worker_count() -> int:
    try:
        return max(1, int(os.getenv(WORKERS_ENV, "1")))
    except ValueError:
        logger.warning(f"{WORKERS_ENV} is not an integer, running in-process")
        return 1


def run_points(worker: Callable, tasks: Sequence, desc: str, workers: int | None = None) -> list:
    """Run `worker` over `tasks`, in-process or on a process pool; results keep task order."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        return [worker(task) for task in tqdm(tasks, desc=desc, unit="point", disable=None)]

    results = [None] * len(tasks)
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(worker, task): index for index, task in enumerate(tasks)}
        for future in tqdm(as_completed(futures), total=len(futures), desc=desc, unit="point", disable=None):
            results[futures[future]] = future.result()
    return results


def check_capacity(expected_events: float) -> None:
    if expected_events > MAX_EXPECTED_EVENTS:
        raise CapacityError(expected_events, MAX_EXPECTED_EVENTS)


def poisson_arrivals(rng: Generator, rate: float, duration: float) -> np.ndarray:
    """Arrival times (ps) of a homogeneous Poisson process, from exponential gaps."""
    if rate <= 0 or duration <= 0:
        return np.zeros(0)
    horizon = duration * PS_PER_S
    mean_gap = PS_PER_S / rate
    expected = rate * duration
    block = int(expected + 5.0 * math.sqrt(expected)) + 16
    chunks = []
    last = 0.0
    while last <= horizon:
        times = last + np.cumsum(rng.exponential(mean_gap, size=block))
        chunks.append(times)
        last = times[-1]
    arrivals = np.concatenate(chunks)
    return arrivals[arrivals <= horizon]


def apply_dead_time(times: np.ndarray, dead_time: float) -> np.ndarray:
    """Non-paralyzable dead time (ps) on sorted detection times."""
    if dead_time <= 0 or len(times) < 2:
        return times
    # index of the first event each event leaves live
    following = np.searchsorted(times, times + dead_time, side="left")
    kept = []
    index = 0
    while index < len(times):
        kept.append(index)
        index = following[index]
    return times[np.asarray(kept, dtype=np.int64)]


def _detector_response(times: np.ndarray, detector: DetectorParams, rng: Generator, duration: float) -> np.ndarray:
    sigma = sigma_from_fwhm(detector.jitter_fwhm)
    jittered = times + rng.normal(0.0, sigma, size=len(times)) if sigma > 0 else times
    dark = poisson_arrivals(rng, detector.dark_rate, duration)
    merged = np.concatenate([jittered, dark])
    merged = merged[(merged >= 0) & (merged <= duration * PS_PER_S)]
    detected = np.sort(np.rint(merged).astype(np.int64))
    return apply_dead_time(detected, detector.dead_time * PS_PER_NS)


def detect(emission: np.ndarray, survive_a: np.ndarray, survive_b: np.ndarray,
           extra_a, extra_b, config: ExperimentConfig, rng: Generator,
           duration: float, seed: int, digest: str) -> EventStream:
    """
    Shared detector chain for photon pairs emitted at `emission` (ps):
    facet round trips, survival masks, extra path delays, jitter, dark counts
    and dead time.
    """
    facets = config.facets
    weight_a = facets.delayed_weight(facets.eta_te)
    weight_b = facets.delayed_weight(facets.eta_tm)
    total = 1.0 + weight_a + weight_b
    # One photon of a pair at most is delayed; both-delayed pairs are second order.
    u = rng.random(len(emission))
    delayed_a = u < weight_a / total
    delayed_b = (u >= weight_a / total) & (u < (weight_a + weight_b) / total)

    times_a = emission + extra_a + delayed_a * facets.roundtrip_delay
    times_b = emission + extra_b + delayed_b * facets.roundtrip_delay
    detected_a = _detector_response(times_a[survive_a], config.detector_a, rng, duration)
    detected_b = _detector_response(times_b[survive_b], config.detector_b, rng, duration)
    return EventStream.from_channel_times(detected_a, detected_b, duration, seed, digest)


def simulate_pair_stream(config: ExperimentConfig, seed: int) -> EventStream:
    """
    Simulate the TE/TM coincidence experiment: TE photons go to detector A,
    TM photons to detector B.

    Raises:
        CapacityError: if the expected number of events exceeds MAX_EXPECTED_EVENTS.
    """
    digest = config_digest(config)
    eff_a = config.detector_a.efficiency
    eff_b = config.detector_b.efficiency
    rate = config.source.pair_rate
    check_capacity(config.duration * (rate * (eff_a + eff_b)
                                      + config.detector_a.dark_rate + config.detector_b.dark_rate))

    rng = make_rng(seed)
    # Pairs with no surviving photon leave no trace, so only the thinned
    # process of pairs with at least one detection is drawn.
    p_any = 1.0 - (1.0 - eff_a) * (1.0 - eff_b)
    emission = poisson_arrivals(rng, rate * p_any, config.duration)
    u = rng.random(len(emission))
    if p_any > 0:
        p_both = eff_a * eff_b / p_any
        p_a_only = eff_a * (1.0 - eff_b) / p_any
    else:
        p_both = p_a_only = 0.0
    survive_a = u < p_both + p_a_only
    survive_b = (u < p_both) | (u >= p_both + p_a_only)
    stream = detect(emission, survive_a, survive_b, 0.0, 0.0, config, rng, config.duration, seed, digest)
    logger.info(f"Simulated {len(stream)} events ({stream.singles(0)} A, {stream.singles(1)} B) with seed {seed}")
    return stream


def _require_pairs(config: ExperimentConfig, pairs_per_point: int) -> None:
    if pairs_per_point <= 0:
        raise DomainError(f"pairs_per_point must be > 0 (got {pairs_per_point})")
    if config.source.pair_rate <= 0:
        raise DomainError("a scan needs source.pair_rate > 0 to define its acquisition time")


def _hom_point(task) -> ScanPoint:
    delay, seed_sequence, config, hom, pairs = task
    rng = make_rng(seed_sequence)
    eff_a = config.detector_a.efficiency
    eff_b = config.detector_b.efficiency
    acquisition = pairs / config.source.pair_rate

    facets = config.facets
    weight_a = facets.delayed_weight(facets.eta_te)
    weight_b = facets.delayed_weight(facets.eta_tm)
    total = 1.0 + weight_a + weight_b

    detected = rng.binomial(pairs, eff_a * eff_b)
    direct, delayed_a, delayed_b = rng.multinomial(detected, [1.0 / total, weight_a / total, weight_b / total])
    # Half of the pairs leave through different ports, less the interference term.
    p_split = hom_dip_rate(delay, HomDipParams(0.5, hom.intrinsic_visibility,
                                               config.filter.center_wavelength, config.filter.fwhm))
    coincidences = rng.binomial(direct, p_split) + rng.binomial(delayed_a + delayed_b, 0.5)

    singles_a = rng.binomial(pairs, eff_a) + rng.poisson(config.detector_a.dark_rate * acquisition)
    singles_b = rng.binomial(pairs, eff_b) + rng.poisson(config.detector_b.dark_rate * acquisition)
    window = hom.coincidence_window
    accidentals = rng.poisson(singles_a * singles_b * window / PS_PER_S / acquisition)
    return ScanPoint(
        control=float(delay),
        coincidences=int(coincidences + accidentals),
        singles_a=int(singles_a),
        singles_b=int(singles_b),
        acquisition_time=acquisition,
        accidentals_window=window,
    )


def simulate_hom_scan(config: ExperimentConfig, hom: HomConfig, pairs_per_point: int,
                      seed: int, workers: int | None = None) -> list[ScanPoint]:
    """
    Hong-Ou-Mandel delay scan. Direct-direct pairs interfere with the
    configured intrinsic visibility; pairs with a facet-delayed photon do not.
    Only cross-channel coincidences are recorded.
    """
    _require_pairs(config, pairs_per_point)
    children = SeedSequence(seed).spawn(len(hom.delays))
    tasks = [(delay, child, config, hom, int(pairs_per_point)) for delay, child in zip(hom.delays, children)]
    points = run_points(_hom_point, tasks, desc="HOM scan", workers=workers)
    return sorted(points, key=lambda p: p.control)


def _franson_point(task) -> tuple[float, EventStream]:
    phase, seed_sequence, config, franson, pairs, seed, digest = task
    rng = make_rng(seed_sequence)
    duration = pairs / config.source.pair_rate
    visibility = franson.intrinsic_visibility * math.exp(-franson.path_imbalance / config.source.pump_coherence)
    weights = franson_peak_weights(phase, visibility)

    emission = poisson_arrivals(rng, config.source.pair_rate, duration)
    u = rng.random(len(emission))
    left = u < weights.left
    center = (u >= weights.left) & (u < weights.left + weights.center)
    right = (u >= weights.left + weights.center) & (u < weights.left + weights.center + weights.right)
    kept = left | center | right

    # The photon in the long arm arrives Δt later.
    extra_a = np.where(left, franson.path_imbalance, 0.0)
    extra_b = np.where(right, franson.path_imbalance, 0.0)
    survive_a = kept & (rng.random(len(emission)) < config.detector_a.efficiency)
    survive_b = kept & (rng.random(len(emission)) < config.detector_b.efficiency)
    stream = detect(emission, survive_a, survive_b, extra_a, extra_b, config, rng, duration, seed, digest)
    return phase, stream


def simulate_franson_scan(config: ExperimentConfig, franson: FransonConfig, phases: Sequence[float],
                          pairs_per_point: int, seed: int,
                          workers: int | None = None) -> list[tuple[float, EventStream]]:
    """
    Franson phase scan: one event stream per phase, each built from
    `pairs_per_point` pairs (in expectation) entering the interferometer.
    """
    _require_pairs(config, pairs_per_point)
    timescales = config.timescales()
    report = timescale_check(timescales)
    if not report.passed:
        logger.warning(f"Franson timescale condition not met for: {', '.join(report.failures())}")

    duration = pairs_per_point / config.source.pair_rate
    check_capacity(duration * (config.source.pair_rate * (config.detector_a.efficiency + config.detector_b.efficiency)
                               + config.detector_a.dark_rate + config.detector_b.dark_rate))
    digest = config_digest(config)
    children = SeedSequence(seed).spawn(len(phases))
    tasks = [(float(phase), child, config, franson, int(pairs_per_point), seed, digest)
             for phase, child in zip(phases, children)]
    results = run_points(_franson_point, tasks, desc="Franson scan", workers=workers)
    return sorted(results, key=lambda item: item[0])
