"""
Coincidence histograms and the statistics taken on them.

Histogram bins are centred on k·bin for k = −K..K, K = floor(range/bin − ½),
so every bin lies inside ±range and bin 0 is centred on zero delay.
"""
import logging
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.stats import chi2 as chi2_distribution
from scipy.stats import norm

from modules.analytic_utils import expected_true_rate, incident_rate, predict_car, window_capture_fraction
from modules.errors import (
    DomainError,
    InsufficientBackground,
    NoBackground,
    NoPeak,
    OverlappingWindows,
    UnsortedStream,
    WindowOutOfRange,
)
from modules.general_utils import PS_PER_NS, Estimate
from modules.model_config import ExperimentConfig
from modules.model_events import CHANNEL_A, CHANNEL_B, EventStream
from modules.model_histogram import CarResult, FransonPeaks, Histogram, Window

logger = logging.getLogger(__name__)

PEAK_SIGNIFICANCE = 5.0
MIN_BACKGROUND_BINS = 20
FLATNESS_P_THRESHOLD = float(norm.sf(5.0))


@dataclass(frozen=True)
class FlatnessResult:
    chi2: float
    dof: int
    p_value: float
    passed: bool


def _half_bins(bin_width: float, range_: float) -> int:
    return int(math.floor(range_ / bin_width - 0.5))


def _correlate(times_a: np.ndarray, times_b: np.ndarray, bin_width: float, range_: float,
               half_bins: int) -> tuple[np.ndarray, int]:
    """Every A–B pairing with |t_B − t_A| <= range, binned around zero."""
    counts = np.zeros(2 * half_bins + 1, dtype=np.int64)
    if len(times_a) == 0 or len(times_b) == 0:
        return counts, 0
    lo = np.searchsorted(times_b, times_a - range_, side="left")
    hi = np.searchsorted(times_b, times_a + range_, side="right")
    n = hi - lo
    total = int(n.sum())
    if total == 0:
        return counts, 0

    starts = np.repeat(lo, n)
    offsets = np.arange(total) - np.repeat(np.cumsum(n) - n, n)
    diffs = (times_b[starts + offsets] - np.repeat(times_a, n)).astype(float)
    index = np.sign(diffs) * np.floor(np.abs(diffs) / bin_width + 0.5)
    inside = np.abs(index) <= half_bins
    counts += np.bincount((index[inside] + half_bins).astype(np.int64), minlength=len(counts))
    return counts, total


def build_histogram(stream: EventStream, bin_width: float, range_: float, slices: int = 1) -> Histogram:
    """
    Full cross-correlation histogram of t_B − t_A.

    `slices` splits the A events into that many consecutive blocks; each block
    is correlated against all B events and the per-bin counts are summed.

    Raises:
        UnsortedStream: if the stream times decrease anywhere.
        DomainError: for bin <= 0 or range < 10 bins.
    """
    if not stream.is_sorted():
        raise UnsortedStream("event stream must be sorted by time")
    if not bin_width > 0:
        raise DomainError(f"histogram bin must be > 0 ps (got {bin_width})")
    if not range_ >= 10 * bin_width:
        raise DomainError(f"histogram range must be >= 10 bins (got {range_} ps for {bin_width} ps bins)")

    half_bins = _half_bins(bin_width, range_)
    times_a = stream.channel_times(CHANNEL_A)
    times_b = stream.channel_times(CHANNEL_B)
    histogram = Histogram(bin_width, -half_bins * bin_width, np.zeros(2 * half_bins + 1, dtype=np.int64), 0)
    for block in np.array_split(times_a, max(1, int(slices))):
        counts, total = _correlate(block, times_b, bin_width, range_, half_bins)
        histogram = histogram + Histogram(bin_width, histogram.origin, counts, total)
    logger.debug(f"Histogram of {histogram.total} coincidences over {len(histogram)} bins")
    return histogram


def window_indices(h: Histogram, window: Window) -> tuple[int, int]:
    """
    First and last index of the bins whose centres lie inside the window.
    A window narrower than a bin selects the bin holding its centre.

    Raises:
        WindowOutOfRange: if the window leaves the histogram.
    """
    eps = 1e-9 * h.bin_width
    left_edge = h.origin - h.bin_width / 2.0
    right_edge = h.origin + h.bin_width * (len(h) - 0.5)
    if window.low < left_edge - eps or window.high > right_edge + eps:
        raise WindowOutOfRange(
            f"window [{window.low}, {window.high}] ps outside histogram [{left_edge}, {right_edge}] ps")
    first = int(math.ceil((window.low - h.origin) / h.bin_width - 1e-9))
    last = int(math.floor((window.high - h.origin) / h.bin_width + 1e-9))
    if last < first:
        first = last = int(math.floor((window.center - h.origin) / h.bin_width + 0.5))
    return max(first, 0), min(last, len(h) - 1)


def window_counts(h: Histogram, window: Window) -> tuple[int, int]:
    """(sum of counts, number of bins) over the window."""
    first, last = window_indices(h, window)
    return int(h.counts[first:last + 1].sum()), last - first + 1


def peak_window(h: Histogram) -> Window:
    """
    Window spanning the FWHM of the main peak, centred on the excess-weighted
    centroid of the mode bin and its neighbours.

    Raises:
        NoPeak: if the highest bin is not significantly above the median floor.
    """
    if len(h) == 0:
        raise NoPeak("empty histogram")
    counts = h.counts.astype(float)
    centers = h.centers
    floor = float(np.median(counts))
    mode = int(np.argmax(counts))
    peak = counts[mode]
    if peak <= floor or peak < floor + PEAK_SIGNIFICANCE * math.sqrt(floor):
        raise NoPeak(f"highest bin {int(peak)} is not significant above the floor {floor:g}")

    lo, hi = max(mode - 1, 0), min(mode + 1, len(h) - 1)
    excess = np.clip(counts[lo:hi + 1] - floor, 0.0, None)
    center = float(np.sum(excess * centers[lo:hi + 1]) / np.sum(excess))

    half = floor + (peak - floor) / 2.0
    i = mode
    while i > 0 and counts[i - 1] >= half:
        i -= 1
    if i == 0:
        left = centers[0] - h.bin_width / 2.0
    else:
        left = centers[i - 1] + (half - counts[i - 1]) / (counts[i] - counts[i - 1]) * h.bin_width
    j = mode
    while j < len(h) - 1 and counts[j + 1] >= half:
        j += 1
    if j == len(h) - 1:
        right = centers[-1] + h.bin_width / 2.0
    else:
        right = centers[j] + (counts[j] - half) / (counts[j] - counts[j + 1]) * h.bin_width
    return Window(center, float(right - left))


def _background_blocks(h: Histogram, window: Window, block: int) -> list[int]:
    """Sums of consecutive `block`-bin windows fully outside the peak padded by 2 widths."""
    pad = 2.0 * window.width
    excluded = window.padded(pad)
    centers = h.centers
    half = h.bin_width / 2.0
    eps = 1e-9 * h.bin_width
    left_bins = np.nonzero(centers + half <= excluded.low + eps)[0]
    right_bins = np.nonzero(centers - half >= excluded.high - eps)[0]

    sums = []
    if len(left_bins):
        end = int(left_bins[-1])
        while end - block + 1 >= 0:
            sums.append(int(h.counts[end - block + 1:end + 1].sum()))
            end -= block
    if len(right_bins):
        start = int(right_bins[0])
        while start + block <= len(h):
            sums.append(int(h.counts[start:start + block].sum()))
            start += block
    return sums


def compute_car(h: Histogram, window: Window) -> CarResult:
    """
    Coincidence-to-accidental ratio: counts in `window` over the mean of every
    same-width window outside the peak region.

    Raises:
        NoBackground: if no background window fits, or background is zero under a peak.
    """
    peak, n_bins = window_counts(h, window)
    sums = _background_blocks(h, window, n_bins)
    if not sums:
        raise NoBackground(f"no {n_bins}-bin background window fits outside the padded peak region")
    background_total = int(sum(sums))
    background = background_total / len(sums)
    if background == 0:
        if peak > 0:
            raise NoBackground(f"{peak} peak counts over an empty background")
        return CarResult(math.nan, math.nan, 0, 0.0, len(sums), 0)

    car = peak / background
    sigma = car * math.sqrt(1.0 / peak + 1.0 / background_total) if peak > 0 else 1.0 / background
    return CarResult(car, sigma, peak, background, len(sums), background_total)


def franson_peak_counts(h: Histogram, delta_t: float, width: float) -> FransonPeaks:
    """
    Counts in the three Franson peaks at −Δt, 0 and +Δt.

    Raises:
        OverlappingWindows: if the windows are as wide as the peak spacing.
        WindowOutOfRange: if a satellite window leaves the histogram.
    """
    if width >= delta_t:
        raise OverlappingWindows(f"peak window {width} ps must be narrower than Δt = {delta_t} ps")
    left, bins_left = window_counts(h, Window(-delta_t, width))
    center, bins_center = window_counts(h, Window(0.0, width))
    right, bins_right = window_counts(h, Window(delta_t, width))
    return FransonPeaks(left, center, right, bins_left, bins_center, bins_right)


def accidental_level(h: Histogram, exclusions: Iterable[Window]) -> Estimate:
    """
    Mean counts per bin outside every exclusion window, with its standard error.
    Bins overlapping a window at all are excluded.

    Raises:
        InsufficientBackground: if fewer than 20 bins remain.
    """
    centers = h.centers
    half = h.bin_width / 2.0
    keep = np.ones(len(h), dtype=bool)
    for window in exclusions:
        keep &= ~((centers + half > window.low) & (centers - half < window.high))
    n = int(keep.sum())
    if n < MIN_BACKGROUND_BINS:
        raise InsufficientBackground(f"only {n} background bins left, need {MIN_BACKGROUND_BINS}")
    values = h.counts[keep].astype(float)
    return Estimate(float(values.mean()), float(values.std(ddof=1) / math.sqrt(n)))


def flatness_test(counts) -> FlatnessResult:
    """Chi-square of counts against their own mean; passes unless rejected at 5σ."""
    values = np.asarray(counts, dtype=float)
    dof = len(values) - 1
    mean = float(values.mean()) if len(values) else 0.0
    if dof < 1 or mean == 0:
        return FlatnessResult(0.0, max(dof, 0), 1.0, True)
    statistic = float(np.sum((values - mean) ** 2 / mean))
    p_value = float(chi2_distribution.sf(statistic, dof))
    return FlatnessResult(statistic, dof, p_value, p_value > FLATNESS_P_THRESHOLD)


def car_oracle(config: ExperimentConfig, stream: EventStream, h: Histogram, window: Window) -> float:
    """
    Analytic CAR for the same window. Singles are the measured rates corrected
    back to incident rates for dead time.

    Both coincidence kinds accrue only while the two detectors are live, so the
    joint live fraction cancels. When a detected photon had a surviving partner,
    the other detector goes dead with it and misses its accidental partners for
    the whole histogram range. Those partners are removed from the floor.
    """
    first, last = window_indices(h, window)
    low = h.origin + (first - 0.5) * h.bin_width
    high = h.origin + (last + 0.5) * h.bin_width
    capture = window_capture_fraction(config.detector_a.jitter_fwhm, config.detector_b.jitter_fwhm, low, high)

    measured_a = stream.singles_rate(CHANNEL_A)
    measured_b = stream.singles_rate(CHANNEL_B)
    if measured_a == 0 or measured_b == 0:
        return 1.0
    dead_a = config.detector_a.dead_time * PS_PER_NS
    dead_b = config.detector_b.dead_time * PS_PER_NS
    incident_a = incident_rate(measured_a, dead_a)
    incident_b = incident_rate(measured_b, dead_b)

    pair_rate = config.source.pair_rate
    eff_a, eff_b = config.detector_a.efficiency, config.detector_b.efficiency
    reach = -h.origin + h.bin_width / 2
    # fraction of B's accidental partners blanked by A's partner photon, and back
    blanked_b = eff_b * min(1.0, pair_rate * eff_a / incident_a) if dead_b >= reach else 0.0
    blanked_a = eff_a * min(1.0, pair_rate * eff_b / incident_b) if dead_a >= reach else 0.0
    partners_b = incident_b * (1.0 - (blanked_a + blanked_b) / 2)

    true_rate = expected_true_rate(pair_rate, eff_a, eff_b) * capture
    return predict_car(true_rate, incident_a, partners_b, (last - first + 1) * h.bin_width)
