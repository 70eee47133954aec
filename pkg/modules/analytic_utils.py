"""
Closed-form physics of the photon-pair experiments. These functions are the
oracles the Monte Carlo engine and the analysis chain are checked against.

Units: wavelengths in nm, times in ps, rates in Hz.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from modules.errors import DomainError
from modules.general_utils import (
    PS_PER_S,
    SPEED_OF_LIGHT_NM_PER_PS,
    sigma_from_fwhm,
    sinc,
    sinc_derivative,
)
from modules.model_params import FacetParams, FilterParams, TimescaleParams

SQRT2 = math.sqrt(2.0)
CLASSICAL_BOUND = 2.0
TSIRELSON_BOUND = 2.0 * SQRT2

# Signal/idler wavelength change per nm of pump detuning below degeneracy.
TUNING_SLOPE = 500.0
DEFAULT_TIMESCALE_MARGIN = 10.0


@dataclass(frozen=True)
class HomDipParams:
    amplitude: float
    visibility: float
    center_wavelength: float
    fwhm: float


@dataclass(frozen=True)
class PeakWeights:
    left: float
    center: float
    right: float
    discarded: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.left, self.center, self.right, self.discarded


@dataclass(frozen=True)
class BellResult:
    s_value: float
    sigma_s: float
    violation_sigmas: float

    @property
    def violation_defined(self) -> bool:
        return self.sigma_s > 0

    @property
    def violates(self) -> bool:
        return self.s_value > CLASSICAL_BOUND


@dataclass(frozen=True)
class CheckReport:
    passed: bool
    margins: dict[str, float] = field(default_factory=dict)
    ratios: dict[str, float] = field(default_factory=dict)

    def failures(self) -> list[str]:
        return [name for name, margin in self.margins.items() if margin < 1]


def _dip_argument(delta_t, center_wavelength: float, fwhm: float):
    """x = 2π·δt·δλ·c/λ²."""
    return 2.0 * np.pi * np.asarray(delta_t, dtype=float) * fwhm * SPEED_OF_LIGHT_NM_PER_PS / center_wavelength ** 2


def hom_dip_rate(delta_t, params: HomDipParams):
    """Expected coincidences A·(1 − V·sinc(x)) at delay `delta_t` (ps)."""
    x = _dip_argument(delta_t, params.center_wavelength, params.fwhm)
    rate = params.amplitude * (1.0 - params.visibility * sinc(x))
    return float(rate) if np.ndim(rate) == 0 else rate


def hom_dip_jacobian(delta_t, params: HomDipParams) -> np.ndarray:
    """Columns ∂rate/∂A, ∂rate/∂V, ∂rate/∂δλ, one row per delay."""
    delta_t = np.atleast_1d(np.asarray(delta_t, dtype=float))
    x = _dip_argument(delta_t, params.center_wavelength, params.fwhm)
    s = sinc(x)
    dx_dfwhm = x / params.fwhm if params.fwhm else np.zeros_like(x)
    return np.column_stack([
        1.0 - params.visibility * s,
        -params.amplitude * s,
        -params.amplitude * params.visibility * sinc_derivative(x) * dx_dfwhm,
    ])


def first_dip_zero(center_wavelength: float, fwhm: float) -> float:
    """Smallest positive delay where the sinc vanishes, λ²/(2·c·δλ)."""
    return center_wavelength ** 2 / (2.0 * SPEED_OF_LIGHT_NM_PER_PS * fwhm)


def visibility_bound(facets: FacetParams) -> float:
    """
    Visibility ceiling set by double reflections at the facets,
    1 / (1 + R²/(1−R)·(η_TM + η_TE)).

    Raises:
        DomainError: if R >= 1.
    """
    if facets.reflectivity >= 1:
        raise DomainError(f"reflectivity must be < 1 (got {facets.reflectivity})")
    weight = facets.delayed_weight(facets.eta_te) + facets.delayed_weight(facets.eta_tm)
    return 1.0 / (1.0 + weight)


def coherence_time(center_wavelength: float, fwhm: float) -> float:
    """Transform-limited coherence time λ²/(c·δλ) in ps."""
    if fwhm == 0:
        raise DomainError("filter fwhm must be > 0 to define a coherence time")
    return center_wavelength ** 2 / (SPEED_OF_LIGHT_NM_PER_PS * fwhm)


def franson_peak_weights(phase: float, intrinsic_visibility: float) -> PeakWeights:
    """
    Probabilities of the three coincidence peaks for one pair entering the
    shared unbalanced interferometer, post-selected on one output port.
    The satellites never depend on the phase.
    """
    side = 1.0 / 16.0
    center = (1.0 + intrinsic_visibility * math.cos(2.0 * phase)) / 8.0
    return PeakWeights(left=side, center=center, right=side, discarded=1.0 - 2.0 * side - center)


def franson_amplitude_weights(phase: float, intrinsic_visibility: float) -> PeakWeights:
    """
    Brute-force version of `franson_peak_weights`: enumerate the four path
    pairs with amplitude ¼·e^{iφ·n_long}, add ss and ll coherently and mix
    with their incoherent sum according to the visibility.
    """
    amplitudes = {}
    for path_a in ("s", "l"):
        for path_b in ("s", "l"):
            n_long = (path_a == "l") + (path_b == "l")
            amplitudes[path_a + path_b] = 0.25 * np.exp(1j * phase * n_long)
    coherent = abs(amplitudes["ss"] + amplitudes["ll"]) ** 2
    incoherent = abs(amplitudes["ss"]) ** 2 + abs(amplitudes["ll"]) ** 2
    center = intrinsic_visibility * coherent + (1.0 - intrinsic_visibility) * incoherent
    # "ls": A long, B short -> B earlier than A -> negative t_B - t_A.
    left = abs(amplitudes["ls"]) ** 2
    right = abs(amplitudes["sl"]) ** 2
    return PeakWeights(left=left, center=center, right=right, discarded=1.0 - left - center - right)


def bell_from_visibility(visibility: float, sigma_v: float) -> BellResult:
    """CHSH parameter of a sinusoidal fringe, S = 2√2·V, σ_S = 2√2·σ_V."""
    s_value = TSIRELSON_BOUND * visibility
    sigma_s = TSIRELSON_BOUND * sigma_v
    violation = (s_value - CLASSICAL_BOUND) / sigma_s if sigma_s > 0 else math.nan
    return BellResult(s_value=s_value, sigma_s=sigma_s, violation_sigmas=violation)


def timescale_check(t: TimescaleParams, margin: float = DEFAULT_TIMESCALE_MARGIN) -> CheckReport:
    """Check (τ_c, τ_det) ≪ Δt ≪ τ_p with '≪' meaning a factor of at least `margin`."""
    if margin < 1:
        raise DomainError(f"margin must be >= 1 (got {margin})")
    ratios = {
        "coherence": t.path_imbalance / t.photon_coherence,
        "detector_jitter": t.path_imbalance / t.detector_jitter,
        "pump_coherence": t.pump_coherence / t.path_imbalance,
    }
    margins = {name: ratio / margin for name, ratio in ratios.items()}
    return CheckReport(passed=all(m >= 1 for m in margins.values()), margins=margins, ratios=ratios)


def predict_car(true_coincidence_rate: float, singles_a: float, singles_b: float, window: float) -> float:
    """
    Expected coincidence-to-accidental ratio with accidentals
    R_acc = singles_a·singles_b·window.

    Raises:
        DomainError: when there is signal but no accidental background.
    """
    if min(true_coincidence_rate, singles_a, singles_b) < 0 or window <= 0:
        raise DomainError("rates must be >= 0 and the window > 0")
    if true_coincidence_rate == 0:
        return 1.0
    accidental_rate = singles_a * singles_b * window / PS_PER_S
    if accidental_rate == 0:
        raise DomainError("no accidental background: CAR is infinite")
    return (true_coincidence_rate + accidental_rate) / accidental_rate


def expected_true_rate(pair_rate: float, efficiency_a: float, efficiency_b: float) -> float:
    return pair_rate * efficiency_a * efficiency_b


def expected_singles(pair_rate: float, efficiency: float, dark_rate: float) -> float:
    return pair_rate * efficiency + dark_rate


def incident_rate(observed_rate: float, dead_time: float) -> float:
    """
    Rate reaching a non-paralyzable detector that registers `observed_rate` Hz
    with `dead_time` ps, from observed = incident / (1 + incident·dead_time).
    """
    if observed_rate < 0 or dead_time < 0:
        raise DomainError("rate and dead time must be >= 0")
    live = 1.0 - observed_rate * dead_time / PS_PER_S
    if live <= 0:
        raise DomainError(f"an observed rate of {observed_rate} Hz saturates a {dead_time} ps dead time")
    return observed_rate / live


def window_capture_fraction(jitter_a: float, jitter_b: float, low: float, high: float) -> float:
    """Probability that a true pair's t_B − t_A falls inside [low, high] ps."""
    sigma = math.hypot(sigma_from_fwhm(jitter_a), sigma_from_fwhm(jitter_b))
    if sigma == 0:
        return 1.0 if low <= 0 <= high else 0.0
    return float(norm.cdf(high, scale=sigma) - norm.cdf(low, scale=sigma))


def pair_rate_at_power(power: float, reference_power: float, reference_rate: float) -> float:
    """Pair rate at another internal pump power; SPDC brightness is linear in power."""
    if reference_power <= 0 or power < 0:
        raise DomainError("pump powers must be positive")
    return reference_rate * power / reference_power


def tuning_split(pump_detuning: float, degeneracy_wavelength: float) -> tuple[float, float] | None:
    """
    Signal and idler wavelengths for a pump detuned by `pump_detuning` nm from
    degeneracy. Above degeneracy there is no phase matching and None is returned.
    """
    if degeneracy_wavelength <= 0:
        raise DomainError("degeneracy wavelength must be > 0")
    if pump_detuning > 0:
        return None
    shift = TUNING_SLOPE * abs(pump_detuning)
    return degeneracy_wavelength - shift, degeneracy_wavelength + shift


def filter_transmits(split: tuple[float, float] | None, filt: FilterParams) -> bool:
    """True if both photons fall inside the rectangular pass band."""
    if split is None:
        return False
    low = filt.center_wavelength - filt.fwhm / 2.0
    high = filt.center_wavelength + filt.fwhm / 2.0
    return all(low <= wavelength <= high for wavelength in split)
