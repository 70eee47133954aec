"""
Weighted least-squares fits of the HOM dip and the Franson fringe.

The minimizer is a damped Gauss-Newton (Levenberg-Marquardt) iteration on
the weighted residuals with analytic Jacobians. Damping starts at 1e-3 and
is multiplied by 10 after a rejected step and divided by 10 after an
accepted one; the diagonal of JᵀJ is used as the damping scale.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy.special import expit, logit

from modules.analytic_utils import HomDipParams, hom_dip_jacobian, hom_dip_rate
from modules.errors import DegenerateData, DomainError, NoConvergence
from modules.general_utils import PS_PER_S, SPEED_OF_LIGHT_NM_PER_PS, Estimate
from modules.model_events import ScanPoint
from modules.model_fit import DataPoint, FitResult, VisibilityPair
from modules.model_params import DEFAULT_FILTER_FWHM

logger = logging.getLogger(__name__)

INITIAL_DAMPING = 1e-3
MAX_DAMPING = 1e20
STEP_TOLERANCE = 1e-8
MAX_ITERATIONS = 200

HOM_PARAMETERS = ("amplitude", "visibility", "fwhm")
FRINGE_PARAMETERS = ("offset", "visibility", "phase_offset")
MIN_HOM_POINTS = 8
MIN_FRINGE_POINTS = 6

# sin(x)/x = 1/2 at x = 1.8955
SINC_HALF_POINT = 1.895494267

# Internal logit of the fringe visibility stays inside ±LOGIT_LIMIT.
LOGIT_LIMIT = 20.0


@dataclass(frozen=True)
class MinimizerResult:
    values: np.ndarray
    covariance: np.ndarray
    chi2: float
    iterations: int
    converged: bool


def _covariance(jacobian: np.ndarray) -> np.ndarray:
    normal = jacobian.T @ jacobian
    try:
        return scipy.linalg.inv(normal)
    except (scipy.linalg.LinAlgError, ValueError):
        return scipy.linalg.pinvh(normal)


def levenberg_marquardt(residuals: Callable[[np.ndarray], np.ndarray],
                        jacobian: Callable[[np.ndarray], np.ndarray],
                        p0: Sequence[float],
                        lower: Sequence[float] | None = None,
                        upper: Sequence[float] | None = None,
                        max_iterations: int = MAX_ITERATIONS,
                        tolerance: float = STEP_TOLERANCE) -> MinimizerResult:
    """
    Minimize Σ residuals(p)². `jacobian(p)` returns ∂residuals/∂p.
    Converged when a step changes every parameter by less than
    `tolerance`·max(|p|, 1). Optional bounds clip proposed points.
    """
    p = np.asarray(p0, dtype=float).copy()
    lower = np.full(len(p), -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(len(p), np.inf) if upper is None else np.asarray(upper, dtype=float)
    r = residuals(p)
    chi2 = float(r @ r)
    damping = INITIAL_DAMPING
    converged = False
    iterations = 0

    while iterations < max_iterations and not converged:
        iterations += 1
        jac = jacobian(p)
        normal = jac.T @ jac
        gradient = jac.T @ r
        scale = np.diag(normal).copy()
        scale[scale <= 0] = 1.0

        while True:
            try:
                step = scipy.linalg.solve(normal + damping * np.diag(scale), -gradient, assume_a="sym")
            except (scipy.linalg.LinAlgError, ValueError):
                step = None
            if step is not None and np.all(np.isfinite(step)):
                proposal = np.clip(p + step, lower, upper)
                small = bool(np.all(np.abs(proposal - p) <= tolerance * np.maximum(np.abs(p), 1.0)))
                r_new = residuals(proposal)
                chi2_new = float(r_new @ r_new)
                if math.isfinite(chi2_new) and chi2_new <= chi2:
                    p, r, chi2 = proposal, r_new, chi2_new
                    damping = max(damping / 10.0, 1e-15)
                    converged = small
                    break
                if small:
                    converged = True
                    break
            damping *= 10.0
            if damping > MAX_DAMPING:
                logger.debug("Damping exhausted without an acceptable step")
                return MinimizerResult(p, _covariance(jacobian(p)), chi2, iterations, False)

    return MinimizerResult(p, _covariance(jacobian(p)), chi2, iterations, converged)


def _arrays(points: Sequence[DataPoint]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = np.array([point.x for point in points], dtype=float)
    y = np.array([point.y for point in points], dtype=float)
    sigma = np.array([point.sigma for point in points], dtype=float)
    return x, y, sigma


def _check_points(x: np.ndarray, y: np.ndarray, minimum: int, model: str) -> None:
    if len(x) < minimum:
        raise DegenerateData(f"{model} fit needs at least {minimum} points (got {len(x)})")
    if np.all(x == x[0]):
        raise DegenerateData(f"{model} fit: all control values are identical")
    if np.all(y == 0):
        raise DegenerateData(f"{model} fit: all counts are zero")


def hom_model(x, p: Sequence[float], center_wavelength: float) -> np.ndarray:
    amplitude, visibility, fwhm = p
    return np.atleast_1d(hom_dip_rate(x, HomDipParams(amplitude, visibility, center_wavelength, fwhm)))


def hom_jacobian(x, p: Sequence[float], center_wavelength: float) -> np.ndarray:
    amplitude, visibility, fwhm = p
    return hom_dip_jacobian(x, HomDipParams(amplitude, visibility, center_wavelength, fwhm))


def fringe_model(x, p: Sequence[float]) -> np.ndarray:
    offset, visibility, phase_offset = p
    return offset * (1.0 + visibility * np.cos(2.0 * np.asarray(x, dtype=float) + phase_offset))


def fringe_jacobian(x, p: Sequence[float]) -> np.ndarray:
    offset, visibility, phase_offset = p
    argument = 2.0 * np.asarray(x, dtype=float) + phase_offset
    return np.column_stack([
        1.0 + visibility * np.cos(argument),
        offset * np.cos(argument),
        -offset * visibility * np.sin(argument),
    ])


def _hom_initial(x: np.ndarray, y: np.ndarray, center_wavelength: float, initial: dict) -> np.ndarray:
    outer = np.abs(x) >= np.quantile(np.abs(x), 0.75)
    amplitude = initial.get("amplitude", float(np.mean(y[outer])))
    visibility = initial.get("visibility", 1.0 - float(np.min(y)) / amplitude if amplitude else 0.5)

    fwhm = initial.get("fwhm")
    if fwhm is None:
        below = x[y < amplitude * (1.0 - visibility / 2.0)]
        width = float(below.max() - below.min()) if len(below) >= 2 else 0.0
        k = 2.0 * math.pi * SPEED_OF_LIGHT_NM_PER_PS / center_wavelength ** 2
        fwhm = 2.0 * SINC_HALF_POINT / (k * width) if width > 0 else DEFAULT_FILTER_FWHM
    return np.array([amplitude, visibility, fwhm], dtype=float)


def fit_hom(points: Sequence[DataPoint], center_wavelength: float, initial: dict | None = None) -> FitResult:
    """
    Fit A·(1 − V·sinc(2π·δt·δλ·c/λ²)) with λ fixed; A, V and δλ are free.

    Raises:
        DegenerateData: fewer than 8 points, one delay only, or no counts.
        NoConvergence: with the best-so-far result attached.
    """
    x, y, sigma = _arrays(points)
    _check_points(x, y, MIN_HOM_POINTS, "HOM")
    p0 = _hom_initial(x, y, center_wavelength, initial or {})
    logger.debug(f"HOM fit initial guess {dict(zip(HOM_PARAMETERS, p0.tolist()))}")

    result = levenberg_marquardt(
        lambda p: (y - hom_model(x, p, center_wavelength)) / sigma,
        lambda p: -hom_jacobian(x, p, center_wavelength) / sigma[:, None],
        p0,
    )
    values = result.values.copy()
    values[2] = abs(values[2])   # the dip is even in δλ
    fit = FitResult(HOM_PARAMETERS, values, result.covariance, result.chi2, len(x) - 3,
                    result.converged, result.iterations, "hom")
    if not result.converged:
        raise NoConvergence(f"HOM fit did not converge in {result.iterations} iterations", best=fit)
    return fit


def fit_fringe(points: Sequence[DataPoint], initial: dict | None = None) -> FitResult:
    """
    Fit C·(1 + V·cos(2φ + φ₀)). V is kept inside [0, 1] by fitting its logit;
    the reported covariance is that of (C, V, φ₀).

    Raises:
        DegenerateData: fewer than 6 points, less than half a fringe, or no counts.
        NoConvergence: with the best-so-far result attached.
    """
    x, y, sigma = _arrays(points)
    _check_points(x, y, MIN_FRINGE_POINTS, "fringe")
    if np.ptp(x) < math.pi / 2.0 - 1e-12:
        raise DegenerateData("fringe fit needs phases covering at least half a fringe period")

    initial = initial or {}
    offset = initial.get("offset", float(np.mean(y)))
    spread = float(np.max(y) + np.min(y))
    visibility = initial.get("visibility",
                             float(np.clip((np.max(y) - np.min(y)) / spread, 0.01, 0.99)) if spread else 0.5)
    visibility = float(np.clip(visibility, expit(-LOGIT_LIMIT), expit(LOGIT_LIMIT)))
    phase_offset = initial.get("phase_offset",
                               math.atan2(-float(np.sum(y * np.sin(2.0 * x))), float(np.sum(y * np.cos(2.0 * x)))))

    def natural(q: np.ndarray) -> np.ndarray:
        return np.array([q[0], expit(q[1]), q[2]])

    def residuals(q: np.ndarray) -> np.ndarray:
        return (y - fringe_model(x, natural(q))) / sigma

    def jacobian(q: np.ndarray) -> np.ndarray:
        p = natural(q)
        jac = fringe_jacobian(x, p)
        jac[:, 1] *= p[1] * (1.0 - p[1])
        return -jac / sigma[:, None]

    result = levenberg_marquardt(
        residuals, jacobian, [offset, logit(visibility), phase_offset],
        lower=[-np.inf, -LOGIT_LIMIT, -np.inf], upper=[np.inf, LOGIT_LIMIT, np.inf],
    )
    values = natural(result.values)
    values[2] = math.remainder(values[2], 2.0 * math.pi)
    # Delta-method transform of the logit covariance, taken directly in (C, V, φ₀).
    covariance = _covariance(-fringe_jacobian(x, values) / sigma[:, None])
    fit = FitResult(FRINGE_PARAMETERS, values, covariance, result.chi2, len(x) - 3,
                    result.converged, result.iterations, "fringe")
    if not result.converged:
        raise NoConvergence(f"fringe fit did not converge in {result.iterations} iterations", best=fit)
    return fit


def background_from_singles(point: ScanPoint) -> Estimate:
    """Accidental coincidences singles_a·singles_b·window/T expected at one scan point."""
    if point.acquisition_time <= 0 or point.accidentals_window <= 0:
        return Estimate(0.0, 0.0)
    value = point.singles_a * point.singles_b * point.accidentals_window / PS_PER_S / point.acquisition_time
    if value == 0:
        return Estimate(0.0, 0.0)
    return Estimate(value, value * math.sqrt(1.0 / point.singles_a + 1.0 / point.singles_b))


def subtract_background(points: Sequence[DataPoint], background: Estimate | Sequence[Estimate]) -> list[DataPoint]:
    backgrounds = [background] * len(points) if isinstance(background, Estimate) else list(background)
    if len(backgrounds) != len(points):
        raise DomainError("one background estimate per point is required")
    if any(b.value < 0 for b in backgrounds):
        raise DomainError("background must be >= 0")
    return [DataPoint(point.x, point.y - b.value, math.hypot(point.sigma, b.sigma))
            for point, b in zip(points, backgrounds)]


def raw_and_net_visibility(points: Sequence[DataPoint], background: Estimate | Sequence[Estimate],
                           fit: Callable[..., FitResult] = fit_fringe, **kwargs) -> VisibilityPair:
    """
    Fit the points as recorded (raw) and after subtracting the accidental
    background (net). `background` is one estimate for all points or one per point.
    """
    raw_fit = fit(points, **kwargs)
    backgrounds = [background] if isinstance(background, Estimate) else list(background)
    if all(b.value == 0 and b.sigma == 0 for b in backgrounds):
        net_fit = raw_fit
    else:
        net_fit = fit(subtract_background(points, background), **kwargs)
    return VisibilityPair(raw_fit.estimate("visibility"), net_fit.estimate("visibility"), raw_fit, net_fit)
