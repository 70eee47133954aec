import math
import re
from dataclasses import dataclass
from hashlib import sha256

import numpy as np

from modules.errors import InputError

# Speed of light expressed in nm/ps (2.99792458e8 m/s).
SPEED_OF_LIGHT_NM_PER_PS = 2.99792458e5

# Conversion factors into picoseconds.
PS_PER_S = 1e12
PS_PER_NS = 1e3

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class Estimate:
    """A value with its 1σ uncertainty."""
    value: float
    sigma: float

    def __str__(self):
        return f"{self.value:.6g} ± {self.sigma:.2g}"


def sinc(x):
    """Unnormalized sinc, sin(x)/x with sinc(0) = 1."""
    return np.sinc(np.asarray(x, dtype=float) / np.pi)


def sinc_derivative(x):
    """d/dx of sin(x)/x; the series -x/3 + x^3/30 is used near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    exact = (safe * np.cos(safe) - np.sin(safe)) / safe ** 2
    return np.where(small, -x / 3.0 + x ** 3 / 30.0, exact)


def sigma_from_fwhm(fwhm: float) -> float:
    return fwhm / FWHM_PER_SIGMA


def digest(text: str) -> str:
    return sha256(text.encode("utf-8")).hexdigest()


def format_number(value: float) -> str:
    """Stable textual form used in every output file."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if math.isnan(value):
        return "nan"
    return repr(float(value))


_PI_TERM = re.compile(r"^\s*([+-]?\d*\.?\d*(?:[eE][+-]?\d+)?)\s*\*?\s*pi\s*(?:/\s*(\d*\.?\d+))?\s*$")


def parse_number(token: str) -> float:
    """Parse a float, optionally written as a multiple of pi ("pi/2", "-3*pi/4", "0.5pi")."""
    token = token.strip()
    try:
        return float(token)
    except ValueError:
        pass
    match = _PI_TERM.match(token)
    if not match:
        raise InputError(f"not a number: {token!r}")
    factor_text, divisor_text = match.groups()
    if factor_text in ("", "+"):
        factor = 1.0
    elif factor_text == "-":
        factor = -1.0
    else:
        factor = float(factor_text)
    divisor = float(divisor_text) if divisor_text else 1.0
    if divisor == 0:
        raise InputError(f"division by zero in {token!r}")
    return factor * math.pi / divisor


def parse_scan_range(spec: str) -> list[float]:
    """
    Parse a "start:stop:step" scan specification (stop inclusive) or a
    comma separated list of values into a list of floats.

    Raises:
        InputError: on malformed specs, zero step or an empty range.
    """
    spec = spec.strip()
    if not spec:
        raise InputError("empty scan specification")
    if ":" not in spec:
        return [parse_number(part) for part in spec.split(",") if part.strip()]
    parts = spec.split(":")
    if len(parts) != 3:
        raise InputError(f"expected start:stop:step, got {spec!r}")
    start, stop, step = (parse_number(p) for p in parts)
    if step == 0 or (stop - start) * step < 0:
        raise InputError(f"scan {spec!r} does not reach its stop value")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]
