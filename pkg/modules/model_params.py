from dataclasses import asdict, dataclass, field

# Working point of the reference AlGaAs source.
DEFAULT_PAIR_RATE = 7.2e6          # Hz
DEFAULT_PUMP_WAVELENGTH = 783.0    # nm
DEFAULT_DEGENERACY = 1566.0        # nm
DEFAULT_PUMP_POWER = 625.0         # µW
DEFAULT_TEMPERATURE = 20.1         # °C
DEFAULT_PUMP_COHERENCE = 1e6       # ps (1 µs cw laser)

DEFAULT_FILTER_FWHM = 10.8         # nm

DEFAULT_REFLECTIVITY = 0.24
# η_TE + η_TM = 1.385 gives exactly the 90.5 % visibility ceiling at R = 0.24.
DEFAULT_ETA = 0.6925
DEFAULT_ROUNDTRIP_DELAY = 43.0     # ps, 2 mm guide, group index 3.2, two passes

# Not published; typical free-running InGaAs avalanche photodiode values.
DEFAULT_EFFICIENCY = 0.10
DEFAULT_DARK_RATE = 100.0          # Hz
DEFAULT_JITTER = 200.0             # ps FWHM
DEFAULT_DEAD_TIME = 10000.0        # ns

DEFAULT_PATH_IMBALANCE = 2500.0    # ps
DEFAULT_PEAK_WINDOW = 1000.0       # ps
DEFAULT_COINCIDENCE_WINDOW = 1000.0  # ps

FILTER_SHAPES = ("rectangular",)


@dataclass(frozen=True)
class SourceParams:
    pair_rate: float = DEFAULT_PAIR_RATE
    pump_wavelength: float = DEFAULT_PUMP_WAVELENGTH
    degeneracy_wavelength: float = DEFAULT_DEGENERACY
    internal_pump_power: float = DEFAULT_PUMP_POWER
    temperature: float = DEFAULT_TEMPERATURE
    pump_coherence: float = DEFAULT_PUMP_COHERENCE

    def violations(self, prefix: str = "source") -> list[str]:
        found = []
        if not self.pair_rate >= 0:
            found.append(f"{prefix}.pair_rate must be >= 0 Hz (got {self.pair_rate})")
        if not 700 < self.pump_wavelength < 900:
            found.append(f"{prefix}.pump_wavelength must lie in (700, 900) nm (got {self.pump_wavelength})")
        if not 1400 < self.degeneracy_wavelength < 1700:
            found.append(
                f"{prefix}.degeneracy_wavelength must lie in (1400, 1700) nm (got {self.degeneracy_wavelength})")
        if not self.pump_coherence > 0:
            found.append(f"{prefix}.pump_coherence must be > 0 ps (got {self.pump_coherence})")
        return found


@dataclass(frozen=True)
class FilterParams:
    center_wavelength: float = DEFAULT_DEGENERACY
    fwhm: float = DEFAULT_FILTER_FWHM
    shape: str = "rectangular"

    def violations(self, prefix: str = "filter") -> list[str]:
        found = []
        if not self.center_wavelength > 0:
            found.append(f"{prefix}.center_wavelength must be > 0 nm (got {self.center_wavelength})")
        if not self.fwhm > 0:
            found.append(f"{prefix}.fwhm must be > 0 nm (got {self.fwhm})")
        if self.shape not in FILTER_SHAPES:
            found.append(f"{prefix}.shape must be one of {', '.join(FILTER_SHAPES)} (got {self.shape})")
        return found


@dataclass(frozen=True)
class FacetParams:
    """
    Waveguide facets. `eta_te` / `eta_tm` are the survival factors of one facet
    round trip for each polarisation, so the visibility ceiling follows directly
    from R and the two factors.
    """
    reflectivity: float = DEFAULT_REFLECTIVITY
    eta_te: float = DEFAULT_ETA
    eta_tm: float = DEFAULT_ETA
    roundtrip_delay: float = DEFAULT_ROUNDTRIP_DELAY

    def delayed_weight(self, eta: float) -> float:
        """Relative weight of a once-round-trip-delayed photon, R²·η/(1−R)."""
        return self.reflectivity ** 2 * eta / (1.0 - self.reflectivity)

    def violations(self, prefix: str = "facets") -> list[str]:
        found = []
        if not 0 <= self.reflectivity < 1:
            found.append(f"{prefix}.reflectivity must lie in [0, 1) (got {self.reflectivity})")
        for name in ("eta_te", "eta_tm"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                found.append(f"{prefix}.{name} must lie in [0, 1] (got {value})")
        if not self.roundtrip_delay > 0:
            found.append(f"{prefix}.roundtrip_delay must be > 0 ps (got {self.roundtrip_delay})")
        return found


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = DEFAULT_EFFICIENCY
    dark_rate: float = DEFAULT_DARK_RATE
    jitter_fwhm: float = DEFAULT_JITTER
    dead_time: float = DEFAULT_DEAD_TIME

    def violations(self, prefix: str = "detector") -> list[str]:
        found = []
        if not 0 <= self.efficiency <= 1:
            found.append(f"{prefix}.efficiency must lie in [0, 1] (got {self.efficiency})")
        if not self.dark_rate >= 0:
            found.append(f"{prefix}.dark_rate must be >= 0 Hz (got {self.dark_rate})")
        if not self.jitter_fwhm >= 0:
            found.append(f"{prefix}.jitter_fwhm must be >= 0 ps (got {self.jitter_fwhm})")
        if not self.dead_time >= 0:
            found.append(f"{prefix}.dead_time must be >= 0 ns (got {self.dead_time})")
        return found


@dataclass(frozen=True)
class TimescaleParams:
    photon_coherence: float
    detector_jitter: float
    path_imbalance: float
    pump_coherence: float

    def violations(self) -> list[str]:
        return [f"timescales.{name} must be > 0 ps (got {value})"
                for name, value in asdict(self).items() if not value > 0]


@dataclass(frozen=True)
class FransonConfig:
    path_imbalance: float = DEFAULT_PATH_IMBALANCE
    phase: float = 0.0
    intrinsic_visibility: float = 1.0
    window: float = DEFAULT_PEAK_WINDOW

    def violations(self, prefix: str = "franson") -> list[str]:
        found = []
        if not self.path_imbalance > 0:
            found.append(f"{prefix}.path_imbalance must be > 0 ps (got {self.path_imbalance})")
        if not 0 <= self.intrinsic_visibility <= 1:
            found.append(f"{prefix}.intrinsic_visibility must lie in [0, 1] (got {self.intrinsic_visibility})")
        if not self.window > 0:
            found.append(f"{prefix}.window must be > 0 ps (got {self.window})")
        elif self.window >= self.path_imbalance:
            found.append(f"{prefix}.window must be smaller than path_imbalance (got {self.window})")
        return found


def _default_delays() -> tuple[float, ...]:
    return tuple(round(-2.0 + 0.1 * i, 10) for i in range(41))


@dataclass(frozen=True)
class HomConfig:
    delays: tuple[float, ...] = field(default_factory=_default_delays)
    intrinsic_visibility: float = 1.0
    coincidence_window: float = DEFAULT_COINCIDENCE_WINDOW

    def violations(self, prefix: str = "hom") -> list[str]:
        found = []
        if not self.delays:
            found.append(f"{prefix}.delays must not be empty")
        if not 0 <= self.intrinsic_visibility <= 1:
            found.append(f"{prefix}.intrinsic_visibility must lie in [0, 1] (got {self.intrinsic_visibility})")
        if not self.coincidence_window > 0:
            found.append(f"{prefix}.coincidence_window must be > 0 ps (got {self.coincidence_window})")
        return found
