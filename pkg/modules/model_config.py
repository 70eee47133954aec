import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path

from modules.analytic_utils import coherence_time
from modules.errors import InputError, InvalidValue, InvariantViolation, UnknownKey
from modules.general_utils import digest, parse_scan_range
from modules.model_params import (
    DetectorParams,
    FacetParams,
    FilterParams,
    FransonConfig,
    HomConfig,
    SourceParams,
    TimescaleParams,
)

RECORD_SECTIONS = ("source", "filter", "facets", "detector_a", "detector_b", "hom", "franson")


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourceParams = field(default_factory=SourceParams)
    filter: FilterParams = field(default_factory=FilterParams)
    facets: FacetParams = field(default_factory=FacetParams)
    detector_a: DetectorParams = field(default_factory=DetectorParams)
    detector_b: DetectorParams = field(default_factory=DetectorParams)
    hom: HomConfig = field(default_factory=HomConfig)
    franson: FransonConfig = field(default_factory=FransonConfig)
    duration: float = 1.0            # s
    histogram_bin: float = 164.0     # ps
    histogram_range: float = 10000.0  # ps

    def timescales(self) -> TimescaleParams:
        return TimescaleParams(
            photon_coherence=coherence_time(self.filter.center_wavelength, self.filter.fwhm),
            detector_jitter=max(self.detector_a.jitter_fwhm, self.detector_b.jitter_fwhm),
            path_imbalance=self.franson.path_imbalance,
            pump_coherence=self.source.pump_coherence,
        )


@dataclass(frozen=True)
class ConfigKey:
    section: str
    name: str
    unit: str
    kind: str
    description: str

    @property
    def key(self) -> str:
        return f"{self.section}.{self.name}"

    def read(self, config: ExperimentConfig):
        if self.section == "experiment":
            return getattr(config, self.name)
        return getattr(getattr(config, self.section), self.name)


def _detector_keys(section: str, label: str) -> list[ConfigKey]:
    return [
        ConfigKey(section, "efficiency", "fraction", "float", f"detection efficiency of detector {label}"),
        ConfigKey(section, "dark_rate", "Hz", "float", f"dark count rate of detector {label}"),
        ConfigKey(section, "jitter_fwhm", "ps", "float", f"Gaussian timing jitter (FWHM) of detector {label}"),
        ConfigKey(section, "dead_time", "ns", "float", f"non-paralyzable dead time of detector {label}"),
    ]


# Canonical order of the configuration document.
KEY_TABLE: tuple[ConfigKey, ...] = tuple([
    ConfigKey("source", "pair_rate", "Hz", "float", "generated pair rate (brightness)"),
    ConfigKey("source", "pump_wavelength", "nm", "float", "cw pump wavelength, (700, 900)"),
    ConfigKey("source", "degeneracy_wavelength", "nm", "float", "pair centre wavelength, (1400, 1700)"),
    ConfigKey("source", "internal_pump_power", "µW", "float", "internal pump power in the guided mode"),
    ConfigKey("source", "temperature", "°C", "float", "sample temperature (metadata)"),
    ConfigKey("source", "pump_coherence", "ps", "float", "pump laser coherence time"),
    ConfigKey("filter", "center_wavelength", "nm", "float", "filter centre wavelength"),
    ConfigKey("filter", "fwhm", "nm", "float", "filter full width at half maximum"),
    ConfigKey("filter", "shape", "-", "str", "filter shape (rectangular)"),
    ConfigKey("facets", "reflectivity", "fraction", "float", "facet reflectivity R, [0, 1)"),
    ConfigKey("facets", "eta_te", "fraction", "float", "round-trip survival of a TE photon"),
    ConfigKey("facets", "eta_tm", "fraction", "float", "round-trip survival of a TM photon"),
    ConfigKey("facets", "roundtrip_delay", "ps", "float", "extra delay of a double-reflected photon"),
    *_detector_keys("detector_a", "A (TE)"),
    *_detector_keys("detector_b", "B (TM)"),
    ConfigKey("hom", "delays", "ps", "delays", "delay scan, start:stop:step or comma list"),
    ConfigKey("hom", "intrinsic_visibility", "fraction", "float", "dip visibility without facet effects"),
    ConfigKey("hom", "coincidence_window", "ps", "float", "coincidence window of the HOM counter"),
    ConfigKey("franson", "path_imbalance", "ps", "float", "long-short arm delay Δt"),
    ConfigKey("franson", "phase", "rad", "float", "interferometer phase φ"),
    ConfigKey("franson", "intrinsic_visibility", "fraction", "float", "entanglement visibility before noise"),
    ConfigKey("franson", "window", "ps", "float", "width of each of the three peak windows"),
    ConfigKey("experiment", "duration", "s", "float", "acquisition time of a pair stream"),
    ConfigKey("experiment", "histogram_bin", "ps", "float", "histogram bin width"),
    ConfigKey("experiment", "histogram_range", "ps", "float", "histogram half range, >= 10 bins"),
])

KEYS_BY_NAME = {spec.key: spec for spec in KEY_TABLE}


def key_documentation() -> list[tuple[str, str, str, str]]:
    """(key, unit, default, description) rows in canonical order."""
    defaults = ExperimentConfig()
    return [(spec.key, spec.unit, _format_value(spec, spec.read(defaults)), spec.description)
            for spec in KEY_TABLE]


def _format_value(spec: ConfigKey, value) -> str:
    if spec.kind == "delays":
        return ", ".join(repr(float(v)) for v in value)
    if spec.kind == "str":
        return str(value)
    return repr(float(value))


def _convert(spec: ConfigKey, value: str, line: int):
    if spec.kind == "str":
        if not value:
            raise InvalidValue(spec.key, line, value, "empty value")
        return value
    if spec.kind == "delays":
        try:
            return tuple(parse_scan_range(value))
        except InputError as e:
            raise InvalidValue(spec.key, line, value, str(e)) from e
    try:
        number = float(value)
    except ValueError as e:
        raise InvalidValue(spec.key, line, value, f"expected a number in {spec.unit}") from e
    if not math.isfinite(number):
        raise InvalidValue(spec.key, line, value, "value must be finite")
    return number


def _build(values: dict[str, dict[str, object]]) -> ExperimentConfig:
    base = ExperimentConfig()
    records = {name: replace(getattr(base, name), **values.get(name, {})) for name in RECORD_SECTIONS}
    return replace(base, **records, **values.get("experiment", {}))


def parse_config(text: str) -> ExperimentConfig:
    """
    Parse a line oriented "section.key = value" document into an ExperimentConfig.
    Keys not given keep their defaults; everything after '#' is a comment.

    Raises:
        UnknownKey: for a key outside the documented key table.
        InvalidValue: for values that cannot be read, or duplicated keys.
        InvariantViolation: when the resulting configuration breaks an invariant.
    """
    values: dict[str, dict[str, object]] = defaultdict(dict)
    seen: dict[str, int] = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidValue(line, line_number, line, "expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        spec = KEYS_BY_NAME.get(key)
        if spec is None:
            raise UnknownKey(key, line_number)
        if key in seen:
            raise InvalidValue(key, line_number, value, f"duplicate of line {seen[key]}")
        seen[key] = line_number
        values[spec.section][spec.name] = _convert(spec, value, line_number)

    config = _build(values)
    violations = validate(config)
    if violations:
        raise InvariantViolation(violations)
    return config


def serialize_config(config: ExperimentConfig) -> str:
    lines = ["# pypairsim experiment configuration"]
    lines += [f"{spec.key} = {_format_value(spec, spec.read(config))}" for spec in KEY_TABLE]
    return "\n".join(lines) + "\n"


def config_digest(config: ExperimentConfig) -> str:
    return digest(serialize_config(config))


def validate(config: ExperimentConfig) -> list[str]:
    """Return one description per broken invariant; empty when the config is valid."""
    violations = []
    violations += config.source.violations("source")
    violations += config.filter.violations("filter")
    violations += config.facets.violations("facets")
    violations += config.detector_a.violations("detector_a")
    violations += config.detector_b.violations("detector_b")
    violations += config.hom.violations("hom")
    violations += config.franson.violations("franson")
    if not config.duration > 0:
        violations.append(f"experiment.duration must be > 0 s (got {config.duration})")
    if not config.histogram_bin > 0:
        violations.append(f"experiment.histogram_bin must be > 0 ps (got {config.histogram_bin})")
    elif not config.histogram_range >= 10 * config.histogram_bin:
        violations.append(
            f"experiment.histogram_range must be >= 10 x histogram_bin (got {config.histogram_range})")
    return violations


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"))
