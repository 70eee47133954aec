"""
Run artifacts: manifests, per-command result tables, the summary report and
gnuplot scripts. The report only reads what the commands wrote.
"""
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Callable, Iterable

from modules.errors import InputError
from modules.general_utils import format_number
from modules.model_config import ExperimentConfig, config_digest

logger = logging.getLogger(__name__)

RESULTS_HEADER = "quantity,value,sigma"
MANIFEST_SUFFIX = ".manifest.json"

try:
    TOOL_VERSION = version("pypairsim")
except PackageNotFoundError:
    TOOL_VERSION = "0.1.0"


@dataclass
class RunManifest:
    command: str
    config_digest: str
    seed: int
    tool_version: str = TOOL_VERSION
    outputs: list[str] = field(default_factory=list)
    results: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        return cls(
            command=data.get("command", ""),
            config_digest=data.get("config_digest", ""),
            seed=int(data.get("seed", 0)),
            tool_version=data.get("tool_version", ""),
            outputs=list(data.get("outputs", [])),
            results=data.get("results", ""),
        )


def write_json(path: Path, data) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmpfile = path.with_name(path.name + ".tmp")
    with open(tmpfile, "w", encoding="utf-8", newline="\n") as f:
        json.dump(data, f, ensure_ascii=False, indent=2)
        f.write("\n")
    os.replace(tmpfile, path)
    return path


def write_results(path: Path, rows: Iterable[tuple[str, float, float | None]]) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(RESULTS_HEADER + "\n")
        for quantity, value, sigma in rows:
            sigma_text = "" if sigma is None else format_number(sigma)
            f.write(f"{quantity},{format_number(value)},{sigma_text}\n")
    return path


def read_results(path: Path) -> dict[str, tuple[str, str]]:
    """Quantity -> (value, sigma) exactly as written."""
    results = {}
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != RESULTS_HEADER:
            raise InputError(f"{path}: expected header '{RESULTS_HEADER}'")
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise InputError(f"{path}: malformed result '{line}'")
            results[parts[0]] = (parts[1], parts[2])
    return results


class Run:
    """Collects the outputs and results of one command, then writes its manifest."""

    def __init__(self, command: str, out_dir: str | Path, config: ExperimentConfig, seed: int, stem: str):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.stem = stem
        self.manifest = RunManifest(command=command, config_digest=config_digest(config), seed=seed)
        self.rows: list[tuple[str, float, float | None]] = []

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def add_output(self, path: Path) -> Path:
        name = Path(path).name
        if name not in self.manifest.outputs:
            self.manifest.outputs.append(name)
        return path

    def add_result(self, quantity: str, value: float, sigma: float | None = None) -> None:
        self.rows.append((quantity, value, sigma))

    def finish(self) -> Path:
        results = self.add_output(write_results(self.path(f"{self.stem}_results.csv"), self.rows))
        self.manifest.results = results.name
        manifest_path = self.path(self.manifest.command + MANIFEST_SUFFIX)
        write_json(manifest_path, self.manifest.to_dict())
        logger.info(f"Wrote {manifest_path}")
        return manifest_path


def read_manifests(run_dir: str | Path) -> list[RunManifest]:
    """
    Raises:
        InputError: if the directory is missing or holds no manifest.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise InputError(f"run directory not found: {run_dir}")
    paths = sorted(run_dir.glob("*" + MANIFEST_SUFFIX))
    if not paths:
        raise InputError(f"no run manifests in {run_dir}")
    manifests = []
    for path in paths:
        try:
            with open(path, "r", encoding="utf-8") as f:
                manifests.append(RunManifest.from_dict(json.load(f)))
        except json.JSONDecodeError as e:
            raise InputError(f"{path}: not a valid manifest ({e})") from e
    return manifests


@dataclass(frozen=True)
class Threshold:
    description: str
    check: Callable[[float], bool]


ACCEPTANCE_THRESHOLDS: dict[str, Threshold] = {
    "car": Threshold("CAR >= 10", lambda v: v >= 10.0),
    "hom_visibility_net": Threshold("V_HOM net >= 0.5", lambda v: v >= 0.5),
    "hom_fwhm": Threshold("δλ within 10.7 ± 0.3 nm", lambda v: abs(v - 10.7) <= 0.3),
    "franson_visibility_net": Threshold("V_Franson net > 1/√2", lambda v: v > 1.0 / math.sqrt(2.0)),
    "bell_s": Threshold("S > 2", lambda v: v > 2.0),
    "bell_violation_sigmas": Threshold("violation >= 5σ", lambda v: v >= 5.0),
}

REPORT_QUANTITIES = (
    ("car", "CAR"),
    ("hom_visibility_raw", "V_HOM raw"),
    ("hom_visibility_net", "V_HOM net"),
    ("hom_fwhm", "δλ (nm)"),
    ("franson_visibility_raw", "V_Franson raw"),
    ("franson_visibility_net", "V_Franson net"),
    ("bell_s", "S"),
    ("bell_violation_sigmas", "violation (σ)"),
)


@dataclass(frozen=True)
class ReportRow:
    quantity: str
    label: str
    value: str
    sigma: str
    command: str
    verdict: str


def build_report(run_dir: str | Path) -> list[ReportRow]:
    """Collect the headline quantities from every manifest's result table."""
    run_dir = Path(run_dir)
    found: dict[str, tuple[str, str, str]] = {}
    for manifest in read_manifests(run_dir):
        if not manifest.results:
            continue
        path = run_dir / manifest.results
        if not path.is_file():
            raise InputError(f"{manifest.command}: result file {path} is missing")
        for quantity, (value, sigma) in read_results(path).items():
            found[quantity] = (value, sigma, manifest.command)

    rows = []
    for quantity, label in REPORT_QUANTITIES:
        if quantity not in found:
            rows.append(ReportRow(quantity, label, "-", "-", "-", "missing"))
            continue
        value, sigma, command = found[quantity]
        threshold = ACCEPTANCE_THRESHOLDS.get(quantity)
        verdict = "-"
        if threshold is not None:
            verdict = "pass" if threshold.check(float(value)) else "FAIL"
        rows.append(ReportRow(quantity, label, value, sigma, command, verdict))
    return rows


def format_report(rows: list[ReportRow]) -> str:
    width = max(len(row.label) for row in rows)
    lines = [f"{'quantity':<{width}}  {'value':<22}  {'sigma':<22}  {'command':<15}  verdict"]
    for row in rows:
        lines.append(f"{row.label:<{width}}  {row.value:<22}  {row.sigma:<22}  {row.command:<15}  {row.verdict}")
    checked = [row for row in rows if row.quantity in ACCEPTANCE_THRESHOLDS]
    passed = sum(row.verdict == "pass" for row in checked)
    lines.append(f"{passed}/{len(checked)} acceptance thresholds met")
    return "\n".join(lines)


def hom_gnuplot(data_file: str, center_wavelength: float, parameters: dict[str, float] | None) -> str:
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set xlabel 'delay (ps)'",
        "set ylabel 'coincidences'",
    ]
    plot = f"plot '{data_file}' using 1:2:3 with yerrorbars title 'simulated'"
    if parameters:
        lines += [
            f"A = {format_number(parameters['amplitude'])}",
            f"V = {format_number(parameters['visibility'])}",
            f"dl = {format_number(parameters['fwhm'])}",
            f"lambda = {format_number(center_wavelength)}",
            "x(t) = 2*pi*t*dl*2.99792458e5/lambda**2",
            "f(t) = A*(1 - V*(x(t) == 0 ? 1 : sin(x(t))/x(t)))",
        ]
        plot += ", f(x) title 'fit'"
    lines.append(plot)
    return "\n".join(lines) + "\n"


def fringe_gnuplot(data_file: str, parameters: dict[str, float] | None) -> str:
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set xlabel 'phase (rad)'",
        "set ylabel 'coincidences'",
    ]
    plot = (f"plot '{data_file}' using 1:3 with points title 'center', "
            f"'' using 1:2 with points title 'left', '' using 1:4 with points title 'right'")
    if parameters:
        lines += [
            f"C = {format_number(parameters['offset'])}",
            f"V = {format_number(parameters['visibility'])}",
            f"p0 = {format_number(parameters['phase_offset'])}",
            "f(p) = C*(1 + V*cos(2*p + p0))",
        ]
        plot += ", f(x) title 'fit'"
    lines.append(plot)
    return "\n".join(lines) + "\n"
