import math
from dataclasses import dataclass, field

import numpy as np

from modules.errors import DomainError
from modules.general_utils import Estimate, format_number

FIT_CSV_HEADER = "parameter,value,sigma"


@dataclass(frozen=True)
class DataPoint:
    x: float
    y: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"data point sigma must be > 0 (got {self.sigma})")

    @classmethod
    def from_counts(cls, x: float, counts: float) -> "DataPoint":
        """Poisson point, σ = √counts with a floor of one count."""
        return cls(float(x), float(counts), max(math.sqrt(max(counts, 0.0)), 1.0))


@dataclass(frozen=True, eq=False)
class FitResult:
    names: tuple[str, ...]
    values: np.ndarray
    covariance: np.ndarray
    chi2: float
    dof: int
    converged: bool
    iterations: int = 0
    model: str = ""

    @property
    def parameters(self) -> dict[str, float]:
        return {name: float(value) for name, value in zip(self.names, self.values)}

    def value(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def sigma(self, name: str) -> float:
        index = self.names.index(name)
        variance = float(self.covariance[index, index])
        return math.sqrt(variance) if variance >= 0 else math.nan

    def estimate(self, name: str) -> Estimate:
        return Estimate(self.value(name), self.sigma(name))

    @property
    def reduced_chi2(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else math.nan

    def report(self) -> str:
        status = f"converged after {self.iterations} iterations" if self.converged else "NOT converged"
        lines = [f"{self.model or 'fit'}: {status}"]
        width = max(len(name) for name in self.names)
        for name in self.names:
            lines.append(f"  {name:<{width}} = {self.value(name):.6g} ± {self.sigma(name):.2g} (1σ)")
        lines.append(f"  chi2/dof = {self.chi2:.4g} / {self.dof}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = [FIT_CSV_HEADER]
        lines += [f"{name},{format_number(self.value(name))},{format_number(self.sigma(name))}"
                  for name in self.names]
        lines.append(f"chi2/dof,{format_number(float(self.chi2))},{self.dof}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class VisibilityPair:
    raw: Estimate
    net: Estimate
    raw_fit: FitResult = field(repr=False)
    net_fit: FitResult = field(repr=False)
