import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from modules.errors import InputError
from modules.general_utils import format_number

HISTOGRAM_HEADER = "bin_center_ps,counts"


@dataclass(frozen=True)
class Window:
    center: float
    width: float

    @property
    def low(self) -> float:
        return self.center - self.width / 2.0

    @property
    def high(self) -> float:
        return self.center + self.width / 2.0

    def padded(self, pad: float) -> "Window":
        return Window(self.center, self.width + 2.0 * pad)


@dataclass(frozen=True)
class CarResult:
    car: float
    sigma: float
    peak_counts: int
    background_counts: float   # mean counts of one background window
    background_windows: int = 0
    background_total: int = 0

    @property
    def defined(self) -> bool:
        return not math.isnan(self.car)


@dataclass(frozen=True)
class FransonPeaks:
    left: int
    center: int
    right: int
    bins_left: int = 0
    bins_center: int = 0
    bins_right: int = 0

    @property
    def sigma_left(self) -> float:
        return math.sqrt(self.left)

    @property
    def sigma_center(self) -> float:
        return math.sqrt(self.center)

    @property
    def sigma_right(self) -> float:
        return math.sqrt(self.right)

    @property
    def satellites(self) -> int:
        return self.left + self.right


@dataclass(frozen=True, eq=False)
class Histogram:
    """Counts of t_B − t_A. Bin k is centred on origin + k·bin_width."""
    bin_width: float
    origin: float
    counts: np.ndarray
    total_pairs_considered: int = 0

    @property
    def centers(self) -> np.ndarray:
        return self.origin + self.bin_width * np.arange(len(self.counts))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __len__(self) -> int:
        return len(self.counts)

    def __add__(self, other: "Histogram") -> "Histogram":
        if (self.bin_width != other.bin_width or self.origin != other.origin
                or len(self.counts) != len(other.counts)):
            raise ValueError("histograms with different binning cannot be merged")
        return Histogram(self.bin_width, self.origin, self.counts + other.counts,
                         self.total_pairs_considered + other.total_pairs_considered)

    def same_counts(self, other: "Histogram") -> bool:
        return (self.bin_width == other.bin_width and self.origin == other.origin
                and np.array_equal(self.counts, other.counts))

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(HISTOGRAM_HEADER + "\n")
            for center, count in zip(self.centers.tolist(), self.counts.tolist()):
                f.write(f"{format_number(center)},{count}\n")
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> "Histogram":
        """
        Read a histogram file. Bin centres must increase with a constant step.

        Raises:
            InputError: on malformed content.
        """
        centers, counts = [], []
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().strip()
            if header != HISTOGRAM_HEADER:
                raise InputError(f"{path}: expected header '{HISTOGRAM_HEADER}', got '{header}'")
            for line_number, line in enumerate(f, start=2):
                line = line.strip()
                if not line:
                    continue
                try:
                    center, count = line.split(",")
                    centers.append(float(center))
                    counts.append(int(count))
                except ValueError as e:
                    raise InputError(f"{path}:{line_number}: malformed bin '{line}'") from e
        if len(centers) < 2:
            raise InputError(f"{path}: a histogram needs at least two bins")
        steps = np.diff(centers)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-9):
            raise InputError(f"{path}: bin centres must increase with a constant step")
        if min(counts) < 0:
            raise InputError(f"{path}: negative counts")
        count_array = np.asarray(counts, dtype=np.int64)
        return cls(float(steps[0]), centers[0], count_array, int(count_array.sum()))
