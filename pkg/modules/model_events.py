from dataclasses import dataclass
from pathlib import Path

import numpy as np

from modules.errors import InputError, UnsortedStream

CHANNEL_A = 0
CHANNEL_B = 1
CHANNEL_NAMES = ("A", "B")
EVENTS_HEADER = "channel,time_ps"


@dataclass(frozen=True, eq=False)
class EventStream:
    """
    Time ordered detection records, the simulated TDC input.
    `channels` holds 0 (A) / 1 (B), `times` integer picoseconds since run start.
    """
    channels: np.ndarray
    times: np.ndarray
    duration: float
    seed: int
    config_digest: str

    @classmethod
    def from_channel_times(cls, times_a: np.ndarray, times_b: np.ndarray, duration: float,
                           seed: int, config_digest: str) -> "EventStream":
        times = np.concatenate([np.asarray(times_a, dtype=np.int64), np.asarray(times_b, dtype=np.int64)])
        channels = np.concatenate([np.full(len(times_a), CHANNEL_A, dtype=np.uint8),
                                   np.full(len(times_b), CHANNEL_B, dtype=np.uint8)])
        order = np.lexsort((channels, times))
        return cls(channels[order], times[order], duration, seed, config_digest)

    def __len__(self) -> int:
        return len(self.times)

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.times) >= 0))

    def channel_times(self, channel: int) -> np.ndarray:
        return self.times[self.channels == channel]

    def singles(self, channel: int) -> int:
        return int(np.count_nonzero(self.channels == channel))

    def singles_rate(self, channel: int) -> float:
        return self.singles(channel) / self.duration

    def merged_with(self, other: "EventStream", offset_ps: int) -> "EventStream":
        """Append `other`, shifted by `offset_ps`, as one longer acquisition."""
        return EventStream.from_channel_times(
            np.concatenate([self.channel_times(CHANNEL_A), other.channel_times(CHANNEL_A) + offset_ps]),
            np.concatenate([self.channel_times(CHANNEL_B), other.channel_times(CHANNEL_B) + offset_ps]),
            duration=self.duration + other.duration,
            seed=self.seed,
            config_digest=self.config_digest,
        )

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(EVENTS_HEADER + "\n")
            for channel, time in zip(self.channels.tolist(), self.times.tolist()):
                f.write(f"{CHANNEL_NAMES[channel]},{time}\n")
        return path

    @classmethod
    def from_csv(cls, path: str | Path, duration: float, seed: int = 0, config_digest: str = "") -> "EventStream":
        """
        Read an event file written by `to_csv`.

        Raises:
            InputError: on a wrong header or malformed line.
            UnsortedStream: if times decrease anywhere in the file.
        """
        channels, times = [], []
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().strip()
            if header != EVENTS_HEADER:
                raise InputError(f"{path}: expected header '{EVENTS_HEADER}', got '{header}'")
            for line_number, line in enumerate(f, start=2):
                line = line.strip()
                if not line:
                    continue
                try:
                    name, time = line.split(",")
                    channels.append(CHANNEL_NAMES.index(name))
                    times.append(int(time))
                except ValueError as e:
                    raise InputError(f"{path}:{line_number}: malformed event '{line}'") from e
        time_array = np.asarray(times, dtype=np.int64)
        if np.any(np.diff(time_array) < 0):
            raise UnsortedStream(f"{path}: event times are not sorted")
        return cls(np.asarray(channels, dtype=np.uint8), time_array, duration, seed, config_digest)


@dataclass(frozen=True)
class ScanPoint:
    """One HOM delay or Franson phase setting of a scan."""
    control: float
    coincidences: int
    singles_a: int
    singles_b: int
    acquisition_time: float = 0.0     # s
    accidentals_window: float = 0.0   # ps
