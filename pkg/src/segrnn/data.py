"""CSV ingestion, chronological splitting, train-fit standardization, and
channel-independent sliding windows.

Input files follow the common long-horizon benchmark layout: a header row,
a first `date` column (carried but unused by the model), and one numeric
column per channel.  Splits are contiguous in time; the standardizer is fit
on the training split only and metrics are reported in standardized space.
"""

from __future__ import annotations

import csv as _csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DataFormatError


@dataclass
class RawSeries:
    timestamps: list[str]
    values: np.ndarray  # (T, C) float64
    channel_names: list[str]

    @property
    def num_steps(self) -> int:
        return self.values.shape[0]

    @property
    def num_channels(self) -> int:
        return self.values.shape[1]


@dataclass
class SplitSpec:
    train: float
    val: float
    test: float

    def validate(self) -> None:
        ratios = (self.train, self.val, self.test)
        if any(r <= 0 for r in ratios):
            raise ConfigError(f"split ratios must be positive, got {ratios}")
        if abs(sum(ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must sum to 1, got {ratios}")


ETT_SPLIT = SplitSpec(0.6, 0.2, 0.2)
DEFAULT_SPLIT = SplitSpec(0.7, 0.1, 0.2)


@dataclass
class WindowSample:
    """One channel-independent (look-back, target) pair; y starts at origin_t + L."""
    x: np.ndarray  # (L,)
    y: np.ndarray  # (H,)
    channel: int
    origin_t: int


def load_csv(path) -> RawSeries:
    """Parse a date + channels CSV; errors carry the offending row/column."""
    path = Path(path)
    with open(path, newline="") as f:
        reader = _csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: file is empty") from None
        if len(header) < 2:
            raise DataFormatError(f"{path}: need a date column plus at least one channel")
        channel_names = header[1:]
        timestamps: list[str] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}: row {lineno} has {len(row)} cells, header has {len(header)}")
            timestamps.append(row[0])
            try:
                rows.append([float(cell) for cell in row[1:]])
            except ValueError:
                for col, cell in enumerate(row[1:], start=2):
                    try:
                        float(cell)
                    except ValueError:
                        raise DataFormatError(
                            f"{path}: row {lineno}, column {col}: "
                            f"cannot parse {cell!r} as a number") from None
                raise
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    values = np.asarray(rows, dtype=np.float64)
    return RawSeries(timestamps=timestamps, values=values, channel_names=channel_names)


def chronological_split(series, spec: SplitSpec) -> tuple[tuple[int, int], ...]:
    """Contiguous (start, stop) ranges; floor sizes, remainder goes to test."""
    spec.validate()
    total = series if isinstance(series, int) else series.num_steps
    n_train = int(total * spec.train)
    n_val = int(total * spec.val)
    if n_train == 0 or n_val == 0 or total - n_train - n_val <= 0:
        raise ConfigError(f"series of length {total} too short for split {spec}")
    return (0, n_train), (n_train, n_train + n_val), (n_train + n_val, total)


@dataclass
class Standardizer:
    mean: np.ndarray  # (C,)
    std: np.ndarray   # (C,)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean


def fit_standardizer(train_values: np.ndarray) -> Standardizer:
    """Per-channel z-score statistics (population std) from the train split only."""
    train_values = np.asarray(train_values)
    if train_values.ndim != 2 or train_values.shape[0] < 2:
        raise DataError(f"need a (T, C) array with T >= 2, got shape {train_values.shape}")
    mean = train_values.mean(axis=0)
    std = train_values.std(axis=0)
    bad = np.nonzero(std <= 0)[0]
    if bad.size:
        raise DataError(f"zero-variance channel(s) {bad.tolist()} cannot be standardized")
    return Standardizer(mean=mean, std=std)


def make_windows(split_values: np.ndarray, lookback: int, horizon: int,
                 stride: int = 1) -> list[WindowSample]:
    """All (window, channel) samples fully inside one split; x/y are views."""
    split_values = np.asarray(split_values)
    t_split, n_channels = split_values.shape
    if t_split < lookback + horizon:
        raise ConfigError(
            f"split of length {t_split} too short for lookback {lookback} + horizon {horizon}")
    samples = []
    for t in range(0, t_split - lookback - horizon + 1, stride):
        for c in range(n_channels):
            samples.append(WindowSample(
                x=split_values[t:t + lookback, c],
                y=split_values[t + lookback:t + lookback + horizon, c],
                channel=c, origin_t=t))
    return samples


def windows_to_arrays(samples: list[WindowSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xs = np.stack([s.x for s in samples])
    ys = np.stack([s.y for s in samples])
    channels = np.asarray([s.channel for s in samples], dtype=np.intp)
    return xs, ys, channels


# ---------------------------------------------------------------------------
# Dataset registry.

@dataclass
class DatasetEntry:
    path: Path
    split: SplitSpec = field(default_factory=lambda: DEFAULT_SPLIT)
    frequency: str = ""


# Hourly/quarter-hourly transformer-load benchmarks use 6:2:2; the rest 7:1:2.
_KNOWN_DATASETS = {
    "etth1": ("ETTh1.csv", ETT_SPLIT, "1h"),
    "etth2": ("ETTh2.csv", ETT_SPLIT, "1h"),
    "ettm1": ("ETTm1.csv", ETT_SPLIT, "15min"),
    "ettm2": ("ETTm2.csv", ETT_SPLIT, "15min"),
    "electricity": ("electricity.csv", DEFAULT_SPLIT, "1h"),
    "traffic": ("traffic.csv", DEFAULT_SPLIT, "1h"),
    "weather": ("weather.csv", DEFAULT_SPLIT, "10min"),
}


def default_registry(data_dir) -> dict[str, DatasetEntry]:
    data_dir = Path(data_dir)
    return {name: DatasetEntry(path=data_dir / fname, split=split, frequency=freq)
            for name, (fname, split, freq) in _KNOWN_DATASETS.items()}


def load_registry(path) -> dict[str, DatasetEntry]:
    """JSON registry: name -> {path, ratios: [train, val, test], frequency}."""
    path = Path(path)
    try:
        with open(path) as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: cannot read registry: {exc}") from exc
    registry = {}
    for name, entry in raw.items():
        try:
            csv_path = Path(entry["path"])
            if not csv_path.is_absolute():
                csv_path = path.parent / csv_path
            ratios = entry.get("ratios", [0.7, 0.1, 0.2])
            split = SplitSpec(*ratios)
            split.validate()
            registry[name.lower()] = DatasetEntry(
                path=csv_path, split=split, frequency=entry.get("frequency", ""))
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"{path}: bad registry entry {name!r}: {exc}") from exc
    return registry


def synthetic_sine(n_steps: int, n_channels: int = 1, seed: int = 0,
                   noise: float = 0.1) -> RawSeries:
    """Mixed-period sine channels with additive noise, for tests and demos."""
    rng = np.random.default_rng(seed)
    t = np.arange(n_steps, dtype=np.float64)
    values = np.empty((n_steps, n_channels))
    for c in range(n_channels):
        period1 = 24.0 + 8.0 * rng.random()
        period2 = 96.0 + 32.0 * rng.random()
        phase1, phase2 = rng.uniform(0, 2 * np.pi, size=2)
        amp2 = 0.5 + rng.random()
        values[:, c] = (np.sin(2 * np.pi * t / period1 + phase1)
                        + amp2 * np.sin(2 * np.pi * t / period2 + phase2)
                        + noise * rng.standard_normal(n_steps))
    timestamps = [f"t{i}" for i in range(n_steps)]
    names = [f"ch{c}" for c in range(n_channels)]
    return RawSeries(timestamps=timestamps, values=values, channel_names=names)
