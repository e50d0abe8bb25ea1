"""Dataset ingestion and preparation.

Raw files are whitespace-separated numeric columns (DaISy style, with
'#' or '%' comment lines).  Preparation subsamples rows to emulate
missing data, and the retained rows keep their original timestamps, so
every downstream consumer sees an unevenly sampled series.  Splitting
and normalization happen after subsampling: boundaries at 70% / 85%,
per-channel mean/std taken from the training rows only.

The canonical intermediate is a CSV with header ``t,x1..xK,y1..yM``;
training and evaluation read only this format.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "DataError",
    "TimeSeries",
    "NormStats",
    "Dataset",
    "SegmentIndex",
    "ColumnSpec",
    "DaisyPreset",
    "DAISY_PRESETS",
    "load_daisy",
    "subsample_missing",
    "split_normalize",
    "augment_delta_channel",
    "make_segments",
    "write_canonical_csv",
    "read_canonical_csv",
]


class DataError(ValueError):
    """Malformed input data or an impossible data request."""


@dataclass
class TimeSeries:
    """Aligned timestamps, input rows and output rows."""

    t: np.ndarray  # (N,)
    x: np.ndarray  # (N, k_x_raw)
    y: np.ndarray  # (N, k_out)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.y = np.atleast_2d(np.asarray(self.y, dtype=np.float64))
        n = self.t.shape[0]
        if n < 2:
            raise DataError("a time series needs at least two rows")
        if self.x.shape[0] != n or self.y.shape[0] != n:
            raise DataError(
                f"misaligned rows: t has {n}, x has {self.x.shape[0]}, "
                f"y has {self.y.shape[0]}"
            )
        if not np.all(np.diff(self.t) > 0):
            raise DataError("timestamps must be strictly increasing")

    def __len__(self):
        return self.t.shape[0]


@dataclass(frozen=True)
class NormStats:
    """Training-range channel statistics used for normalization."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray


@dataclass
class Dataset:
    """Normalized series plus split boundaries and step statistics.

    Rows [0, train_end) train, [train_end, val_end) validate, the rest
    test.  ``mu_delta`` is the mean gap between consecutive training
    rows.  When ``delta_channel`` is set, the last input column is the
    normalized step size and is excluded from the normalization stats.
    """

    series: TimeSeries
    train_end: int
    val_end: int
    mu_delta: float
    stats: NormStats
    delta_channel: bool = False

    @property
    def n(self) -> int:
        return len(self.series)

    @property
    def k_x_raw(self) -> int:
        return self.series.x.shape[1]

    @property
    def k_out(self) -> int:
        return self.series.y.shape[1]

    def norm_digest(self) -> str:
        """Fingerprint of the normalization applied to this dataset."""
        h = hashlib.sha256()
        for arr in (self.stats.x_mean, self.stats.x_std,
                    self.stats.y_mean, self.stats.y_std):
            h.update(arr.tobytes())
        h.update(np.float64(self.mu_delta).tobytes())
        h.update(bytes([self.delta_channel]))
        h.update(np.int64([self.n, self.train_end, self.val_end]).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class SegmentIndex:
    """Start offsets of the training windows, one initial-state slot each."""

    starts: np.ndarray  # (num_segments,) ascending
    length: int


@dataclass(frozen=True)
class ColumnSpec:
    time_col: int | None
    input_cols: tuple
    output_cols: tuple


@dataclass(frozen=True)
class DaisyPreset:
    name: str
    columns: ColumnSpec
    sample_period: float | None
    expected_rows: int


# CSTR: time, coolant flow, then concentration and temperature.
# Winding: three reel speeds and two motor currents, then the two web
# tensions; no time column (10 samples per second).
DAISY_PRESETS = {
    "cstr": DaisyPreset(
        name="cstr",
        columns=ColumnSpec(time_col=0, input_cols=(1,), output_cols=(2, 3)),
        sample_period=None,
        expected_rows=7500,
    ),
    "winding": DaisyPreset(
        name="winding",
        columns=ColumnSpec(time_col=None, input_cols=(0, 1, 2, 3, 4),
                           output_cols=(5, 6)),
        sample_period=0.1,
        expected_rows=2500,
    ),
}


def load_daisy(path, columns: ColumnSpec, sample_period: float | None = None) -> TimeSeries:
    """Parse a whitespace-separated numeric table into a TimeSeries.

    Lines starting with '#' or '%' are comments.  When the spec has no
    time column, timestamps are synthesized as n * sample_period.
    """
    if columns.time_col is None and sample_period is None:
        raise DataError("sample_period is required when there is no time column")
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped[0] in "#%":
                continue
            tokens = stripped.split()
            if width is None:
                width = len(tokens)
            elif len(tokens) != width:
                raise DataError(
                    f"{path}:{lineno}: ragged row ({len(tokens)} columns, "
                    f"expected {width})"
                )
            try:
                rows.append([float(tok) for tok in tokens])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric token") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=np.float64)
    needed = list(columns.input_cols) + list(columns.output_cols)
    if columns.time_col is not None:
        needed.append(columns.time_col)
    for col in needed:
        if col >= table.shape[1]:
            raise DataError(
                f"{path}: column {col} missing (file has {table.shape[1]} columns)"
            )
    if columns.time_col is not None:
        t = table[:, columns.time_col]
    else:
        t = np.arange(table.shape[0], dtype=np.float64) * sample_period
    x = table[:, list(columns.input_cols)]
    y = table[:, list(columns.output_cols)]
    return TimeSeries(t=t, x=x, y=y)


def subsample_missing(series: TimeSeries, p_missing: float, seed: int) -> TimeSeries:
    """Drop each row after the first independently with probability p_missing.

    The first row always survives (it anchors t0 and the trained initial
    state).  Retained rows keep their timestamps and order.
    """
    if not 0.0 <= p_missing < 1.0:
        raise DataError(f"p_missing must be in [0, 1), got {p_missing}")
    if p_missing == 0.0:
        return TimeSeries(t=series.t.copy(), x=series.x.copy(), y=series.y.copy())
    rng = np.random.default_rng(seed)
    keep = np.ones(len(series), dtype=bool)
    keep[1:] = rng.random(len(series) - 1) >= p_missing
    return TimeSeries(t=series.t[keep], x=series.x[keep], y=series.y[keep])


def split_normalize(series: TimeSeries) -> Dataset:
    """70/15/15 split with training-range z-score normalization.

    Inputs and outputs are both normalized (the loss lives in normalized
    output space; the relative error metric is unaffected).
    """
    n = len(series)
    if n < 20:
        raise DataError(f"need at least 20 rows to split, got {n}")
    train_end = int(np.floor(0.7 * n))
    val_end = int(np.floor(0.85 * n))
    x_train = series.x[:train_end]
    y_train = series.y[:train_end]
    stats = NormStats(
        x_mean=x_train.mean(axis=0),
        x_std=x_train.std(axis=0),
        y_mean=y_train.mean(axis=0),
        y_std=y_train.std(axis=0),
    )
    for label, std in (("input", stats.x_std), ("output", stats.y_std)):
        if np.any(std == 0.0):
            ch = int(np.nonzero(std == 0.0)[0][0])
            raise DataError(f"{label} channel {ch} has zero variance in the training range")
    normalized = TimeSeries(
        t=series.t.copy(),
        x=(series.x - stats.x_mean) / stats.x_std,
        y=(series.y - stats.y_mean) / stats.y_std,
    )
    deltas = np.diff(series.t[:train_end])
    mu_delta = float(deltas.mean())
    return Dataset(
        series=normalized,
        train_end=train_end,
        val_end=val_end,
        mu_delta=mu_delta,
        stats=stats,
    )


def augment_delta_channel(dataset: Dataset) -> Dataset:
    """Append the normalized step size delta_n / mu_delta as an input channel.

    Row n carries the gap to row n+1; the last row reuses the previous
    gap.  The channel is not re-normalized: evenly sampled data yields a
    constant 1.
    """
    if dataset.delta_channel:
        raise DataError("delta channel already present")
    t = dataset.series.t
    gaps = np.diff(t) / dataset.mu_delta
    channel = np.concatenate([gaps, gaps[-1:]])
    series = TimeSeries(
        t=t.copy(),
        x=np.column_stack([dataset.series.x, channel]),
        y=dataset.series.y.copy(),
    )
    return replace(dataset, series=series, delta_channel=True)


def make_segments(dataset: Dataset, length: int, stride: int = 1) -> SegmentIndex:
    """Training windows of ``length`` steps at the given stride.

    Starts run 0, stride, 2*stride, ... while start + length stays within
    the training range.
    """
    if length < 2:
        raise DataError("segment length must be at least 2")
    if stride < 1:
        raise DataError("stride must be at least 1")
    train_len = dataset.train_end
    if train_len <= length:
        raise DataError(
            f"training range ({train_len} rows) is shorter than one segment ({length})"
        )
    starts = np.arange(0, train_len - length + 1, stride, dtype=np.int64)
    return SegmentIndex(starts=starts, length=length)


# ----------------------------------------------------------------------
# Canonical CSV.


def write_canonical_csv(series: TimeSeries, path) -> None:
    """Write ``t,x1..xK,y1..yM`` rows; floats use lossless repr."""
    kx = series.x.shape[1]
    ky = series.y.shape[1]
    header = ",".join(
        ["t"] + [f"x{i + 1}" for i in range(kx)] + [f"y{i + 1}" for i in range(ky)]
    )
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(len(series)):
            row = [series.t[i], *series.x[i], *series.y[i]]
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_canonical_csv(path) -> TimeSeries:
    with open(path) as fh:
        header = fh.readline().strip()
        cols = header.split(",")
        if not cols or cols[0] != "t":
            raise DataError(f"{path}: not a canonical CSV (header starts {cols[:1]})")
        kx = sum(1 for c in cols if c.startswith("x"))
        ky = sum(1 for c in cols if c.startswith("y"))
        if kx == 0 or ky == 0 or 1 + kx + ky != len(cols):
            raise DataError(f"{path}: malformed header {header!r}")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            tokens = line.strip().split(",")
            if len(tokens) != len(cols):
                raise DataError(f"{path}:{lineno}: expected {len(cols)} fields")
            try:
                rows.append([float(tok) for tok in tokens])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric field") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=np.float64)
    return TimeSeries(t=table[:, 0], x=table[:, 1:1 + kx], y=table[:, 1 + kx:])
