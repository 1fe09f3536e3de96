"""Dataset ingestion, gap repair, windowing, splits, and a synthetic generator.

CSV contract: UTF-8, comma-separated, header row, first column ``timestamp``
holding ISO-8601 hourly instants, remaining columns named like the declared
network variables. Parsing is strict: a missing declared column, a duplicate
timestamp, or a non-numeric cell is an error, not a silent NaN.

Hourly continuity drives everything downstream: a Dataset's segments are the
maximal runs of consecutive hourly timestamps, and windows never straddle a
segment boundary. ``repair_gaps`` interpolates holes up to a cutoff; longer
holes simply remain segment breaks.

The synthetic generator plants a known cause structure at p=6 (a spiking
driver, a causally disconnected decoy, a mid channel lagging the driver, and
a site cluster whose target lags the mid and a tide-like downstream channel
plus a 12-hour harmonic), so end-to-end tests can ask whether training
recovers what was planted. All draws flow from the seed via named streams.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, SchemaError
from .model import SeriesWindow, TimeFeature
from .rng import Rng, derive_seed

HOUR = np.timedelta64(1, "h")


@dataclass
class NormStats:
    """Per-variable z-score statistics, fitted on the training split only."""

    variables: list[str]
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {
            "variables": list(self.variables),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }

    @staticmethod
    def from_dict(obj: dict) -> "NormStats":
        return NormStats(
            variables=list(obj["variables"]),
            mean=np.asarray(obj["mean"], dtype=np.float64),
            std=np.asarray(obj["std"], dtype=np.float64),
        )


@dataclass
class Dataset:
    """Aligned hourly series. Segments derive from timestamp continuity."""

    timestamps: np.ndarray  # datetime64[h], strictly increasing
    values: np.ndarray  # (n, p) float64, column j is variables[j]
    columns: list[str]
    stats: NormStats | None = None

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[h]")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.timestamps), len(self.columns)):
            raise DataError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.timestamps)} rows x {len(self.columns)} columns"
            )
        if len(self.timestamps) > 1 and not (np.diff(self.timestamps) > np.timedelta64(0, "h")).all():
            raise DataError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.timestamps)

    def segments(self) -> list[tuple[int, int]]:
        """Half-open [start, stop) runs of consecutive hourly timestamps."""
        n = len(self.timestamps)
        if n == 0:
            return []
        breaks = np.where(np.diff(self.timestamps) != HOUR)[0]
        starts = np.concatenate([[0], breaks + 1])
        stops = np.concatenate([breaks + 1, [n]])
        return list(zip(starts.tolist(), stops.tolist()))

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.columns.index(name)]
        except ValueError as exc:
            raise SchemaError(f"unknown column {name!r}") from exc

    def calendar(self) -> np.ndarray:
        """(n, 3) ints: month 1-12, day 1-31, hour 0-23 per row."""
        ts = self.timestamps
        months = (ts.astype("datetime64[M]").astype(np.int64) % 12) + 1
        days = (ts.astype("datetime64[D]") - ts.astype("datetime64[M]")).astype(np.int64) + 1
        hours = (ts - ts.astype("datetime64[D]")).astype(np.int64)
        return np.stack([months, days, hours], axis=1)

    def years(self) -> np.ndarray:
        return self.timestamps.astype("datetime64[Y]").astype(np.int64) + 1970

    def subset(self, mask: np.ndarray) -> "Dataset":
        return Dataset(
            timestamps=self.timestamps[mask],
            values=self.values[mask],
            columns=list(self.columns),
            stats=self.stats,
        )


def parse_csv(path, columns: list[str]) -> Dataset:
    """Load the declared columns from a CSV file; strict parse, sorted rows."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if not header or header[0] != "timestamp":
            raise SchemaError(f"{path}: first column must be 'timestamp'")
        missing = [c for c in columns if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing declared columns {missing}")
        col_idx = [header.index(c) for c in columns]

        stamps: list[np.datetime64] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            stamps.append(_parse_hour(row[0], path, lineno))
            try:
                rows.append([float(row[i]) for i in col_idx])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric cell ({exc})") from None

    if not rows:
        raise DataError(f"{path}: no data rows")
    ts = np.array(stamps, dtype="datetime64[h]")
    order = np.argsort(ts, kind="stable")
    ts = ts[order]
    if (np.diff(ts) == np.timedelta64(0, "h")).any():
        dup = ts[np.where(np.diff(ts) == np.timedelta64(0, "h"))[0][0]]
        raise DataError(f"{path}: duplicated timestamp {dup}")
    return Dataset(timestamps=ts, values=np.asarray(rows)[order], columns=list(columns))


def _parse_hour(text: str, path, lineno: int) -> np.datetime64:
    try:
        stamp = np.datetime64(text.strip().replace(" ", "T"))
    except ValueError:
        raise DataError(f"{path}:{lineno}: bad timestamp {text!r}") from None
    truncated = stamp.astype("datetime64[h]")
    if truncated.astype("datetime64[s]") != stamp.astype("datetime64[s]"):
        raise DataError(f"{path}:{lineno}: timestamp {text!r} is not on the hour")
    return truncated


def write_csv(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp"] + list(ds.columns))
        for ts, row in zip(ds.timestamps, ds.values):
            writer.writerow([str(ts)] + [repr(float(v)) for v in row])


def repair_gaps(ds: Dataset, max_gap: int) -> Dataset:
    """Linearly interpolate holes of at most `max_gap` missing hours.

    Longer holes stay as segment boundaries, so windows never bridge them.
    """
    if len(ds) == 0:
        return ds
    out_ts = [ds.timestamps[0]]
    out_rows = [ds.values[0]]
    for i in range(1, len(ds)):
        delta = int((ds.timestamps[i] - ds.timestamps[i - 1]) / HOUR)
        hole = delta - 1
        if 1 <= hole <= max_gap:
            left, right = ds.values[i - 1], ds.values[i]
            for j in range(1, hole + 1):
                frac = j / (hole + 1)
                out_ts.append(ds.timestamps[i - 1] + j * HOUR)
                out_rows.append(left + frac * (right - left))
        out_ts.append(ds.timestamps[i])
        out_rows.append(ds.values[i])
    return Dataset(
        timestamps=np.array(out_ts, dtype="datetime64[h]"),
        values=np.vstack(out_rows),
        columns=list(ds.columns),
        stats=ds.stats,
    )


# -- normalization ------------------------------------------------------------


def compute_stats(ds: Dataset) -> NormStats:
    """Per-variable mean/std over all rows of `ds` (call on the train split)."""
    if len(ds) == 0:
        raise DataError("cannot compute statistics of an empty dataset")
    mean = ds.values.mean(axis=0)
    std = ds.values.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)  # constant columns pass through centered
    return NormStats(variables=list(ds.columns), mean=mean, std=std)


def normalize(ds: Dataset, stats: NormStats) -> Dataset:
    if stats.variables != ds.columns:
        raise SchemaError("statistics variables do not match dataset columns")
    return Dataset(
        timestamps=ds.timestamps,
        values=(ds.values - stats.mean) / stats.std,
        columns=list(ds.columns),
        stats=stats,
    )


# -- windowing -----------------------------------------------------------------


@dataclass
class WindowSet:
    """Windows stacked into arrays; one row per admissible forecast origin."""

    x: np.ndarray  # (N, B, p)
    times: np.ndarray  # (N, B+tau, 3) calendar ints
    y: np.ndarray  # (N, tau), target units matching x
    origins: np.ndarray  # (N,) datetime64 of the last history step
    variables: list[str]
    target: str
    stats: NormStats | None = None

    def __len__(self) -> int:
        return self.x.shape[0]

    def subset(self, idx) -> "WindowSet":
        return WindowSet(
            x=self.x[idx],
            times=self.times[idx],
            y=self.y[idx],
            origins=self.origins[idx],
            variables=self.variables,
            target=self.target,
            stats=self.stats,
        )

    def as_windows(self) -> list[SeriesWindow]:
        out = []
        for i in range(len(self)):
            times = tuple(
                TimeFeature(month=int(m), day=int(d), hour=int(h))
                for m, d, h in self.times[i]
            )
            out.append(
                SeriesWindow(x=self.x[i], times=times, y=self.y[i], origin=self.origins[i])
            )
        return out


def make_windows(ds: Dataset, history: int, horizon: int, target: str, stride: int = 1) -> WindowSet:
    """One window per admissible origin u: x over (u-B, u], targets over (u, u+tau]."""
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    target_col = ds.column(target)
    calendar = ds.calendar()
    xs, ts, ys, origins = [], [], [], []
    for start, stop in ds.segments():
        first_u = start + history - 1
        last_u = stop - 1 - horizon
        for u in range(first_u, last_u + 1, stride):
            xs.append(ds.values[u - history + 1 : u + 1])
            ts.append(calendar[u - history + 1 : u + horizon + 1])
            ys.append(target_col[u + 1 : u + horizon + 1])
            origins.append(ds.timestamps[u])
    if not xs:
        raise DataError(
            f"no admissible windows: need a segment of at least {history + horizon} hours"
        )
    return WindowSet(
        x=np.stack(xs),
        times=np.stack(ts),
        y=np.stack(ys),
        origins=np.array(origins, dtype="datetime64[h]"),
        variables=list(ds.columns),
        target=target,
        stats=ds.stats,
    )


# -- splitting -----------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test selection.

    chronological: contiguous spans, either by `fractions` (train, val; the
    remainder is test) or by explicit year lists. monthly-shift: per year,
    `train_months` feed train (with a chronological tail carved off for
    validation) and `test_months` feed test.
    """

    mode: str = "chronological"
    fractions: tuple[float, float] = (0.7, 0.1)
    train_years: tuple[int, ...] | None = None
    val_years: tuple[int, ...] | None = None
    test_years: tuple[int, ...] | None = None
    train_months: tuple[int, ...] = (5, 6)
    test_months: tuple[int, ...] = (7, 8)
    years: tuple[int, ...] | None = None
    val_fraction: float = 0.15

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "fractions": list(self.fractions),
            "train_years": list(self.train_years) if self.train_years else None,
            "val_years": list(self.val_years) if self.val_years else None,
            "test_years": list(self.test_years) if self.test_years else None,
            "train_months": list(self.train_months),
            "test_months": list(self.test_months),
            "years": list(self.years) if self.years else None,
            "val_fraction": self.val_fraction,
        }


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    if spec.mode == "chronological":
        return _split_chronological(ds, spec)
    if spec.mode == "monthly-shift":
        return _split_monthly_shift(ds, spec)
    raise ConfigError(f"unknown split mode {spec.mode!r}")


def _nonempty(part: Dataset, name: str) -> Dataset:
    if len(part) == 0:
        raise ConfigError(f"{name} split is empty")
    return part


def _split_chronological(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    n = len(ds)
    if spec.train_years is not None:
        years = ds.years()
        present = set(np.unique(years).tolist())
        declared = set(spec.train_years) | set(spec.test_years or ()) | set(spec.val_years or ())
        outside = declared - present
        if outside:
            raise ConfigError(f"split years {sorted(outside)} are outside the data range")
        if spec.test_years is None:
            raise ConfigError("chronological year split needs test_years")
        val_years = spec.val_years or ()
        if max(spec.train_years) >= min(spec.test_years):
            raise ConfigError("training years must precede test years")
        train = ds.subset(np.isin(years, spec.train_years))
        val = ds.subset(np.isin(years, val_years)) if val_years else ds.subset(np.zeros(n, bool))
        test = ds.subset(np.isin(years, spec.test_years))
    else:
        f_train, f_val = spec.fractions
        if not (0 < f_train < 1 and 0 <= f_val < 1 and f_train + f_val < 1):
            raise ConfigError(f"bad split fractions {spec.fractions}")
        a = int(round(n * f_train))
        b = int(round(n * (f_train + f_val)))
        train, val, test = ds.subset(np.arange(n) < a), ds.subset((np.arange(n) >= a) & (np.arange(n) < b)), ds.subset(np.arange(n) >= b)
    _nonempty(train, "train")
    _nonempty(test, "test")
    return train, val, test


def _split_monthly_shift(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    months = ds.calendar()[:, 0]
    years = ds.years()
    in_years = np.ones(len(ds), dtype=bool) if spec.years is None else np.isin(years, spec.years)
    if spec.years is not None:
        outside = set(spec.years) - set(np.unique(years).tolist())
        if outside:
            raise ConfigError(f"split years {sorted(outside)} are outside the data range")
    train_mask = np.isin(months, spec.train_months) & in_years
    test_mask = np.isin(months, spec.test_months) & in_years
    train_all = _nonempty(ds.subset(train_mask), "train")
    test = _nonempty(ds.subset(test_mask), "test")
    n_val = int(round(len(train_all) * spec.val_fraction))
    if n_val > 0:
        cut = len(train_all) - n_val
        train = train_all.subset(np.arange(len(train_all)) < cut)
        val = train_all.subset(np.arange(len(train_all)) >= cut)
    else:
        train, val = train_all, train_all.subset(np.zeros(len(train_all), bool))
    return _nonempty(train, "train"), val, test


# -- synthetic generator ---------------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Planted-structure generator settings (defaults give the p=6 layout)."""

    alpha: float = 1.0  # driver -> mid coupling
    beta: float = 1.0  # mid -> target coupling
    gamma: float = 0.5  # downstream channel -> target coupling
    amplitude: float = 0.6  # 12-hour harmonic amplitude on the target
    noise_std: float = 0.15
    spike_rate: float = 0.02  # per-hour probability of a driver spike
    spike_magnitude: tuple[float, float] = (1.0, 3.0)  # uniform magnitude range
    lags: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    decay: float = 0.6  # geometric kernel over the lags
    start: str = "2016-01-01T00:00"
    forced_spikes: tuple[tuple[int, float], ...] = ()  # (hour_index, magnitude)
    monthly_spike_scale: tuple[tuple[int, float], ...] = ()  # (month, multiplier)

    def kernel(self) -> np.ndarray:
        w = np.array([self.decay**j for j in range(len(self.lags))])
        return w / w.sum()


SYNTH_NETWORK = {
    "clusters": [
        {"name": "driver", "variables": ["drv"]},
        {"name": "decoy", "variables": ["dcy"]},
        {"name": "mid", "variables": ["mid"]},
        {"name": "site", "variables": ["aux_up", "aux_dn", "tgt"]},
    ],
    "edges": [["driver", "mid"], ["driver", "site"], ["mid", "site"]],
    "target_variable": "tgt",
}


def _lagged(series: np.ndarray, lags, kernel: np.ndarray) -> np.ndarray:
    out = np.zeros_like(series)
    for w, lag in zip(kernel, lags):
        out[lag:] += w * series[:-lag]
    return out


def synth_generate(seed: int, n_hours: int, spec: SynthSpec | None = None):
    """Hourly dataset with a planted cause structure plus its spike event log.

    Returns (Dataset, events, network_config) where events is a list of
    {"hour_index": int, "magnitude": float} driver spikes and network_config
    is the matching cluster/edge declaration.
    """
    if n_hours < 1:
        raise ConfigError("n_hours must be >= 1")
    spec = spec or SynthSpec()
    start = np.datetime64(spec.start, "h")
    timestamps = start + np.arange(n_hours) * HOUR
    hours_of_day = (timestamps - timestamps.astype("datetime64[D]")).astype(np.int64)
    months = (timestamps.astype("datetime64[M]").astype(np.int64) % 12) + 1
    kernel = spec.kernel()

    def stream(name: str) -> Rng:
        return Rng(derive_seed(seed, "synth/" + name))

    # driver: sparse positive spikes, rate optionally scaled per calendar month
    rate = np.full(n_hours, spec.spike_rate)
    for month, scale in spec.monthly_spike_scale:
        rate[months == month] *= scale
    spike_rng = stream("driver")
    hit = spike_rng.uniforms(n_hours) < rate
    lo, hi = spec.spike_magnitude
    magnitude = lo + (hi - lo) * spike_rng.uniforms(n_hours)
    drv = np.where(hit, magnitude, 0.0)
    for hour_index, mag in spec.forced_spikes:
        drv[hour_index] = mag
        hit[hour_index] = True
    events = [
        {"hour_index": int(i), "magnitude": float(drv[i])} for i in np.where(hit)[0]
    ]

    # decoy: pure noise, no causal path into anything
    dcy = stream("decoy").normals(n_hours)

    noise = spec.noise_std
    mid = spec.alpha * _lagged(drv, spec.lags, kernel) + noise * stream("mid").normals(n_hours)

    aux_up = 0.4 * _lagged(mid, spec.lags, kernel) + noise * stream("aux_up").normals(n_hours)

    # downstream tide-like channel: harmonic plus slow AR noise
    ar = stream("aux_dn").normals(n_hours)
    slow = np.zeros(n_hours)
    for t in range(1, n_hours):
        slow[t] = 0.9 * slow[t - 1] + 0.1 * ar[t]
    aux_dn = 0.8 * np.sin(2 * np.pi * hours_of_day / 12.0 + 1.0) + slow

    tgt = (
        spec.beta * _lagged(mid, spec.lags, kernel)
        + spec.gamma * _lagged(aux_dn, spec.lags, kernel)
        + spec.amplitude * np.sin(2 * np.pi * hours_of_day / 12.0)
        + noise * stream("target").normals(n_hours)
    )

    values = np.stack([drv, dcy, mid, aux_up, aux_dn, tgt], axis=1)
    columns = ["drv", "dcy", "mid", "aux_up", "aux_dn", "tgt"]
    ds = Dataset(timestamps=timestamps, values=values, columns=columns)
    return ds, events, json.loads(json.dumps(SYNTH_NETWORK))


def write_event_log(events, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(events, fh, sort_keys=True, separators=(",", ":"))
