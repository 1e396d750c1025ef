"""Dataset ingestion, imputation, windowing, folds, and the sample cache.

The flow CSV schema is long-form: ``timestamp,node_id,flow`` plus any of the
optional columns ``speed``, ``density``, ``heavy_ratio``, ``lane_count``
(numeric) and ``weather`` (categorical). Timestamps are ISO-8601 on a
five-minute grid; empty cells are missing, not zero.

Ingestion builds a (time x node x feature) grid over the union of observed
timestamps. Consecutive grid times exactly five minutes apart form a
contiguous span; larger jumps (overnight gaps, outages affecting every node)
are span boundaries. Missing cells inside the grid are imputed from the same
node and feature's temporally nearest observations; windows never straddle
span boundaries.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .encoding import CalendarConfig, Vocabulary, trig_encode_arrays
from .errors import ContractError, ValidationError

__all__ = [
    "ParseError",
    "ImputationError",
    "RawSeries",
    "FoldSplit",
    "SampleSet",
    "ingest_csv",
    "impute_knn",
    "sliding_window",
    "kfold_split",
    "convert_wide_csv",
    "INTERVAL_MINUTES",
]

INTERVAL_MINUTES = 5
NUMERIC_COLUMNS = ("flow", "speed", "density", "heavy_ratio", "lane_count")
CACHE_MAGIC = b"LGSC"
CACHE_VERSION = 1


class ParseError(ValidationError):
    """A CSV row could not be parsed; the message carries the line number."""


class ImputationError(ValidationError):
    """A node lacks enough observed values to impute from."""


def _parse_timestamp(text: str) -> int:
    """ISO-8601 -> minutes on a calendar-absolute axis (naive, no timezone)."""
    dt = datetime.fromisoformat(text)
    return dt.toordinal() * 1440 + dt.hour * 60 + dt.minute


def _format_timestamp(minutes: int) -> str:
    ordinal, rest = divmod(int(minutes), 1440)
    base = datetime.fromordinal(ordinal)
    return f"{base:%Y-%m-%d}T{rest // 60:02d}:{rest % 60:02d}:00"


class RawSeries:
    """Time x node x feature grid with NaN-marked missing cells."""

    def __init__(self, times, values, numeric_features, weather=None):
        self.times = np.asarray(times, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        self.numeric_features = list(numeric_features)
        self.weather = weather  # (T, N) array of labels, "" = missing, or None
        if self.values.shape[0] != self.times.shape[0]:
            raise ValidationError("times and values disagree on length")
        diffs = np.diff(self.times)
        if np.any(diffs <= 0):
            raise ValidationError("timestamps must be strictly increasing")
        if np.any((diffs < INTERVAL_MINUTES)):
            raise ValidationError("timestamps closer than the 5-minute grid")

    @property
    def node_count(self) -> int:
        return self.values.shape[1]

    def spans(self) -> list[tuple[int, int]]:
        """Half-open (start, end) index ranges of uninterrupted 5-minute runs."""
        if len(self.times) == 0:
            return []
        breaks = np.flatnonzero(np.diff(self.times) != INTERVAL_MINUTES)
        starts = np.concatenate(([0], breaks + 1))
        ends = np.concatenate((breaks + 1, [len(self.times)]))
        return list(zip(starts.tolist(), ends.tolist()))

    def missing_count(self) -> int:
        count = int(np.isnan(self.values).sum())
        if self.weather is not None:
            count += int((self.weather == "").sum())
        return count


def ingest_csv(path, node_count: int | None = None) -> RawSeries:
    """Parse a long-form flow CSV into a RawSeries grid."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if header[:3] != ["timestamp", "node_id", "flow"]:
            raise ValidationError(
                f"{path}: header must start with timestamp,node_id,flow, got {header[:3]}"
            )
        numeric_cols = ["flow"]
        weather_col = None
        for pos, name in enumerate(header[3:], start=3):
            if name == "weather":
                weather_col = pos
            elif name in NUMERIC_COLUMNS:
                numeric_cols.append(name)
            else:
                raise ValidationError(f"{path}: unknown column {name!r}")
        col_pos = {name: header.index(name) for name in numeric_cols}

        records = {}  # (time, node) -> (values tuple, weather label)
        times_seen = set()
        max_node = -1
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}"
                )
            try:
                t = _parse_timestamp(row[0].strip())
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad timestamp {row[0]!r}") from None
            try:
                node = int(row[1])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad node id {row[1]!r}") from None
            if node < 0:
                raise ValidationError(f"{path}:{lineno}: negative node id {node}")
            if node_count is not None and node >= node_count:
                raise ValidationError(
                    f"{path}:{lineno}: unknown node id {node} (expected 0..{node_count - 1})"
                )
            key = (t, node)
            if key in records:
                raise ValidationError(
                    f"{path}:{lineno}: duplicate record for node {node} at {row[0]}"
                )
            vals = []
            for name in numeric_cols:
                cell = row[col_pos[name]].strip()
                if cell == "":
                    vals.append(np.nan)  # explicitly missing, never zero
                else:
                    try:
                        vals.append(float(cell))
                    except ValueError:
                        raise ParseError(
                            f"{path}:{lineno}: bad {name} value {cell!r}"
                        ) from None
            label = row[weather_col].strip() if weather_col is not None else None
            records[key] = (vals, label)
            times_seen.add(t)
            max_node = max(max_node, node)

    if not records:
        raise ValidationError(f"{path}: no data rows")
    n = node_count if node_count is not None else max_node + 1
    nodes_with_data = {node for (_, node) in records}
    absent = sorted(set(range(n)) - nodes_with_data)
    if absent:
        raise ValidationError(
            f"{path}: node {absent[0]} has no records (expected all of 0..{n - 1})"
        )
    times = np.array(sorted(times_seen), dtype=np.int64)
    index_of = {t: i for i, t in enumerate(times.tolist())}
    values = np.full((len(times), n, len(numeric_cols)), np.nan)
    weather = np.full((len(times), n), "", dtype=object) if weather_col is not None else None
    for (t, node), (vals, label) in records.items():
        ti = index_of[t]
        values[ti, node, :] = vals
        if weather is not None and label is not None:
            weather[ti, node] = label
    return RawSeries(times, values, numeric_cols, weather)


def _nearest_indices(obs_times, target_time, k):
    """Indices of the k observations nearest in time (ties -> earlier first)."""
    pos = int(np.searchsorted(obs_times, target_time))
    lo, hi = pos - 1, pos
    picked = []
    while len(picked) < k and (lo >= 0 or hi < len(obs_times)):
        d_lo = target_time - obs_times[lo] if lo >= 0 else None
        d_hi = obs_times[hi] - target_time if hi < len(obs_times) else None
        if d_hi is None or (d_lo is not None and d_lo <= d_hi):
            picked.append(lo)
            lo -= 1
        else:
            picked.append(hi)
            hi += 1
    return picked


def impute_knn(series: RawSeries, k: int = 4) -> RawSeries:
    """Fill every missing cell from the k temporally nearest observations of
    the same node and feature, weighting by inverse time distance.

    Weather labels, having no arithmetic, take the single nearest observed
    label instead.
    """
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    values = series.values.copy()
    times = series.times
    for node in range(series.node_count):
        for f_idx, name in enumerate(series.numeric_features):
            col = values[:, node, f_idx]
            missing = np.flatnonzero(np.isnan(col))
            if missing.size == 0:
                continue
            observed = np.flatnonzero(~np.isnan(col))
            if observed.size < k:
                raise ImputationError(
                    f"node {node}: only {observed.size} observed {name!r} values, "
                    f"need at least k={k} to impute"
                )
            obs_times = times[observed]
            obs_vals = col[observed]
            for m in missing:
                picked = _nearest_indices(obs_times, times[m], k)
                dist = np.abs(obs_times[picked] - times[m]) / INTERVAL_MINUTES
                weights = 1.0 / dist
                col[m] = float(np.sum(weights * obs_vals[picked]) / np.sum(weights))
    weather = None
    if series.weather is not None:
        weather = series.weather.copy()
        for node in range(series.node_count):
            labels = weather[:, node]
            missing = np.flatnonzero(labels == "")
            if missing.size:
                observed = np.flatnonzero(labels != "")
                if observed.size == 0:
                    raise ImputationError(f"node {node}: no observed weather labels")
                obs_times = times[observed]
                for m in missing:
                    picked = _nearest_indices(obs_times, times[m], 1)
                    labels[m] = labels[observed[picked[0]]]
    return RawSeries(times, values, series.numeric_features, weather)


def build_features(
    series: RawSeries,
    calendar: CalendarConfig = CalendarConfig(),
    vocab: Vocabulary | None = None,
    day_start_minute: int = 0,
):
    """Assemble the model feature grid (T, N, F) from an imputed series.

    Feature order: the numeric columns as ingested, then the weather code
    when present, then moment_sin, moment_cos, hour_sin, hour_cos. Returns
    (features, feature_names, flow_index).
    """
    if np.isnan(series.values).any():
        raise ContractError("build_features requires an imputed series")
    t_count, n, _ = series.values.shape
    columns = [series.values]
    names = list(series.numeric_features)
    if series.weather is not None:
        if vocab is None:
            raise ContractError("weather present but no vocabulary supplied")
        codes = np.array(
            [[vocab.encode(lbl) for lbl in row] for row in series.weather],
            dtype=np.float64,
        )
        columns.append(codes[:, :, None])
        names.append("weather_code")
    minute_of_day = series.times % 1440
    moments = (minute_of_day - day_start_minute) // INTERVAL_MINUTES
    weekdays = (series.times // 1440 - 1) % 7  # ordinal day 1 was a Monday
    hours = weekdays * 24 + minute_of_day // 60
    ms, mc, hs, hc = trig_encode_arrays(moments, hours, calendar)
    trig = np.stack([ms, mc, hs, hc], axis=1)  # (T, 4)
    columns.append(np.broadcast_to(trig[:, None, :], (t_count, n, 4)))
    names.extend(["moment_sin", "moment_cos", "hour_sin", "hour_cos"])
    features = np.concatenate(columns, axis=2)
    return features, names, names.index("flow")


def sliding_window(
    features: np.ndarray,
    flow_index: int,
    spans,
    times: np.ndarray,
    window: int = 24,
    input_lags: int = 12,
    horizon: int = 12,
    stride: int = 1,
):
    """Cut (X, Y, target_start_times) sample blocks out of contiguous spans.

    X is (S, N, input_lags, F); Y is (S, N, horizon) raw flow. A span of
    length L yields max(0, (L - window) // stride + 1) samples; windows never
    cross span boundaries.
    """
    if input_lags + horizon != window:
        raise ContractError(
            f"window {window} must equal input_lags {input_lags} + horizon {horizon}"
        )
    if stride < 1:
        raise ContractError(f"stride must be >= 1, got {stride}")
    xs, ys, t0s = [], [], []
    for start, end in spans:
        length = end - start
        if length < window:
            continue
        for offset in range(start, end - window + 1, stride):
            block = features[offset : offset + input_lags]  # (L, N, F)
            target = features[offset + input_lags : offset + window, :, flow_index]
            xs.append(block.transpose(1, 0, 2))  # (N, L, F)
            ys.append(target.T)  # (N, H)
            t0s.append(times[offset + input_lags])
    n = features.shape[1]
    f = features.shape[2]
    if xs:
        x = np.stack(xs)
        y = np.stack(ys)
        t0 = np.array(t0s, dtype=np.int64)
    else:
        x = np.empty((0, n, input_lags, f))
        y = np.empty((0, n, horizon))
        t0 = np.empty(0, dtype=np.int64)
    return x, y, t0


@dataclass
class FoldSplit:
    """Disjoint covering index folds with sizes differing by at most one."""

    folds: list
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def test_indices(self, fold: int) -> np.ndarray:
        return self.folds[fold]

    def train_indices(self, fold: int) -> np.ndarray:
        rest = [f for i, f in enumerate(self.folds) if i != fold]
        return np.sort(np.concatenate(rest))


def kfold_split(sample_count: int, k: int = 5, seed: int = 0) -> FoldSplit:
    """Seeded shuffle, then contiguous partition into k nearly equal folds."""
    if sample_count < k:
        raise ContractError(f"{sample_count} samples cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(sample_count)
    base = sample_count // k
    remainder = sample_count % k
    folds = []
    cursor = 0
    for i in range(k):
        size = base + (1 if i < remainder else 0)
        folds.append(np.sort(perm[cursor : cursor + size]))
        cursor += size
    return FoldSplit(folds=folds, seed=seed)


class SampleSet:
    """Materialized sample blocks plus everything needed to interpret them.

    ``access_log`` supports leakage instrumentation: when set to a list,
    every block read appends its sample index.
    """

    def __init__(
        self,
        x: np.ndarray,
        y: np.ndarray,
        feature_names,
        flow_index: int,
        target_times: np.ndarray,
        vocab_labels=(),
        calendar: CalendarConfig = CalendarConfig(),
        day_start_minute: int = 0,
        test_mask: np.ndarray | None = None,
        adjacency: np.ndarray | None = None,
    ):
        if x.ndim != 4 or y.ndim != 3 or x.shape[0] != y.shape[0]:
            raise ValidationError(f"malformed sample blocks {x.shape} / {y.shape}")
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.feature_names = list(feature_names)
        self.flow_index = int(flow_index)
        self.target_times = np.asarray(target_times, dtype=np.int64)
        self.vocab_labels = list(vocab_labels)
        self.calendar = calendar
        self.day_start_minute = int(day_start_minute)
        self.test_mask = None if test_mask is None else np.asarray(test_mask, bool)
        self.adjacency = None if adjacency is None else np.asarray(adjacency, np.float64)
        self.access_log: list[int] | None = None

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def node_count(self) -> int:
        return self.x.shape[1]

    @property
    def lags(self) -> int:
        return self.x.shape[2]

    @property
    def feature_count(self) -> int:
        return self.x.shape[3]

    @property
    def horizon(self) -> int:
        return self.y.shape[2]

    def _log(self, index: int) -> None:
        if self.access_log is not None:
            self.access_log.append(int(index))

    def input_block(self, index: int) -> np.ndarray:
        self._log(index)
        return self.x[index]

    def target_block(self, index: int) -> np.ndarray:
        self._log(index)
        return self.y[index]

    def input_blocks(self, indices) -> np.ndarray:
        for i in indices:
            self._log(i)
        return self.x[np.asarray(indices, dtype=np.intp)]

    def target_blocks(self, indices) -> np.ndarray:
        for i in indices:
            self._log(i)
        return self.y[np.asarray(indices, dtype=np.intp)]

    # ---- binary cache ----------------------------------------------------

    def save(self, path) -> None:
        header = {
            "feature_names": self.feature_names,
            "flow_index": self.flow_index,
            "vocab_labels": self.vocab_labels,
            "moment_num": self.calendar.moment_num,
            "hour_num": self.calendar.hour_num,
            "day_start_minute": self.day_start_minute,
            "shape_x": list(self.x.shape),
            "shape_y": list(self.y.shape),
            "has_test_mask": self.test_mask is not None,
            "adjacency": None if self.adjacency is None else self.adjacency.tolist(),
        }
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(CACHE_MAGIC)
            fh.write(struct.pack("<I", CACHE_VERSION))
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            fh.write(np.ascontiguousarray(self.x, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.y, dtype="<f8").tobytes())
            fh.write(self.target_times.astype("<i8").tobytes())
            if self.test_mask is not None:
                fh.write(self.test_mask.astype("<i1").tobytes())

    @classmethod
    def load(cls, path) -> "SampleSet":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != CACHE_MAGIC:
                raise ValidationError(f"{path}: not a sample cache (magic {magic!r})")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != CACHE_VERSION:
                raise ValidationError(f"{path}: unsupported cache version {version}")
            (header_len,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(header_len))
            shape_x = tuple(header["shape_x"])
            shape_y = tuple(header["shape_y"])
            x = np.frombuffer(fh.read(8 * int(np.prod(shape_x))), dtype="<f8").reshape(shape_x)
            y = np.frombuffer(fh.read(8 * int(np.prod(shape_y))), dtype="<f8").reshape(shape_y)
            times = np.frombuffer(fh.read(8 * shape_x[0]), dtype="<i8")
            test_mask = None
            if header["has_test_mask"]:
                test_mask = np.frombuffer(fh.read(shape_x[0]), dtype="<i1").astype(bool)
        return cls(
            x=x.copy(),
            y=y.copy(),
            feature_names=header["feature_names"],
            flow_index=header["flow_index"],
            target_times=times.copy(),
            vocab_labels=header["vocab_labels"],
            calendar=CalendarConfig(header["moment_num"], header["hour_num"]),
            day_start_minute=header["day_start_minute"],
            test_mask=test_mask,
            adjacency=None
            if header.get("adjacency") is None
            else np.array(header["adjacency"], dtype=np.float64),
        )


def convert_wide_csv(src, dst) -> int:
    """Rewrite a wide export (timestamp column + one flow column per node)
    into the long schema this package ingests. Returns rows written."""
    with open(src, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        node_cols = len(header) - 1
        if node_cols < 1:
            raise ValidationError(f"{src}: wide file needs at least one node column")
        rows = list(reader)
    written = 0
    with open(dst, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "node_id", "flow"])
        for row in rows:
            stamp = row[0].strip()
            stamp = stamp.replace(" ", "T") if "T" not in stamp else stamp
            for node in range(node_cols):
                cell = row[node + 1].strip()
                writer.writerow([stamp, node, cell])
                written += 1
    return written
