"""File ingestion and serialization: event catalogs and aggregated count tables.

Catalog files are delimiter-separated text with a header row.  The time column
holds either float values (days) or ISO-8601 timestamps; magnitudes, lat/lon,
and depth are optional.  Count tables hold per-period totals (incremental or
cumulative) that get disaggregated into uniformly placed event times, which is
the standard preprocessing for epidemic case counts reported per window.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .core import EventCatalog

__all__ = [
    "CatalogParseError",
    "CatalogFileSpec",
    "CumulativeCountSpec",
    "read_catalog",
    "write_catalog",
    "disaggregate_counts",
]


class CatalogParseError(ValueError):
    """A data file could not be parsed; carries the 1-based line number."""

    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


def _parse_time(raw: str, lineno: int):
    """Float days, or an ISO-8601 timestamp converted downstream."""
    raw = raw.strip()
    try:
        return float(raw)
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError:
        raise CatalogParseError(lineno, f"unparseable time {raw!r}") from None


def _to_days(value, origin) -> float:
    if isinstance(value, datetime):
        if isinstance(origin, datetime):
            if value.tzinfo is None:
                value = value.replace(tzinfo=timezone.utc)
            if origin.tzinfo is None:
                origin = origin.replace(tzinfo=timezone.utc)
            return (value - origin).total_seconds() / 86400.0
        raise ValueError("mixed datetime and float times in one file")
    if isinstance(origin, datetime):
        raise ValueError("mixed datetime and float times in one file")
    return float(value) - float(origin)


@dataclass(frozen=True)
class CatalogFileSpec:
    """Column names, filters, and the deduplication seed for catalog files.

    Filters are applied before the time-origin shift.  ``time_range`` entries
    may be floats or ISO-8601 strings matching the file's time column; when
    given they also define the observation window.
    """

    delimiter: str = ","
    time_col: str = "time"
    mag_col: str = "magnitude"
    lat_col: str = "lat"
    lon_col: str = "lon"
    depth_col: str = "depth"
    min_magnitude: float | None = None
    max_depth: float | None = None
    lat_range: tuple[float, float] | None = None
    lon_range: tuple[float, float] | None = None
    time_range: tuple | None = None
    jitter_seed: int = 0


def _jitter_duplicates(times: np.ndarray, seed: int) -> np.ndarray:
    """Break exact timestamp ties with seeded sub-resolution jitter.

    Each member of a tied group gets a uniform offset in (0, gap/2) where gap
    is the smallest nonzero spacing in the catalog, then times are re-sorted.
    Strict ordering is required by the triggering-matrix construction; real
    catalogs quantize timestamps, so this departure is unavoidable.
    """
    diffs = np.diff(times)
    if times.size < 2 or np.all(diffs > 0):
        return times
    positive = diffs[diffs > 0]
    scale = 0.5 * float(positive.min()) if positive.size else 1e-9
    rng = np.random.default_rng(seed)
    tied = np.zeros(times.size, dtype=bool)
    tied[1:] |= diffs == 0
    tied[:-1] |= diffs == 0
    out = times.copy()
    out[tied] += rng.uniform(0.0, scale, size=int(tied.sum()))
    out.sort()
    if np.any(np.diff(out) <= 0):
        raise ValueError("could not break timestamp ties")
    return out


def read_catalog(path, spec: CatalogFileSpec | None = None) -> EventCatalog:
    """Parse, filter, deduplicate, and time-shift a catalog file.

    The returned catalog starts at time 0 (origin = start of the configured
    time range, else the first retained event).
    """
    spec = spec or CatalogFileSpec()
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter=spec.delimiter)
        if reader.fieldnames is None:
            raise CatalogParseError(1, "missing header row")
        fields = [name.strip() for name in reader.fieldnames]
        if spec.time_col not in fields:
            raise CatalogParseError(1, f"no column named {spec.time_col!r}")
        has_mag = spec.mag_col in fields
        has_coords = spec.lat_col in fields and spec.lon_col in fields
        has_depth = spec.depth_col in fields
        for lineno, row in enumerate(reader, start=2):
            row = {(k or "").strip(): (v or "").strip() for k, v in row.items()}
            t = _parse_time(row[spec.time_col], lineno)
            try:
                mag = float(row[spec.mag_col]) if has_mag and row[spec.mag_col] else None
                lat = float(row[spec.lat_col]) if has_coords and row[spec.lat_col] else None
                lon = float(row[spec.lon_col]) if has_coords and row[spec.lon_col] else None
                depth = float(row[spec.depth_col]) if has_depth and row[spec.depth_col] else None
            except ValueError as exc:
                raise CatalogParseError(lineno, str(exc)) from None
            rows.append((t, mag, lat, lon, depth))

    time_range = spec.time_range
    if time_range is not None:
        time_range = tuple(
            _parse_time(v, 0) if isinstance(v, str) else v for v in time_range
        )

    def keep(row) -> bool:
        t, mag, lat, lon, depth = row
        if spec.min_magnitude is not None and (mag is None or mag < spec.min_magnitude):
            return False
        if spec.max_depth is not None and depth is not None and depth > spec.max_depth:
            return False
        if spec.lat_range is not None and (lat is None or not spec.lat_range[0] <= lat <= spec.lat_range[1]):
            return False
        if spec.lon_range is not None and (lon is None or not spec.lon_range[0] <= lon <= spec.lon_range[1]):
            return False
        if time_range is not None and not (time_range[0] <= t <= time_range[1]):
            return False
        return True

    rows = [r for r in rows if keep(r)]
    if not rows:
        warnings.warn("no events remain after filtering", UserWarning, stacklevel=2)
        end = 0.0 if time_range is None else _to_days(time_range[1], time_range[0])
        return EventCatalog(np.empty(0), window_end=end)

    rows.sort(key=lambda r: r[0] if not isinstance(r[0], datetime) else r[0].timestamp())
    origin = time_range[0] if time_range is not None else rows[0][0]
    times = np.array([_to_days(r[0], origin) for r in rows])
    times = _jitter_duplicates(times, spec.jitter_seed)
    window_end = (
        _to_days(time_range[1], origin) if time_range is not None else float(times[-1])
    )

    mags = np.array([r[1] for r in rows], dtype=float) if all(r[1] is not None for r in rows) else None
    coords = (
        np.array([[r[2], r[3]] for r in rows], dtype=float)
        if all(r[2] is not None and r[3] is not None for r in rows)
        else None
    )
    return EventCatalog(times, window_end=window_end, marks=mags, coords=coords)


def write_catalog(catalog: EventCatalog, path) -> None:
    """Serialize a catalog to CSV at full float precision (round-trip safe)."""
    header = ["time"]
    if catalog.marks is not None:
        header.append("magnitude")
    if catalog.coords is not None:
        header.extend(["lat", "lon"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(catalog.n):
            row = [repr(float(catalog.times[i]))]
            if catalog.marks is not None:
                row.append(repr(float(catalog.marks[i])))
            if catalog.coords is not None:
                row.extend([repr(float(catalog.coords[i, 0])), repr(float(catalog.coords[i, 1]))])
            writer.writerow(row)


@dataclass(frozen=True)
class CumulativeCountSpec:
    """Column names and mode for per-period count tables.

    ``mode="incremental"`` reads each row's count as the cases in that period;
    ``mode="cumulative"`` reads running totals and differences them.
    """

    delimiter: str = ","
    start_col: str = "start"
    end_col: str = "end"
    count_col: str = "count"
    mode: str = "incremental"

    def __post_init__(self):
        if self.mode not in ("incremental", "cumulative"):
            raise ValueError("mode must be 'incremental' or 'cumulative'")


def disaggregate_counts(path, spec: CumulativeCountSpec | None = None, rng_seed=0) -> EventCatalog:
    """Turn per-period case counts into uniformly placed event times.

    Each period with c cases yields c iid Uniform(start, end) times; totals are
    preserved exactly.  Periods must not overlap.
    """
    spec = spec or CumulativeCountSpec()
    periods = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter=spec.delimiter)
        if reader.fieldnames is None:
            raise CatalogParseError(1, "missing header row")
        for lineno, row in enumerate(reader, start=2):
            try:
                start = _parse_time(row[spec.start_col], lineno)
                end = _parse_time(row[spec.end_col], lineno)
                count = int(float(row[spec.count_col]))
            except (KeyError, ValueError) as exc:
                raise CatalogParseError(lineno, str(exc)) from None
            periods.append((start, end, count, lineno))

    if not periods:
        return EventCatalog(np.empty(0), window_end=0.0)
    # Convert to float days relative to the earliest period start.
    starts_raw = [p[0] for p in periods]
    origin = min(
        starts_raw,
        key=lambda v: v.timestamp() if isinstance(v, datetime) else float(v),
    )
    spans = []
    for start, end, count, lineno in periods:
        s = _to_days(start, origin)
        e = _to_days(end, origin)
        if not e > s:
            raise CatalogParseError(lineno, "period end must exceed period start")
        if count < 0:
            raise CatalogParseError(lineno, "negative count")
        spans.append((s, e, count, lineno))
    spans.sort(key=lambda p: p[0])
    for prev, cur in zip(spans, spans[1:]):
        if cur[0] < prev[1] - 1e-12:
            raise CatalogParseError(cur[3], "overlapping periods")

    counts = np.array([p[2] for p in spans], dtype=int)
    if spec.mode == "cumulative":
        increments = np.diff(counts, prepend=0)
        if np.any(increments < 0):
            bad = int(np.nonzero(increments < 0)[0][0])
            raise CatalogParseError(spans[bad][3], "cumulative counts must be nondecreasing")
        counts = increments

    rng = np.random.default_rng(rng_seed)
    chunks = [
        np.sort(rng.uniform(s, e, size=int(c)))
        for (s, e, _, _), c in zip(spans, counts)
        if c > 0
    ]
    times = np.concatenate(chunks) if chunks else np.empty(0)
    # Uniform draws collide with probability zero; nudge any rounding ties.
    for i in np.nonzero(np.diff(times) <= 0)[0]:
        times[i + 1] = np.nextafter(times[i], np.inf)
    return EventCatalog(times, window_end=float(spans[-1][1]))
