"""Lot-trace ingestion and cycle-time / inter-event statistics.

Timestamps are held as integer microseconds since the Unix epoch, so sums
and differences of times are exact and the cycle-time identities hold
without floating slack.
"""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import (MissingColumnError, OrderingError, TimestampParseError, TraceError,
                     ZeroVarianceError)

REQUIRED_COLUMNS = ("lotid", "partid", "recpid", "eqpid", "eqptype", "stage", "location",
                    "prodarea", "queuetime", "trackintime", "trackouttime")
OPTIONAL_COLUMNS = ("lottype", "trackinmainqty", "curmainqty", "priority")
COLUMNS = REQUIRED_COLUMNS + OPTIONAL_COLUMNS

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
US_PER_SECOND = 1_000_000


def parse_timestamp(text: str) -> int:
    """ISO-8601 timestamp to integer microseconds since the epoch (naive means UTC)."""
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(s)
    except ValueError:
        raise TimestampParseError(f"cannot parse timestamp {text!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    delta = dt - _EPOCH
    return (delta.days * 86_400 + delta.seconds) * US_PER_SECOND + delta.microseconds


def format_timestamp(us: int) -> str:
    dt = _EPOCH + timedelta(microseconds=int(us))
    return dt.strftime("%Y-%m-%d %H:%M:%S.%f")


@dataclass(frozen=True)
class LotTraceRecord:
    lotid: str
    partid: str
    recpid: str
    eqpid: str
    eqptype: str
    stage: str
    location: str
    prodarea: str
    queuetime: int
    trackintime: int
    trackouttime: int
    lottype: str = ""
    trackinmainqty: int | None = None
    curmainqty: int | None = None
    priority: str = ""

    @property
    def layer(self) -> str:
        return self.stage[:2]

    @property
    def processing_time(self) -> int:
        return self.trackouttime - self.trackintime

    @property
    def waiting_time(self) -> int:
        return self.trackintime - self.queuetime

    @property
    def cycle_time(self) -> int:
        return self.trackouttime - self.queuetime

    def to_row(self) -> dict:
        row = {c: getattr(self, c) for c in COLUMNS}
        for c in ("queuetime", "trackintime", "trackouttime"):
            row[c] = format_timestamp(row[c])
        for c in ("trackinmainqty", "curmainqty"):
            row[c] = "" if row[c] is None else row[c]
        return row


def _quantity(value: str | None, line: int, name: str) -> int | None:
    if value is None or value.strip() == "":
        return None
    try:
        q = int(value)
    except ValueError:
        raise TraceError(f"line {line}: {name} is not an integer: {value!r}") from None
    if q < 0:
        raise TraceError(f"line {line}: {name} is negative")
    return q


def parse_trace(source) -> list[LotTraceRecord]:
    """Read a lot-trace CSV from a path or text stream.

    Raises :class:`OrderingError` listing every line where
    ``queuetime <= trackintime <= trackouttime`` fails.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return parse_trace(fh)
    reader = csv.DictReader(source)
    header = reader.fieldnames or []
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise MissingColumnError(f"missing columns: {', '.join(missing)}")
    records, bad = [], []
    for line, row in enumerate(reader, start=2):
        try:
            times = [parse_timestamp(row[c]) for c in ("queuetime", "trackintime", "trackouttime")]
        except TimestampParseError as exc:
            raise TimestampParseError(f"line {line}: {exc}") from None
        if not times[0] <= times[1] <= times[2]:
            bad.append(line)
            continue
        records.append(LotTraceRecord(
            *(row[c] for c in REQUIRED_COLUMNS[:8]), *times,
            lottype=row.get("lottype") or "",
            trackinmainqty=_quantity(row.get("trackinmainqty"), line, "trackinmainqty"),
            curmainqty=_quantity(row.get("curmainqty"), line, "curmainqty"),
            priority=row.get("priority") or ""))
    if bad:
        raise OrderingError(f"timestamps out of order on lines {bad}", rows=bad)
    return records


def write_trace(records, target) -> None:
    if isinstance(target, (str, Path)):
        with open(target, "w", newline="", encoding="utf-8") as fh:
            write_trace(records, fh)
        return
    writer = csv.DictWriter(target, fieldnames=list(COLUMNS), lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow(r.to_row())


def group_by_lot(records) -> dict[str, list[LotTraceRecord]]:
    lots = defaultdict(list)
    for r in records:
        lots[r.lotid].append(r)
    return {k: sorted(v, key=lambda r: (r.queuetime, r.trackintime)) for k, v in lots.items()}


# ---------------------------------------------------------------------------
# per-lot times
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LotTimes:
    tct: int
    tpt: int
    twt: int
    ct: tuple[int, ...]
    pt: tuple[int, ...]
    wt: tuple[int, ...]
    transport: int

    @property
    def contiguous(self) -> bool:
        return self.transport == 0


def lot_times(records) -> LotTimes:
    """Total cycle, processing and waiting times of one lot.

    Gaps between a track-out and the next queue entry are summed as
    transport time, so ``tct = tpt + twt + transport`` always holds.
    """
    steps = sorted(records, key=lambda r: (r.queuetime, r.trackintime))
    if not steps:
        raise TraceError("a lot needs at least one step")
    if len({r.lotid for r in steps}) > 1:
        raise TraceError("records belong to more than one lot")
    transport, overlaps = 0, []
    for i, (a, b) in enumerate(zip(steps, steps[1:]), start=1):
        gap = b.queuetime - a.trackouttime
        if gap < 0:
            overlaps.append(i)
        transport += gap
    if overlaps:
        raise OrderingError(f"step(s) {overlaps} start before the previous step ends",
                            rows=overlaps)
    ct = tuple(r.cycle_time for r in steps)
    pt = tuple(r.processing_time for r in steps)
    wt = tuple(r.waiting_time for r in steps)
    return LotTimes(tct=steps[-1].trackouttime - steps[0].queuetime, tpt=sum(pt), twt=sum(wt),
                    ct=ct, pt=pt, wt=wt, transport=transport)


def layer_times(records) -> dict[str, tuple[int, int]]:
    """``{layer: (processing, waiting)}`` in order of first appearance."""
    out: dict[str, list[int]] = {}
    for r in sorted(records, key=lambda r: (r.queuetime, r.trackintime)):
        acc = out.setdefault(r.layer, [0, 0])
        acc[0] += r.processing_time
        acc[1] += r.waiting_time
    return {k: (v[0], v[1]) for k, v in out.items()}


# ---------------------------------------------------------------------------
# per-machine series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MachineSeries:
    interarrival: np.ndarray
    interdeparture: np.ndarray
    processing: np.ndarray


def machine_series(records, eqpid: str) -> MachineSeries:
    """Inter-arrival, inter-departure and processing times of one machine (microseconds)."""
    rows = [r for r in records if r.eqpid == eqpid]
    if len(rows) < 2:
        raise TraceError(f"machine {eqpid!r} has {len(rows)} record(s); need at least 2")
    arrivals = sorted((r.queuetime, r.lotid) for r in rows)
    departures = sorted((r.trackouttime, r.lotid) for r in rows)
    starts = sorted(rows, key=lambda r: (r.trackintime, r.lotid))
    return MachineSeries(
        interarrival=np.diff(np.array([t for t, _ in arrivals], dtype=np.int64)),
        interdeparture=np.diff(np.array([t for t, _ in departures], dtype=np.int64)),
        processing=np.array([r.processing_time for r in starts], dtype=np.int64))


@dataclass(frozen=True)
class SeriesStats:
    n: int
    mean: float
    cv: float
    rho: tuple[float, ...]


def series_stats(x, max_lag: int = 1) -> SeriesStats:
    """Sample mean, coefficient of variation and lag-1..max_lag autocorrelations."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if max_lag < 1:
        raise ValueError(f"max_lag must be at least 1, got {max_lag}")
    if n < max_lag + 2:
        raise TraceError(f"need at least {max_lag + 2} observations, got {n}")
    mean = float(x.mean())
    dev = x - mean
    ss = float(dev @ dev)
    if ss == 0.0:
        raise ZeroVarianceError("series has zero sample variance")
    if mean == 0.0:
        raise TraceError("series has zero mean; cv is undefined")
    cv = float(np.sqrt(ss / (n - 1)) / mean)
    rho = tuple(float(dev[:-k] @ dev[k:]) / ss for k in range(1, max_lag + 1))
    return SeriesStats(n=n, mean=mean, cv=cv, rho=rho)


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

def lot_summary_rows(records) -> list[dict]:
    rows = []
    for lotid, steps in group_by_lot(records).items():
        t = lot_times(steps)
        layers = layer_times(steps)
        rows.append({"lotid": lotid, "steps": len(steps), "tct_s": t.tct / US_PER_SECOND,
                     "tpt_s": t.tpt / US_PER_SECOND, "twt_s": t.twt / US_PER_SECOND,
                     "transport_s": t.transport / US_PER_SECOND,
                     "layers": ";".join(f"{k}:{p / US_PER_SECOND:g}/{w / US_PER_SECOND:g}"
                                        for k, (p, w) in layers.items())})
    return rows


def machine_summary_rows(records) -> list[dict]:
    rows = []
    for eqpid in sorted({r.eqpid for r in records}):
        n = sum(1 for r in records if r.eqpid == eqpid)
        row = {"eqpid": eqpid, "n": n}
        try:
            ser = machine_series(records, eqpid)
        except TraceError:
            ser = None
        for key, attr in (("ia", "interarrival"), ("id", "interdeparture"), ("pt", "processing")):
            try:
                st = series_stats(getattr(ser, attr) / US_PER_SECOND)
                row.update({f"{key}_mean_s": st.mean, f"{key}_cv": st.cv, f"{key}_rho1": st.rho[0]})
            except (TraceError, AttributeError):
                row.update({f"{key}_mean_s": "", f"{key}_cv": "", f"{key}_rho1": ""})
        rows.append(row)
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# synthetic logs
# ---------------------------------------------------------------------------

def synthetic_lot(n_steps: int, n_layers: int = 3, seed: int = 0, lotid: str = "L0001",
                  start: int = 1_500_000_000 * US_PER_SECOND) -> list[LotTraceRecord]:
    """One lot visiting ``n_steps`` contiguous steps spread over ``n_layers`` layers."""
    rng = np.random.default_rng(seed)
    wait = rng.integers(0, 3_600 * US_PER_SECOND, n_steps)
    proc = rng.integers(1, 7_200 * US_PER_SECOND, n_steps)
    layer_of = np.sort(rng.integers(0, n_layers, n_steps))
    records, t = [], start
    for i in range(n_steps):
        q, ti = t, t + int(wait[i])
        to = ti + int(proc[i])
        layer = f"{chr(65 + layer_of[i] // 26)}{chr(65 + layer_of[i] % 26)}"
        records.append(LotTraceRecord(
            lotid=lotid, partid="P100.01", recpid=f"R{i % 97:03d}", eqpid=f"EQ{i % 13:02d}",
            eqptype=f"T{i % 5}", stage=f"{layer}-S{i:05d}-OP", location="FAB",
            prodarea="WF", queuetime=q, trackintime=ti, trackouttime=to,
            lottype="PROD", trackinmainqty=25, curmainqty=25))
        t = to
    return records


def single_machine_log(interarrival, processing, eqpid: str = "EQ01",
                       start: int = 1_500_000_000 * US_PER_SECOND,
                       time_unit_us: int = 3_600 * US_PER_SECOND) -> list[LotTraceRecord]:
    """FIFO single-machine log from inter-arrival and processing times (in ``time_unit_us``)."""
    ia = np.round(np.asarray(interarrival, dtype=float) * time_unit_us).astype(np.int64)
    pt = np.round(np.asarray(processing, dtype=float) * time_unit_us).astype(np.int64)
    if ia.size != pt.size:
        raise ValueError("interarrival and processing must have equal length")
    arrivals = start + np.cumsum(ia)
    records, free_at = [], start
    for i, (a, p) in enumerate(zip(arrivals.tolist(), pt.tolist())):
        ti = max(a, free_at)
        free_at = ti + p
        records.append(LotTraceRecord(
            lotid=f"L{i:07d}", partid="P100.01", recpid="R001", eqpid=eqpid, eqptype="T1",
            stage="AA-S00001-OP", location="FAB", prodarea="WF", queuetime=a,
            trackintime=ti, trackouttime=free_at, lottype="PROD"))
    return records
