"""Trip-record ingestion: bike-share trips CSV to an undirected EventStream."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from config import DEFAULT_ANCHOR_WEEKDAY, TRIP_COLUMNS, WEEKDAYS
from engine.model import EventStream, write_events_csv

logger = logging.getLogger(__name__)

REJECT_REASONS = ("malformed", "end_before_start", "multi_day", "round_trip", "at_epoch")


@dataclass(frozen=True)
class TripRecord:
    start_time: pd.Timestamp
    end_time: pd.Timestamp
    start_station: str
    end_station: str

    def __post_init__(self):
        if self.end_time < self.start_time:
            raise ValueError("end_time must not precede start_time")


@dataclass(frozen=True, eq=False)
class IngestResult:
    stream: EventStream
    stations: pd.DataFrame
    rejects: pd.DataFrame
    epoch: pd.Timestamp | None

    @property
    def reject_counts(self) -> dict:
        return self.rejects["reason"].value_counts().to_dict() if len(self.rejects) else {}


def records_frame(records) -> pd.DataFrame:
    """TripRecords as a raw trips frame with the default column names."""
    return pd.DataFrame(
        [(r.start_time, r.end_time, r.start_station, r.end_station) for r in records],
        columns=["start_time", "end_time", "start_station", "end_station"],
    )


def read_trips_csv(path, columns: dict | None = None) -> pd.DataFrame:
    """Read a trips CSV as strings and rename the configured columns to the canonical names."""
    columns = {**TRIP_COLUMNS, **(columns or {})}
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [src for src in columns.values() if src not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing trip columns {missing}")
    out = df[list(columns.values())].copy()
    out.columns = list(columns.keys())
    return out


def _epoch(first_start: pd.Timestamp, anchor_weekday: str) -> pd.Timestamp:
    """Midnight of the last anchor weekday on or before the first trip."""
    offset = (first_start.weekday() - WEEKDAYS.index(anchor_weekday)) % 7
    return first_start.normalize() - pd.Timedelta(days=offset)


def _station_order(ids: pd.Series) -> list:
    unique = pd.unique(ids)
    numeric = pd.to_numeric(pd.Series(unique), errors="coerce")
    if numeric.notna().all():
        return [u for _, u in sorted(zip(numeric.tolist(), unique.tolist()))]
    return sorted(unique.tolist())


def ingest_trips(trips, anchor_weekday: str = DEFAULT_ANCHOR_WEEKDAY) -> IngestResult:
    """Turn trip records into day-aggregated undirected events.

    Rejected (never fatal), first matching reason wins:
        malformed         unparsable timestamp or empty station id
        end_before_start  end_time < start_time
        multi_day         start and end on different calendar days
        round_trip        start station == end station
        at_epoch          start exactly at the dataset epoch (times live in (0, T])
    The epoch is midnight of the anchor weekday, so a trip starting at that
    instant is the only valid trip ever lost; it is logged at WARNING and kept
    in the rejects report so the loss is visible.
    Stations map to dense ids 1..n in sorted order; each event is stamped at
    its start time in hours since the epoch.
    """
    if not isinstance(trips, pd.DataFrame):
        trips = records_frame(trips)
    anchor_weekday = anchor_weekday.lower()
    df = trips[["start_time", "end_time", "start_station", "end_station"]].copy()
    df["line"] = np.arange(len(df)) + 2
    start = pd.to_datetime(df["start_time"], errors="coerce")
    end = pd.to_datetime(df["end_time"], errors="coerce")
    a = df["start_station"].astype(str).str.strip()
    b = df["end_station"].astype(str).str.strip()

    reason = pd.Series(None, index=df.index, dtype=object)
    bad_station = df["start_station"].isna() | df["end_station"].isna() | (a == "") | (b == "")

    def _mark(mask, label):
        reason[mask & reason.isna()] = label

    _mark(start.isna() | end.isna() | bad_station, "malformed")
    _mark(end < start, "end_before_start")
    _mark(start.dt.normalize() != end.dt.normalize(), "multi_day")
    _mark(a == b, "round_trip")

    ok = reason.isna()
    epoch = _epoch(start[ok].min(), anchor_weekday) if ok.any() else None
    if epoch is not None:
        hours = (start - epoch).dt.total_seconds() / 3600.0
        at_epoch = (hours <= 0.0) & reason.isna()
        _mark(at_epoch, "at_epoch")
        ok = reason.isna()
        if at_epoch.any():
            logger.warning("%d trip(s) start exactly at the epoch %s and are dropped; "
                           "they are listed as 'at_epoch' in the rejects report", int(at_epoch.sum()), epoch)

    rejects = df.loc[~ok].assign(reason=reason[~ok]).reset_index(drop=True)
    rejects = rejects[["line", "reason", "start_time", "end_time", "start_station", "end_station"]]
    if len(rejects):
        logger.info("rejected %d of %d trips: %s", len(rejects), len(df), rejects["reason"].value_counts().to_dict())

    if not ok.any():
        stations = pd.DataFrame({"node": pd.Series(dtype=np.int64), "station_id": pd.Series(dtype=str)})
        return IngestResult(EventStream.empty(1, 24.0), stations, rejects, epoch)

    kept_a, kept_b = a[ok], b[ok]
    order = _station_order(pd.concat([kept_a, kept_b], ignore_index=True))
    stations = pd.DataFrame({"node": np.arange(1, len(order) + 1, dtype=np.int64), "station_id": order})
    node_of = dict(zip(order, stations["node"].tolist()))

    times = hours[ok].to_numpy(dtype=float)
    last_day = math.floor(times.max() / 24.0)
    stream = EventStream(
        n_nodes=max(2, len(order)),
        horizon=24.0 * (last_day + 1),
        times=times,
        i=kept_a.map(node_of).to_numpy(np.int64),
        j=kept_b.map(node_of).to_numpy(np.int64),
    )
    logger.info("ingested %d events on %d stations from %s", len(stream), len(order), epoch.date())
    return IngestResult(stream, stations, rejects, epoch)


def write_ingest(result: IngestResult, events_path, stations_path, rejects_path) -> None:
    write_events_csv(result.stream, events_path,
                     epoch=None if result.epoch is None else result.epoch.isoformat())
    for frame, path in ((result.stations, stations_path), (result.rejects, rejects_path)):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
