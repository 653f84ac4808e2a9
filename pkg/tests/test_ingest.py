"""Tests for trip ingestion."""
import json
import logging

import pandas as pd
import pytest

from engine.ingest import ingest_trips, read_trips_csv, write_ingest
from engine.model import read_events_csv

COLS = ["start_time", "end_time", "start_station", "end_station"]


def _trips(rows):
    return pd.DataFrame(rows, columns=COLS)


@pytest.fixture
def trips():
    return _trips([
        ("2024-01-05 08:00:00", "2024-01-05 08:20:00", "A", "B"),
        ("2024-01-05 09:00:00", "2024-01-05 09:30:00", "B", "A"),
        ("2024-01-05 23:50:00", "2024-01-06 00:10:00", "A", "B"),
        ("2024-01-06 10:00:00", "2024-01-06 10:05:00", "A", "A"),
        ("not-a-time", "2024-01-06 10:05:00", "A", "B"),
        ("2024-01-06 10:00:00", "2024-01-06 09:00:00", "A", "B"),
    ])


def test_valid_trips_become_events(trips):
    res = ingest_trips(trips)
    assert len(res.stream) == 2
    assert res.stream.times.tolist() == [8.0, 9.0]
    assert res.stream.i.tolist() == [1, 1] and res.stream.j.tolist() == [2, 2]
    assert res.epoch == pd.Timestamp("2024-01-05")
    assert res.stream.horizon == 24.0


def test_rejects_are_reported_by_reason(trips):
    res = ingest_trips(trips)
    assert res.reject_counts == {"multi_day": 1, "round_trip": 1, "malformed": 1, "end_before_start": 1}
    assert sorted(res.rejects["line"].tolist()) == [4, 5, 6, 7]


def test_epoch_anchors_on_the_previous_friday():
    res = ingest_trips(_trips([("2024-01-09 08:00:00", "2024-01-09 08:20:00", "A", "B")]))
    assert res.epoch == pd.Timestamp("2024-01-05")
    assert res.stream.times[0] == pytest.approx(4 * 24 + 8)


def test_trip_at_the_epoch_is_rejected(caplog):
    with caplog.at_level(logging.WARNING, logger="engine.ingest"):
        res = ingest_trips(_trips([
            ("2024-01-05 00:00:00", "2024-01-05 00:10:00", "A", "B"),
            ("2024-01-05 07:00:00", "2024-01-05 07:10:00", "A", "B"),
        ]))
    assert res.reject_counts == {"at_epoch": 1}
    assert len(res.stream) == 1
    assert "start exactly at the epoch" in caplog.text


def test_only_epoch_trips_give_empty_stream():
    res = ingest_trips(_trips([("2024-01-05 00:00:00", "2024-01-05 00:10:00", "A", "B")]))
    assert len(res.stream) == 0
    assert res.epoch == pd.Timestamp("2024-01-05")
    assert res.stations.empty


def test_numeric_station_ids_sort_numerically():
    res = ingest_trips(_trips([("2024-01-05 08:00:00", "2024-01-05 08:20:00", "10", "9")]))
    assert res.stations["station_id"].tolist() == ["9", "10"]


def test_nothing_valid_gives_empty_stream():
    res = ingest_trips(_trips([("bad", "bad", "A", "B")]))
    assert len(res.stream) == 0 and res.epoch is None


def test_csv_columns_are_mapped(tmp_path):
    path = tmp_path / "raw.csv"
    pd.DataFrame({
        "started_at": ["2024-01-05 08:00:00"], "ended_at": ["2024-01-05 08:30:00"],
        "from": ["31001"], "to": ["31002"],
    }).to_csv(path, index=False)
    mapping = {"start_time": "started_at", "end_time": "ended_at", "start_station": "from", "end_station": "to"}
    frame = read_trips_csv(path, mapping)
    assert list(frame.columns) == COLS
    with pytest.raises(ValueError, match="missing"):
        read_trips_csv(path)


def test_outputs_written(tmp_path, trips):
    res = ingest_trips(trips)
    write_ingest(res, tmp_path / "events.csv", tmp_path / "stations.csv", tmp_path / "rejects.csv")
    meta = json.loads((tmp_path / "events.meta.json").read_text())
    assert meta["epoch"].startswith("2024-01-05")
    assert len(read_events_csv(tmp_path / "events.csv")) == 2
    assert len(pd.read_csv(tmp_path / "rejects.csv")) == 4
