"""
Synthetic bike-share trip generator for netcox.
Run this script once to produce data/trips.csv.

Usage:
    python generate_data.py [--stations 25] [--weeks 16] [--seed 42]

Output:
    data/trips.csv — one row per rental: start_time, end_time, start_station, end_station
                     (a few malformed, multi-day and round-trip rows are mixed in so the
                     ingest rejects report has something to show)
"""
import os

import click
import numpy as np
import pandas as pd

# First day is a Friday, which is the default week anchor
START_DATE = "2024-01-05"

# Relative rental volume per weekday, Monday first
DOW_FACTORS = [1.10, 1.05, 1.00, 1.05, 1.15, 0.80, 0.70]

# Share of rows corrupted on purpose
JUNK_SHARE = 0.01


# ── Station layout ──────────────────────────────────────────────────────────────

def build_stations(n_stations: int, rng: np.random.Generator) -> pd.DataFrame:
    """Stations on a unit square with lognormal popularity; ids look like 31000, 31001, …"""
    return pd.DataFrame({
        "station_id": 31000 + np.arange(n_stations),
        "x":          rng.random(n_stations),
        "y":          rng.random(n_stations),
        "popularity": rng.lognormal(0.0, 0.6, n_stations),
    })


def pair_rates(stations: pd.DataFrame, base_rate: float) -> np.ndarray:
    """Daily expected trips per unordered pair: base · pop_i · pop_j · exp(−4·distance)."""
    xy   = stations[["x", "y"]].to_numpy()
    pop  = stations["popularity"].to_numpy()
    dist = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=-1))
    rate = base_rate * np.outer(pop, pop) * np.exp(-4.0 * dist)
    np.fill_diagonal(rate, 0.0)
    return np.triu(rate, k=1)


# ── Trip generation ─────────────────────────────────────────────────────────────

def build_trips(n_stations: int = 25, weeks: int = 16, seed: int = 42,
                base_rate: float = 0.15, growth: float = 0.01) -> pd.DataFrame:
    rng      = np.random.default_rng(seed)
    stations = build_stations(n_stations, rng)
    rate     = pair_rates(stations, base_rate)
    ids      = stations["station_id"].to_numpy()
    ii, jj   = np.nonzero(rate)

    rows = []
    for d in pd.date_range(START_DATE, periods=weeks * 7, freq="D"):
        factor = DOW_FACTORS[d.dayofweek] * (1 + growth) ** ((d - pd.Timestamp(START_DATE)).days / 7)
        counts = rng.poisson(rate[ii, jj] * factor)
        for a, b, n in zip(ii[counts > 0], jj[counts > 0], counts[counts > 0]):
            # start between 06:00 and 22:00, rides of 4–40 minutes, direction at random
            start = d + pd.to_timedelta(rng.uniform(6, 22, n), unit="h")
            end   = start + pd.to_timedelta(rng.uniform(4, 40, n), unit="min")
            flip  = rng.random(n) < 0.5
            for s, e, f in zip(start, end, flip):
                src, dst = (ids[b], ids[a]) if f else (ids[a], ids[b])
                rows.append((s, e, src, dst))

    trips = pd.DataFrame(rows, columns=["start_time", "end_time", "start_station", "end_station"])
    trips = trips.sort_values("start_time", kind="mergesort").reset_index(drop=True)
    return add_junk(trips, rng)


def add_junk(trips: pd.DataFrame, rng: np.random.Generator) -> pd.DataFrame:
    """Overwrite a few rows with round trips, overnight rentals and unparsable stamps."""
    if trips.empty:
        return trips
    trips = trips.copy()
    trips["start_time"] = trips["start_time"].dt.strftime("%Y-%m-%d %H:%M:%S")
    trips["end_time"]   = trips["end_time"].dt.strftime("%Y-%m-%d %H:%M:%S")
    n_junk = int(len(trips) * JUNK_SHARE)
    if n_junk == 0:
        return trips
    idx = rng.choice(len(trips), size=n_junk, replace=False)
    for k, row in enumerate(idx):
        kind = k % 3
        if kind == 0:
            trips.at[row, "end_station"] = trips.at[row, "start_station"]
        elif kind == 1:
            start = pd.Timestamp(trips.at[row, "start_time"]).normalize()
            trips.at[row, "start_time"] = (start + pd.Timedelta(hours=23, minutes=50)).strftime("%Y-%m-%d %H:%M:%S")
            trips.at[row, "end_time"]   = (start + pd.Timedelta(days=1, minutes=10)).strftime("%Y-%m-%d %H:%M:%S")
        else:
            trips.at[row, "start_time"] = "not-a-time"
    return trips


# ── Main ────────────────────────────────────────────────────────────────────────

@click.command()
@click.option("--stations", type=int, default=25, show_default=True)
@click.option("--weeks",    type=int, default=16, show_default=True)
@click.option("--seed",     type=int, default=42, show_default=True)
def main(stations, weeks, seed):
    os.makedirs("data", exist_ok=True)

    click.echo("Generating trips…")
    trips = build_trips(stations, weeks, seed)
    trips.to_csv("data/trips.csv", index=False)
    click.echo(f"  → data/trips.csv  ({len(trips):,} rows, {stations} stations, {weeks} weeks)")


if __name__ == "__main__":
    main()
