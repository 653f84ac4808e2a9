"""Weekly covariate panels from daily counts, and link trajectories as addition/deletion streams.

Calendar conventions:
    day  = floor(t / 24)            (t in hours since the anchor-day midnight)
    week = day // 7,  d = day % 7 + 1   (d = 1 is the anchor day, Friday by default)
The response of week k is the anchor-day count; covariates of week k only
use weeks < k.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from config import DEFAULT_ANCHOR_WEEKDAY, FEATURE_COLUMNS, WEEKDAYS
from engine.errors import InsufficientHistoryError
from engine.model import CovariatePath, EventStream, Panel

logger = logging.getLogger(__name__)

HOURS_PER_DAY = 24.0


@dataclass(frozen=True)
class FeatureSpec:
    r: float = 0.8
    weekday_window: tuple = (4, 5, 6, 7)
    lookback_weeks: int = 4
    anchor_weekday: str = DEFAULT_ANCHOR_WEEKDAY
    columns: tuple = FEATURE_COLUMNS

    def __post_init__(self):
        if not 0.0 < self.r < 1.0:
            raise ValueError("decay r must lie in (0, 1)")
        if int(self.lookback_weeks) < 1:
            raise ValueError("lookback_weeks must be >= 1")
        window = tuple(int(d) for d in self.weekday_window)
        if not window or any(d < 1 or d > 7 for d in window) or len(set(window)) != len(window):
            raise ValueError("weekday_window must be distinct day indices in 1..7")
        object.__setattr__(self, "weekday_window", window)
        if self.anchor_weekday.lower() not in WEEKDAYS:
            raise ValueError(f"Unknown anchor weekday: {self.anchor_weekday!r}")
        object.__setattr__(self, "anchor_weekday", self.anchor_weekday.lower())
        cols = tuple(self.columns)
        unknown = set(cols) - set(FEATURE_COLUMNS)
        if unknown or not cols:
            raise ValueError(f"Unknown feature columns: {sorted(unknown)}")
        # canonical order, whatever order the config lists them in
        object.__setattr__(self, "columns", tuple(c for c in FEATURE_COLUMNS if c in cols))

    @property
    def first_usable_week(self) -> int:
        return max(int(self.lookback_weeks), 2)


def weekday_activity(delta, r: float = 0.8, days=(4, 5, 6, 7)) -> np.ndarray | float:
    """Decayed weekday activity.

    Formula:
        A = (1 − r) Σ_{d in days} r^(7 − d) Δ_d

    `delta` has the day counts on its last axis, one per entry of `days`.
    """
    if not 0.0 < r < 1.0:
        raise ValueError("decay r must lie in (0, 1)")
    delta = np.asarray(delta, dtype=float)
    if delta.shape[-1] != len(days):
        raise ValueError(f"expected {len(days)} day counts, got {delta.shape[-1]}")
    w = (1.0 - r) * r ** (7.0 - np.asarray(days, dtype=float))
    out = delta @ w
    return float(out) if np.ndim(out) == 0 else out


def daily_counts(stream: EventStream) -> pd.DataFrame:
    """Per-pair calendar-day counts: day, week, weekday (1..7), i, j, count.

    `attrs["n_days"]` covers the whole horizon.
    """
    day = np.floor(stream.times / HOURS_PER_DAY).astype(np.int64)
    df = pd.DataFrame({"day": day, "i": stream.i, "j": stream.j})
    out = df.groupby(["day", "i", "j"], sort=True).size().rename("count").reset_index()
    out["week"] = out["day"] // 7
    out["weekday"] = out["day"] % 7 + 1
    out = out[["day", "week", "weekday", "i", "j", "count"]]
    out.attrs["n_days"] = int(math.ceil(stream.horizon / HOURS_PER_DAY))
    return out


def build_weekly_panel(daily: pd.DataFrame, n_nodes: int, spec: FeatureSpec | None = None,
                       n_days: int | None = None) -> Panel:
    """Weekly panel: cell = week k, count = anchor-day tours of week k.

    Covariates of week k (G(k−1) links pairs with an anchor-day tour in week k−1):
        intercept          1
        activity           A_{ij,k−1}
        common_neighbors   |N(i) ∩ N(j)| in G(k−1)
        max_degree         max(deg_i, deg_j) in G(k−1)
        friday_avg         T = (F_{k−1} + F_{k−2}) / 2
        friday_inactive    1(T = 0)
    Censor C(k) = 1 iff the pair had a tour on any day of weeks k−lookback..k−1;
    only uncensored rows are stored.
    """
    spec = spec or FeatureSpec()
    if n_days is None:
        n_days = daily.attrs.get("n_days", int(daily["day"].max()) + 1 if len(daily) else 0)
    n_weeks = int(math.ceil(n_days / 7))
    first = spec.first_usable_week
    if n_weeks < spec.lookback_weeks + 2:
        raise InsufficientHistoryError(
            f"{n_weeks} weeks of data; at least {spec.lookback_weeks + 2} are needed "
            f"(first usable week is {first})", first_usable=first)

    pairs = daily[["i", "j"]].drop_duplicates().sort_values(["i", "j"]).reset_index(drop=True)
    pi, pj = pairs["i"].to_numpy(np.int64), pairs["j"].to_numpy(np.int64)
    if np.any(pi >= pj):
        raise ValueError("build_weekly_panel expects undirected pairs with i < j")
    pid = pd.Series(np.arange(len(pairs)), index=pd.MultiIndex.from_arrays([pi, pj]))
    idx = pid.reindex(pd.MultiIndex.from_arrays([daily["i"], daily["j"]])).to_numpy()

    cube = np.zeros((n_weeks, 7, len(pairs)))
    np.add.at(cube, (daily["week"].to_numpy(), daily["weekday"].to_numpy() - 1, idx),
              daily["count"].to_numpy(dtype=float))
    anchor = cube[:, 0, :]
    window = np.asarray(spec.weekday_window) - 1
    activity = weekday_activity(np.moveaxis(cube[:, window, :], 1, -1), spec.r, spec.weekday_window)
    toured = cube.sum(axis=1) > 0

    frames = []
    for k in range(first, n_weeks):
        sel = np.flatnonzero(toured[k - spec.lookback_weeks:k].any(axis=0))
        if sel.size == 0:
            continue
        adj = np.zeros((n_nodes + 1, n_nodes + 1))
        linked = anchor[k - 1] > 0
        adj[pi[linked], pj[linked]] = adj[pj[linked], pi[linked]] = 1.0
        deg = adj.sum(axis=1)
        avg = 0.5 * (anchor[k - 1, sel] + anchor[k - 2, sel])
        feats = {
            "intercept": np.ones(sel.size),
            "activity": activity[k - 1, sel],
            "common_neighbors": np.einsum("pk,pk->p", adj[pi[sel]], adj[pj[sel]]),
            "max_degree": np.maximum(deg[pi[sel]], deg[pj[sel]]),
            "friday_avg": avg,
            "friday_inactive": (avg == 0).astype(float),
        }
        frame = pd.DataFrame({"cell": k, "i": pi[sel], "j": pj[sel],
                              "count": anchor[k, sel].astype(np.int64), "censor": 1})
        for m, name in enumerate(spec.columns):
            frame[f"x_{m + 1}"] = feats[name]
        frames.append(frame)

    logger.info("weekly panel: %d weeks, %d pairs, first usable week %d", n_weeks, len(pairs), first)
    columns = ["cell", "i", "j", "count", "censor"] + [f"x_{m + 1}" for m in range(len(spec.columns))]
    records = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
    cell_times = np.arange(n_weeks) * 7 * HOURS_PER_DAY + 0.5 * HOURS_PER_DAY
    return Panel(n_nodes, n_weeks, records, spec.columns, cell_times=cell_times)


def stream_weekly_panel(stream: EventStream, spec: FeatureSpec | None = None) -> Panel:
    if stream.directed:
        raise ValueError("weekly features are defined on undirected streams")
    daily = daily_counts(stream)
    return build_weekly_panel(daily, stream.n_nodes, spec, daily.attrs["n_days"])


# ── Link trajectories ───────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class LinkEvents:
    """Up-crossings, down-crossings and the eligibility pieces (start, end].

    On each piece C⁺ = 1 − Z(t−) and C⁻ = Z(t−).
    """
    additions: EventStream
    deletions: EventStream
    eligibility: pd.DataFrame

    def path(self, kind: str) -> CovariatePath:
        """Intercept-only covariate path whose censor flag is C⁺ ("add") or C⁻ ("delete")."""
        col = {"add": "c_plus", "delete": "c_minus"}.get(kind)
        if col is None:
            raise ValueError("kind must be 'add' or 'delete'")
        e = self.eligibility
        pieces = pd.DataFrame({"i": e["i"], "j": e["j"], "start": e["start"], "end": e["end"],
                               "censor": e[col], "x_1": 1.0})
        return CovariatePath(pieces, ("intercept",), self.additions.directed)


def _trajectory_frame(trajectory: pd.DataFrame, directed: bool) -> pd.DataFrame:
    traj = trajectory[["i", "j", "time", "z"]].copy()
    if not traj["z"].isin([0, 1]).all():
        bad = traj.loc[~traj["z"].isin([0, 1]), "z"].iloc[0]
        raise ValueError(f"link state must jump between 0 and 1; got z={bad}")
    if not directed:
        lo = np.minimum(traj["i"], traj["j"])
        traj["j"] = np.maximum(traj["i"], traj["j"])
        traj["i"] = lo
    traj = traj.astype({"i": np.int64, "j": np.int64, "time": float, "z": np.int64})
    return traj.sort_values(["i", "j", "time"], kind="mergesort").reset_index(drop=True)


def split_link_events(trajectory: pd.DataFrame, n_nodes: int, horizon: float,
                      directed: bool = False) -> LinkEvents:
    """Split link-presence paths into addition and deletion event streams.

    `trajectory` rows (i, j, time, z) set Z_ij = z from `time` on; rows at
    time 0 give the initial state, which is 0 otherwise.
    """
    traj = _trajectory_frame(trajectory, directed)
    if len(traj) and (traj["time"].min() < 0 or traj["time"].max() > horizon):
        raise ValueError(f"trajectory times must lie in [0, {horizon}]")

    add_t, add_i, add_j, del_t, del_i, del_j, pieces = [], [], [], [], [], [], []
    for (a, b), g in traj.groupby(["i", "j"], sort=True):
        state, start = 0, 0.0
        for t, z in zip(g["time"].tolist(), g["z"].tolist()):
            if t == 0.0:
                state = z
                continue
            if z == state:
                continue
            if t > start:
                pieces.append((a, b, start, t, 1 - state, state))
            if z == 1:
                add_t.append(t); add_i.append(a); add_j.append(b)
            else:
                del_t.append(t); del_i.append(a); del_j.append(b)
            state, start = z, t
        if horizon > start:
            pieces.append((a, b, start, float(horizon), 1 - state, state))

    additions = EventStream(n_nodes, horizon, np.array(add_t), np.array(add_i, dtype=np.int64),
                            np.array(add_j, dtype=np.int64), directed)
    deletions = EventStream(n_nodes, horizon, np.array(del_t), np.array(del_i, dtype=np.int64),
                            np.array(del_j, dtype=np.int64), directed)
    eligibility = pd.DataFrame(pieces, columns=["i", "j", "start", "end", "c_plus", "c_minus"])
    return LinkEvents(additions, deletions, eligibility)


def link_state_at(trajectory: pd.DataFrame, i: int, j: int, t: float, directed: bool = False) -> int:
    """Z_ij(t) by replaying the trajectory (right-continuous)."""
    traj = _trajectory_frame(trajectory, directed)
    if not directed:
        i, j = min(i, j), max(i, j)
    g = traj[(traj["i"] == i) & (traj["j"] == j) & (traj["time"] <= t)]
    return int(g["z"].iloc[-1]) if len(g) else 0
