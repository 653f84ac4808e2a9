"""Core domain types: event streams, panels, model specs, parameter curves, fit results."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from config import DEFAULT_THETA_BOX
from engine.kernels import Kernel

_EVENT_COLUMNS = ["time_hours", "i", "j"]


def x_columns(q: int) -> list[str]:
    return [f"x_{m + 1}" for m in range(q)]


def _canonical_pairs(i: np.ndarray, j: np.ndarray, directed: bool):
    if directed:
        return i, j
    return np.minimum(i, j), np.maximum(i, j)


def _check_nodes(i: np.ndarray, j: np.ndarray, n_nodes: int, what: str) -> None:
    if i.size == 0:
        return
    if i.min() < 1 or j.min() < 1 or i.max() > n_nodes or j.max() > n_nodes:
        raise ValueError(f"{what}: node ids must lie in 1..{n_nodes}")
    if np.any(i == j):
        raise ValueError(f"{what}: self-loops (i == j) are not allowed")


# ── Event streams ───────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class EventStream:
    """Timestamped pair interactions on nodes 1..n over (0, horizon] hours.

    Undirected streams store i < j. Events are kept sorted by (time, i, j);
    identical timestamps on one pair are counted with multiplicity.
    """
    n_nodes: int
    horizon: float
    times: np.ndarray
    i: np.ndarray
    j: np.ndarray
    directed: bool = False

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        i = np.asarray(self.i, dtype=np.int64).ravel()
        j = np.asarray(self.j, dtype=np.int64).ravel()
        if not (t.size == i.size == j.size):
            raise ValueError("times, i and j must have equal length")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if t.size and (t.min() <= 0.0 or t.max() > self.horizon or not np.all(np.isfinite(t))):
            raise ValueError(f"event times must lie in (0, {self.horizon}]")
        _check_nodes(i, j, self.n_nodes, "EventStream")
        i, j = _canonical_pairs(i, j, self.directed)
        order = np.lexsort((j, i, t))
        object.__setattr__(self, "times", t[order])
        object.__setattr__(self, "i", i[order])
        object.__setattr__(self, "j", j[order])

    @classmethod
    def from_events(cls, events, n_nodes: int, horizon: float, directed: bool = False) -> EventStream:
        """Build from an iterable of (time, i, j) triples."""
        arr = np.asarray(list(events), dtype=float).reshape(-1, 3)
        return cls(n_nodes, horizon, arr[:, 0], arr[:, 1].astype(np.int64),
                   arr[:, 2].astype(np.int64), directed)

    @classmethod
    def empty(cls, n_nodes: int, horizon: float, directed: bool = False) -> EventStream:
        return cls(n_nodes, horizon, np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64), directed)

    def __len__(self) -> int:
        return int(self.times.size)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"time_hours": self.times, "i": self.i, "j": self.j})

    def count(self, i: int, j: int, t: float) -> int:
        """N_ij(t): number of events of pair (i, j) in (0, t]."""
        if not self.directed:
            i, j = min(i, j), max(i, j)
        mask = (self.i == i) & (self.j == j)
        return int(np.searchsorted(self.times[mask], t, side="right"))

    def relabel(self, mapping) -> EventStream:
        """Apply a node permutation given as {old: new} or an array indexed by old id."""
        lut = _relabel_lut(mapping, self.n_nodes)
        return EventStream(self.n_nodes, self.horizon, self.times, lut[self.i], lut[self.j], self.directed)


def _relabel_lut(mapping, n_nodes: int) -> np.ndarray:
    lut = np.arange(n_nodes + 1, dtype=np.int64)
    if isinstance(mapping, dict):
        for old, new in mapping.items():
            lut[int(old)] = int(new)
    else:
        arr = np.asarray(mapping, dtype=np.int64)
        lut[1:] = arr[1:] if arr.size == n_nodes + 1 else arr
    if sorted(lut[1:].tolist()) != list(range(1, n_nodes + 1)):
        raise ValueError("relabelling must be a permutation of 1..n")
    return lut


def write_events_csv(stream: EventStream, path, **extra_meta) -> None:
    """Write `time_hours,i,j` plus a `.meta.json` sidecar with n_nodes/horizon/directed (and extras)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stream.to_frame().to_csv(path, index=False, float_format="%.17g")
    meta = {"n_nodes": stream.n_nodes, "horizon": stream.horizon, "directed": stream.directed}
    meta.update(extra_meta)
    path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2))


def read_events_csv(path, n_nodes: int | None = None, horizon: float | None = None,
                    directed: bool | None = None) -> EventStream:
    path = Path(path)
    df = pd.read_csv(path, dtype={"time_hours": float, "i": np.int64, "j": np.int64})
    missing = set(_EVENT_COLUMNS) - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    meta_path = path.with_suffix(".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    if n_nodes is None:
        n_nodes = meta.get("n_nodes") or int(max(df["i"].max(), df["j"].max()) if len(df) else 1)
    if horizon is None:
        horizon = meta.get("horizon") or float(df["time_hours"].max() if len(df) else 1.0)
    if directed is None:
        directed = bool(meta.get("directed", False))
    return EventStream(int(n_nodes), float(horizon), df["time_hours"].to_numpy(),
                       df["i"].to_numpy(), df["j"].to_numpy(), directed)


def bin_events(stream: EventStream, cell_length: float) -> pd.DataFrame:
    """Per-pair per-cell counts; cell c covers (c·L, (c+1)·L].

    Returns a frame with columns cell, i, j, count (nonzero counts only);
    `frame.attrs["n_cells"]` holds ceil(horizon / L).
    """
    if not cell_length > 0:
        raise ValueError("cell_length must be positive")
    n_cells = max(1, int(math.ceil(stream.horizon / cell_length - 1e-12)))
    cells = np.ceil(stream.times / cell_length).astype(np.int64) - 1
    cells = np.clip(cells, 0, n_cells - 1)
    df = pd.DataFrame({"cell": cells, "i": stream.i, "j": stream.j})
    out = (
        df.groupby(["cell", "i", "j"], sort=True).size()
        .rename("count").reset_index()
    )
    out["count"] = out["count"].astype(np.int64)
    out.attrs["n_cells"] = n_cells
    return out


# ── Panels ──────────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class Panel:
    """Discretised observation grid with counts, covariates and censor flags.

    `records` has one row per (cell, pair): cell, i, j, count, censor, x_1..x_q.
    Storage is sparse: pairs never uncensored are dropped on construction.
    """
    n_nodes: int
    n_cells: int
    records: pd.DataFrame
    covariate_names: tuple = ()
    cell_times: np.ndarray | None = None
    cell_exposure: float = 1.0
    directed: bool = False

    def __post_init__(self):
        names = tuple(self.covariate_names)
        q = len(names)
        if q == 0:
            q = sum(1 for c in self.records.columns if str(c).startswith("x_"))
            names = tuple(x_columns(q))
        object.__setattr__(self, "covariate_names", names)

        cols = ["cell", "i", "j", "count", "censor"] + x_columns(q)
        missing = set(cols) - set(self.records.columns)
        if missing:
            raise ValueError(f"Panel records missing columns {sorted(missing)}")
        rec = self.records[cols].copy()
        for c in ("cell", "i", "j", "count", "censor"):
            rec[c] = rec[c].astype(np.int64)
        for c in x_columns(q):
            rec[c] = rec[c].astype(float)
        i, j =_canonical_pairs(rec["i"].to_numpy(), rec["j"].to_numpy(), self.directed)
        rec["i"], rec["j"] = i, j
        _check_nodes(i, j, self.n_nodes, "Panel")
        if len(rec):
            if rec["cell"].min() < 0 or rec["cell"].max() >= self.n_cells:
                raise ValueError(f"Panel cells must lie in 0..{self.n_cells - 1}")
            if (rec["count"] < 0).any():
                raise ValueError("Panel counts must be nonnegative")
            if not rec["censor"].isin([0, 1]).all():
                raise ValueError("Panel censor flags must be 0 or 1")
            if rec.duplicated(["cell", "i", "j"]).any():
                raise ValueError("Panel has duplicate (cell, i, j) records")
            if not np.isfinite(rec[x_columns(q)].to_numpy(dtype=float)).all():
                raise ValueError("Panel covariates must be finite")
            ever = rec.groupby(["i", "j"])["censor"].transform("max")
            rec = rec[ever == 1]
        rec = rec.sort_values(["cell", "i", "j"], kind="mergesort").reset_index(drop=True)
        object.__setattr__(self, "records", rec)

        if self.cell_times is None:
            times = np.arange(self.n_cells, dtype=float)
        else:
            times = np.asarray(self.cell_times, dtype=float)
            if times.size != self.n_cells:
                raise ValueError("cell_times must have one entry per cell")
        object.__setattr__(self, "cell_times", times)
        if not self.cell_exposure > 0:
            raise ValueError("cell_exposure must be positive")

    @property
    def q(self) -> int:
        return len(self.covariate_names)

    @property
    def x_columns(self) -> list[str]:
        return x_columns(self.q)

    @property
    def X(self) -> np.ndarray:
        return self.records[self.x_columns].to_numpy(dtype=float)

    def cell_frame(self, cell: int) -> pd.DataFrame:
        self._check_cell(cell)
        return self.records[self.records["cell"] == cell]

    def _check_cell(self, cell: int) -> None:
        if not 0 <= int(cell) < self.n_cells:
            raise IndexError(f"cell {cell} out of range 0..{self.n_cells - 1}")

    def active_sizes(self) -> np.ndarray:
        """|L(k)| for every cell k."""
        unc = self.records[self.records["censor"] == 1]
        return np.bincount(unc["cell"].to_numpy(), minlength=self.n_cells)

    def with_counts(self, counts) -> Panel:
        rec = self.records.copy()
        rec["count"] = np.asarray(counts, dtype=np.int64)
        return replace(self, records=rec)

    def relabel(self, mapping) -> Panel:
        lut = _relabel_lut(mapping, self.n_nodes)
        rec = self.records.copy()
        rec["i"], rec["j"] = lut[rec["i"].to_numpy()], lut[rec["j"].to_numpy()]
        return replace(self, records=rec)

    # ── JSON ──────────────────────────────────────────────────────────────────
    def to_dict(self) -> dict:
        rec = self.records
        xs = rec[self.x_columns].to_numpy(dtype=float).tolist()
        rows = [
            {"cell": int(c), "i": int(a), "j": int(b), "count": int(n), "censor": int(s), "x": x}
            for c, a, b, n, s, x in zip(rec["cell"], rec["i"], rec["j"], rec["count"], rec["censor"], xs)
        ]
        return {
            "n_nodes": self.n_nodes,
            "n_cells": self.n_cells,
            "directed": self.directed,
            "cell_exposure": self.cell_exposure,
            "covariate_names": list(self.covariate_names),
            "cell_times": self.cell_times.tolist(),
            "records": rows,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Panel:
        names = tuple(data["covariate_names"])
        rows = data["records"]
        rec = pd.DataFrame(
            [[r["cell"], r["i"], r["j"], r["count"], r["censor"], *r["x"]] for r in rows],
            columns=["cell", "i", "j", "count", "censor"] + x_columns(len(names)),
        )
        return cls(int(data["n_nodes"]), int(data["n_cells"]), rec, names,
                   np.asarray(data.get("cell_times"), dtype=float) if data.get("cell_times") else None,
                   float(data.get("cell_exposure", 1.0)), bool(data.get("directed", False)))


def write_panel_json(panel: Panel, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(panel.to_dict()))


def read_panel_json(path) -> Panel:
    return Panel.from_dict(json.loads(Path(path).read_text()))


def active_set(panel: Panel, cell: int) -> frozenset:
    """L(k): pairs with censor = 1 in the given cell."""
    frame = panel.cell_frame(cell)
    unc = frame[frame["censor"] == 1]
    return frozenset(zip(unc["i"].tolist(), unc["j"].tolist()))


# ── Piecewise-constant covariate paths (continuous time) ────────────────────────

@dataclass(frozen=True, eq=False)
class CovariatePath:
    """Per-pair pieces (start, end] with constant covariates and censor flag.

    `pieces` columns: i, j, start, end, censor, x_1..x_q.
    """
    pieces: pd.DataFrame
    covariate_names: tuple = ()
    directed: bool = False

    def __post_init__(self):
        names = tuple(self.covariate_names)
        if not names:
            names = tuple(x_columns(sum(1 for c in self.pieces.columns if str(c).startswith("x_"))))
        object.__setattr__(self, "covariate_names", names)
        p = self.pieces.copy()
        i, j = _canonical_pairs(p["i"].to_numpy(np.int64), p["j"].to_numpy(np.int64), self.directed)
        p["i"], p["j"] = i, j
        if (p["end"] <= p["start"]).any():
            raise ValueError("covariate pieces must have end > start")
        p = p.sort_values(["i", "j", "start"], kind="mergesort").reset_index(drop=True)
        prev_end = p.groupby(["i", "j"])["end"].shift()
        if (p["start"] < prev_end).any():
            raise ValueError("covariate pieces of a pair must not overlap")
        object.__setattr__(self, "pieces", p)

    @property
    def q(self) -> int:
        return len(self.covariate_names)

    @classmethod
    def from_panel(cls, panel: Panel, cell_length: float) -> CovariatePath:
        """Cell c becomes the piece (c·L, (c+1)·L]."""
        rec = panel.records
        pieces = pd.DataFrame({
            "i": rec["i"], "j": rec["j"],
            "start": rec["cell"] * float(cell_length),
            "end": (rec["cell"] + 1) * float(cell_length),
            "censor": rec["censor"],
        })
        for c in panel.x_columns:
            pieces[c] = rec[c].to_numpy(dtype=float)
        return cls(pieces, panel.covariate_names, panel.directed)


# ── Model specification and results ─────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Kernel, bandwidth (in cell units for panels, hours for streams), q, Θ box, t0 grid."""
    kernel: Kernel
    bandwidth: float
    q: int
    theta_box: np.ndarray | None = None
    eval_times: tuple = ()
    directed: bool = False

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.q < 1:
            raise ValueError("covariate dimension q must be >= 1")
        box = DEFAULT_THETA_BOX if self.theta_box is None else self.theta_box
        box = np.asarray(box, dtype=float)
        if box.shape == (2,):
            box = np.tile(box, (self.q, 1))
        if box.shape != (self.q, 2) or not np.all(box[:, 0] < box[:, 1]) or not np.isfinite(box).all():
            raise ValueError("theta_box must be q finite intervals with lo < hi")
        object.__setattr__(self, "theta_box", box)
        object.__setattr__(self, "eval_times", tuple(self.eval_times))


@dataclass(frozen=True, eq=False)
class ParameterCurve:
    """θ(t0) values on an evaluation grid; linear interpolation in between."""
    eval_times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.eval_times, dtype=float).ravel()
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if v.shape[0] != t.size:
            raise ValueError("one parameter vector per evaluation time is required")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("evaluation times must be strictly increasing")
        object.__setattr__(self, "eval_times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, theta, t: float = 0.0) -> ParameterCurve:
        return cls(np.array([t]), np.atleast_2d(np.asarray(theta, dtype=float)))

    @property
    def q(self) -> int:
        return self.values.shape[1]

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.values == self.values[0]))

    def at(self, t) -> np.ndarray:
        """θ(t) by linear interpolation, held constant beyond the grid ends."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.column_stack([np.interp(t_arr, self.eval_times, self.values[:, m]) for m in range(self.q)])
        return out[0] if np.ndim(t) == 0 else out


@dataclass(frozen=True)
class SolverDiagnostics:
    iterations: int
    grad_norm: float
    converged: bool
    kantorovich_r: float | None = None
    step_halvings: int = 0


@dataclass(frozen=True, eq=False)
class FitResult:
    """Local MLE at t0 with plug-in covariance and solver diagnostics."""
    t0: float
    theta_hat: np.ndarray
    covariance: np.ndarray
    std_errors: np.ndarray
    active_size: int
    effective_scale: float
    solver: SolverDiagnostics
    boundary: bool = False
    loglik: float = field(default=float("nan"))

    @property
    def converged(self) -> bool:
        return self.solver.converged
