"""Graph statistics of frequency-regime subnetworks and simulation-based GOF bands."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import networkx as nx
import numpy as np
import pandas as pd

from config import DEFAULT_N_SIMS, DEFAULT_QUANTILES, DEFAULT_REGIMES, max_workers
from engine.model import Panel
from engine.simulation import child_seed, simulate_panel_counts

logger = logging.getLogger(__name__)

CLUSTERING_BINS = 20
_GOF_PURPOSE = 5


@dataclass(frozen=True)
class FrequencyRegime:
    """Edge iff l1 <= count <= l2; l2 may be inf."""
    l1: float
    l2: float = math.inf

    def __post_init__(self):
        if self.l1 < 0 or self.l2 < self.l1 or math.isnan(self.l2):
            raise ValueError(f"invalid regime ({self.l1}, {self.l2}): need 0 <= l1 <= l2")

    @classmethod
    def parse(cls, value) -> FrequencyRegime:
        """Accept (l1, l2) pairs or strings like "1-3" and "10-inf"."""
        if isinstance(value, FrequencyRegime):
            return value
        if isinstance(value, str):
            lo, sep, hi = value.partition("-")
            if not sep:
                raise ValueError(f"regime {value!r} must look like 'l1-l2'")
            return cls(float(lo), math.inf if hi.strip().lower() in ("inf", "∞") else float(hi))
        lo, hi = value
        return cls(float(lo), math.inf if hi is None else float(hi))

    @property
    def label(self) -> str:
        hi = "inf" if math.isinf(self.l2) else f"{self.l2:g}"
        return f"{self.l1:g}-{hi}"

    def contains(self, counts) -> np.ndarray:
        c = np.asarray(counts, dtype=float)
        return (c >= self.l1) & (c <= self.l2)


class Clustering(NamedTuple):
    value: float
    defined: bool


class Diameter(NamedTuple):
    hops: int
    disconnected: bool


def _pair_counts(counts) -> pd.DataFrame:
    if isinstance(counts, dict):
        counts = pd.DataFrame([(i, j, c) for (i, j), c in counts.items()], columns=["i", "j", "count"])
    df = counts[["i", "j", "count"]].copy()
    lo = np.minimum(df["i"], df["j"])
    df["j"] = np.maximum(df["i"], df["j"])
    df["i"] = lo
    return df.groupby(["i", "j"], as_index=False)["count"].sum()


def regime_subgraph(counts, n_nodes: int, regime: FrequencyRegime) -> nx.Graph:
    """Undirected graph on nodes 1..n with an edge per pair whose count lies in the regime.

    `counts` is a frame (i, j, count) or a {(i, j): count} dict; missing pairs count 0.
    """
    df = _pair_counts(counts)
    g = nx.Graph()
    g.add_nodes_from(range(1, n_nodes + 1))
    if regime.l1 <= 0:
        g.add_edges_from((a, b) for a in range(1, n_nodes + 1) for b in range(a + 1, n_nodes + 1))
        over = df[df["count"] > regime.l2]
        g.remove_edges_from(zip(over["i"].tolist(), over["j"].tolist()))
    else:
        hit = df[regime.contains(df["count"].to_numpy())]
        g.add_edges_from(zip(hit["i"].tolist(), hit["j"].tolist()))
    return g


def degree_distribution(g: nx.Graph) -> np.ndarray:
    """Node counts per degree 0..max; sums to the number of nodes."""
    return np.asarray(nx.degree_histogram(g), dtype=np.int64)


def clustering_coefficient(g: nx.Graph) -> Clustering:
    """Global transitivity: 3·triangles / connected triples. No triples gives (0, False)."""
    defined = any(d >= 2 for _, d in g.degree())
    return Clustering(float(nx.transitivity(g)) if defined else 0.0, defined)


def diameter(g: nx.Graph) -> Diameter:
    """Longest shortest path inside the largest component (ties: the one holding the smallest node).

    `disconnected` is set when more than one component carries edges.
    """
    comps = [c for c in nx.connected_components(g)]
    if not comps:
        return Diameter(0, False)
    largest = max(comps, key=lambda c: (len(c), -min(c)))
    with_edges = sum(1 for c in comps if len(c) > 1)
    hops = nx.diameter(g.subgraph(largest)) if len(largest) > 1 else 0
    return Diameter(int(hops), with_edges > 1)


def graph_stats(g: nx.Graph) -> dict:
    c, d = clustering_coefficient(g), diameter(g)
    return {
        "degree": degree_distribution(g),
        "clustering": c.value,
        "clustering_defined": c.defined,
        "diameter": d.hops,
        "disconnected": d.disconnected,
    }


# ── Goodness of fit ─────────────────────────────────────────────────────────────

def cell_counts(panel: Panel, cell: int) -> pd.DataFrame:
    return panel.cell_frame(cell)[["i", "j", "count"]]


def simulate_regime_stats(theta, panel: Panel, cell: int, regimes=DEFAULT_REGIMES,
                          n_sims: int = DEFAULT_N_SIMS, seed: int = 0) -> dict:
    """Per-regime statistics of n_sims simulated count tables for one cell.

    Returns {label: list of graph_stats dicts}, in simulation order.
    """
    regimes = [FrequencyRegime.parse(r) for r in regimes]
    panel._check_cell(cell)

    def _one(s):
        sim = simulate_panel_counts(panel, theta, child_seed(seed, s, _GOF_PURPOSE), cells=[cell])
        counts = cell_counts(sim, cell)
        return {r.label: graph_stats(regime_subgraph(counts, panel.n_nodes, r)) for r in regimes}

    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        sims = list(pool.map(_one, range(n_sims)))
    return {r.label: [s[r.label] for s in sims] for r in regimes}


def _padded(hists, width: int) -> np.ndarray:
    out = np.zeros((len(hists), width))
    for row, h in enumerate(hists):
        out[row, :h.size] = h
    return out


def quantile_key(q: float) -> str:
    return f"q{round(q * 100):02d}"


@dataclass
class GofReport:
    cell: int
    n_sims: int
    quantiles: tuple
    regimes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"cell": self.cell, "n_sims": self.n_sims, "quantiles": list(self.quantiles),
                "regimes": self.regimes}


def gof_bands(theta, panel: Panel, cell: int, regimes=DEFAULT_REGIMES, n_sims: int = DEFAULT_N_SIMS,
              quantiles=DEFAULT_QUANTILES, seed: int = 0) -> GofReport:
    """Quantile envelopes of regime-graph statistics under the fitted model, with observed values.

    Degree bands are per-degree quantiles of node counts; clustering is
    summarised as a histogram over [0, 1], diameter as a histogram over hops.
    """
    if n_sims < 2:
        raise ValueError("n_sims must be >= 2")
    quantiles = tuple(float(q) for q in quantiles)
    if not quantiles or any(not 0.0 < q < 1.0 for q in quantiles):
        raise ValueError("quantiles must lie in (0, 1)")
    regimes = [FrequencyRegime.parse(r) for r in regimes]

    sims = simulate_regime_stats(theta, panel, cell, regimes, n_sims, seed)
    observed_counts = cell_counts(panel, cell)
    report = GofReport(cell=int(cell), n_sims=n_sims, quantiles=quantiles)

    for r in regimes:
        stats = sims[r.label]
        obs = graph_stats(regime_subgraph(observed_counts, panel.n_nodes, r))
        width = max(max(s["degree"].size for s in stats), obs["degree"].size)
        mat = _padded([s["degree"] for s in stats], width)
        bands = np.quantile(mat, quantiles, axis=0)
        obs_deg = _padded([obs["degree"]], width)[0]
        degree_bands = [
            {"degree": d, **{quantile_key(q): float(bands[k, d]) for k, q in enumerate(quantiles)},
             "observed": int(obs_deg[d])}
            for d in range(width)
        ]

        clus = np.array([s["clustering"] for s in stats])
        hist, edges = np.histogram(clus, bins=CLUSTERING_BINS, range=(0.0, 1.0))
        diam = np.array([s["diameter"] for s in stats], dtype=np.int64)

        report.regimes[r.label] = {
            "degree_bands": degree_bands,
            "clustering": {
                "hist": hist.tolist(),
                "bin_edges": edges.tolist(),
                "observed": obs["clustering"],
                "undefined_fraction": float(np.mean([not s["clustering_defined"] for s in stats])),
            },
            "diameter": {
                "hist": np.bincount(diam, minlength=obs["diameter"] + 1).tolist(),
                "observed": obs["diameter"],
                "disconnected_fraction": float(np.mean([s["disconnected"] for s in stats])),
                "observed_disconnected": obs["disconnected"],
            },
        }
        logger.debug("regime %s: %d degree bins", r.label, width)
    return report
