import numpy as np
import pandas as pd
import pytest

from engine.model import Panel, x_columns
from engine.simulation import pair_universe


@pytest.fixture(autouse=True)
def _two_threads(monkeypatch):
    monkeypatch.setenv("NETCOX_THREADS", "2")


@pytest.fixture
def make_panel():
    """Panel factory: counts[c, p] over the canonical pair order, X[c, p, m] (default intercept)."""
    def _make(counts, X=None, n_nodes=4, censor=None, names=None, exposure=1.0):
        counts = np.asarray(counts, dtype=np.int64)
        n_cells, n_pairs = counts.shape
        i, j = pair_universe(n_nodes)
        assert i.size == n_pairs
        X = np.ones((n_cells, n_pairs, 1)) if X is None else np.asarray(X, dtype=float)
        censor = np.ones_like(counts) if censor is None else np.asarray(censor, dtype=np.int64)
        q = X.shape[2]
        rows = []
        for c in range(n_cells):
            for p in range(n_pairs):
                rows.append([c, i[p], j[p], counts[c, p], censor[c, p], *X[c, p]])
        rec = pd.DataFrame(rows, columns=["cell", "i", "j", "count", "censor"] + x_columns(q))
        return Panel(n_nodes, n_cells, rec, names or tuple(x_columns(q)), cell_exposure=exposure)
    return _make


@pytest.fixture
def random_panel(make_panel):
    """6 nodes, 9 cells, intercept + binary covariate, ~10% censored rows."""
    rng = np.random.default_rng(3)
    n_cells, n_pairs = 9, 15
    x = (rng.random((n_cells, n_pairs)) < 0.5).astype(float)
    X = np.stack([np.ones_like(x), x], axis=-1)
    counts = rng.poisson(np.exp(-0.2 + 0.6 * x))
    censor = (rng.random((n_cells, n_pairs)) > 0.1).astype(np.int64)
    return make_panel(counts, X, n_nodes=6, censor=censor, names=("intercept", "flag"))
