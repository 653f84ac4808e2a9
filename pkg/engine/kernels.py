"""Kernel functions, moment constants, equivalent kernels and bandwidth transfer.

Conventions:
    u = (t - t0) / h
    K(u) is supported on [-1, 1]; the one-sided version K*(u) = 2 K(u) 1[-1,0](u)
    M_k = ∫ u^k K(u) du
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate

from config import KERNEL_MODIFIERS, KERNEL_NAMES
from engine.errors import DegenerateKernelError

_QUAD_TOL = 1e-10
_DEGENERATE_TOL = 1e-12
_ORDER_ONE_TOL = 1e-6


@dataclass(frozen=True)
class Kernel:
    """Immutable kernel description.

    shape: one of KERNEL_NAMES, "one_sided" or "local_linear_equivalent";
    the two modifiers wrap `inner`. `scale` multiplies every value, which is
    how unnormalised weights (e.g. the weekly triangle weights) are expressed.
    """
    shape: str
    inner: Kernel | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.shape in KERNEL_NAMES:
            if self.inner is not None:
                raise ValueError(f"base kernel '{self.shape}' takes no inner kernel")
        elif self.shape in KERNEL_MODIFIERS:
            if self.inner is None:
                raise ValueError(f"'{self.shape}' requires an inner kernel")
        else:
            raise ValueError(f"Unknown kernel shape: {self.shape}")
        if not self.scale > 0:
            raise ValueError("kernel scale must be positive")

    @property
    def support(self) -> tuple[float, float]:
        if self.shape in KERNEL_NAMES:
            return (-1.0, 1.0)
        lo, hi = self.inner.support
        if self.shape == "one_sided":
            return (lo, min(hi, 0.0))
        return (lo, hi)

    @property
    def name(self) -> str:
        if self.inner is None:
            return self.shape
        return f"{self.inner.name}+{self.shape}"

    @property
    def signed(self) -> bool:
        """True when the kernel may take negative values."""
        if self.shape == "local_linear_equivalent":
            return True
        return self.inner.signed if self.inner is not None else False

    def unit(self) -> Kernel:
        return self if self.scale == 1.0 else replace(self, scale=1.0)

    def __call__(self, u):
        return kernel_eval(self, u)


def kernel_from_name(name: str, one_sided: bool = False,
                     local_linear_equivalent: bool = False, scale: float = 1.0) -> Kernel:
    """Build a kernel from a config name such as "triangular+one_sided"."""
    parts = [p.strip().lower() for p in name.split("+") if p.strip()]
    if not parts or parts[0] not in KERNEL_NAMES:
        raise ValueError(f"Unknown kernel: {name!r} (expected one of {KERNEL_NAMES})")
    mods = parts[1:]
    for m in mods:
        if m not in KERNEL_MODIFIERS:
            raise ValueError(f"Unknown kernel modifier: {m!r}")
    if one_sided and "one_sided" not in mods:
        mods.append("one_sided")
    if local_linear_equivalent and "local_linear_equivalent" not in mods:
        mods.append("local_linear_equivalent")

    k = Kernel(parts[0])
    for m in mods:
        k = Kernel(m, inner=k)
    return replace(k, scale=scale) if scale != 1.0 else k


def one_sided(k: Kernel) -> Kernel:
    return Kernel("one_sided", inner=k)


# ── Evaluation ──────────────────────────────────────────────────────────────────

def _eval_unit(k: Kernel, u: np.ndarray) -> np.ndarray:
    if k.shape == "triangular":
        return np.where(np.abs(u) <= 1.0, 1.0 - np.abs(u), 0.0)
    if k.shape == "epanechnikov":
        return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    if k.shape == "uniform":
        return np.where(np.abs(u) <= 1.0, 0.5, 0.0)
    if k.shape == "one_sided":
        inside = (u >= -1.0) & (u <= 0.0)
        return np.where(inside, 2.0 * kernel_eval(k.inner, u), 0.0)
    # local_linear_equivalent: L(u) = K(u) (M2 - u M1) / (M0 M2 - M1²)
    m0, m1, m2 = (kernel_moment(k.inner, r) for r in (0, 1, 2))
    denom = m0 * m2 - m1 * m1
    return kernel_eval(k.inner, u) * (m2 - u * m1) / denom


def kernel_eval(k: Kernel, u):
    """Value of the kernel at u (scalar or array); 0 outside the support."""
    arr = np.asarray(u, dtype=float)
    out = _eval_unit(k, arr) * k.scale
    if np.ndim(u) == 0:
        return float(out)
    return out


def discrete_weights(k: Kernel, offsets, kappa: float) -> np.ndarray:
    """Cell weights K(offset / κ), left unnormalised."""
    if not kappa > 0:
        raise ValueError("bandwidth must be positive")
    return kernel_eval(k, np.asarray(offsets, dtype=float) / float(kappa))


# ── Quadrature ──────────────────────────────────────────────────────────────────

def _quad(f, lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.0
    points = [0.0] if lo < 0.0 < hi else None
    val, _ = integrate.quad(f, lo, hi, points=points, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=200)
    return float(val)


@functools.lru_cache(maxsize=None)
def kernel_moment(k: Kernel, order: int) -> float:
    """M_order = ∫ u^order K(u) du over the kernel support."""
    if order < 0:
        raise ValueError("moment order must be >= 0")
    lo, hi = k.support
    return _quad(lambda u: u ** order * kernel_eval(k, u), lo, hi)


@functools.lru_cache(maxsize=None)
def kernel_l2(k: Kernel) -> float:
    """∫ K(u)² du."""
    lo, hi = k.support
    return _quad(lambda u: kernel_eval(k, u) ** 2, lo, hi)


def _triangular_cdf(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, -1.0, 1.0)
    return np.where(u <= 0.0, 0.5 * (1.0 + u) ** 2, 1.0 - 0.5 * (1.0 - u) ** 2)


def kernel_integral(k: Kernel, a, b):
    """∫_a^b K(u) du, elementwise over arrays a and b.

    Closed form for the triangular kernel, quadrature otherwise.
    """
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if k.shape == "triangular":
        out = (_triangular_cdf(b_arr) - _triangular_cdf(a_arr)) * k.scale
    else:
        lo, hi = k.support

        def _one(x, y):
            sign = 1.0
            if y < x:
                x, y, sign = y, x, -1.0
            return sign * _quad(lambda u: kernel_eval(k, u), max(x, lo), min(y, hi))

        out = np.vectorize(_one, otypes=[float])(a_arr, b_arr)
    if np.ndim(a) == 0 and np.ndim(b) == 0:
        return float(out)
    return out


# ── Equivalent kernels and bandwidth transfer ───────────────────────────────────

def equivalent_local_linear(k: Kernel) -> Kernel:
    """Kernel L(u) = K(u)(M2 - u M1)/(M2 - M1²) induced by local-linear fitting.

    Symmetric kernels are a fixed point (M1 = 0 gives L = K).
    """
    m0, m1, m2 = (kernel_moment(k, r) for r in (0, 1, 2))
    denom = m0 * m2 - m1 * m1
    if denom <= _DEGENERATE_TOL:
        raise DegenerateKernelError(f"kernel {k.name} has M2 - M1² = {denom:.3e}")
    if abs(m1) <= _DEGENERATE_TOL and abs(m0 - 1.0) <= _DEGENERATE_TOL:
        return k

    out = Kernel("local_linear_equivalent", inner=k)
    total, first = kernel_moment(out, 0), kernel_moment(out, 1)
    if abs(total - 1.0) > 1e-9 or abs(first) > 1e-9:
        raise DegenerateKernelError(
            f"equivalent kernel of {k.name} integrates to {total:.12f} with first moment {first:.3e}")
    return out


def _amise_ratio(k: Kernel) -> float:
    m1, m2 = kernel_moment(k, 1), kernel_moment(k, 2)
    if abs(m1) > _ORDER_ONE_TOL * max(1.0, kernel_moment(k, 0)):
        raise ValueError(f"kernel {k.name} is not of order one (M1 = {m1:.3e})")
    if abs(m2) <= _DEGENERATE_TOL:
        raise DegenerateKernelError(f"kernel {k.name} has zero second moment")
    return kernel_l2(k) / (m2 * m2)


def bandwidth_transfer_factor(src: Kernel, dst: Kernel) -> float:
    """Factor f with h_dst = f · h_src between asymptotically optimal bandwidths.

    Formula:
        f = [ (∫dst² / M2(dst)²) · (M2(src)² / ∫src²) ]^(1/5)
    """
    return float((_amise_ratio(dst) / _amise_ratio(src)) ** 0.2)
