"""Deterministic 1-D quadrature helpers shared by the ensemble modules."""

from __future__ import annotations

import functools
import math

import numpy as np

from .errors import AccuracyError, UnsupportedError


@functools.lru_cache(maxsize=8)
def gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for integral f(u) exp(-u^2) du."""
    u, w = np.polynomial.hermite.hermgauss(n)
    return u, w


def simpson_doubling(f, lo: float, hi: float, rel_tol: float = 1e-10,
                     abs_tol: float = 0.0, min_level: int = 4,
                     max_level: int = 22) -> tuple[float, float]:
    """Composite Simpson with panel doubling until two levels agree.

    Returns (value, delta) where delta is the last refinement change,
    usable as a numerical error estimate.
    """
    if hi <= lo:
        return 0.0, 0.0
    prev = None
    for level in range(min_level, max_level + 1):
        x, w = simpson_nodes(lo, hi, level)
        val = float(np.dot(w, f(x)))
        if prev is not None:
            delta = abs(val - prev)
            if delta <= rel_tol * abs(val) + abs_tol:
                return val, delta
        prev = val
    raise AccuracyError(
        f"Simpson refinement did not converge to rel_tol={rel_tol} on "
        f"[{lo:.6g}, {hi:.6g}] within {max_level} doublings")


def simpson_nodes(lo: float, hi: float, level: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of composite Simpson with 2**level panels."""
    n = 2 ** level
    x = np.linspace(lo, hi, n + 1)
    h = (hi - lo) / n
    w = np.full(n + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return x, w * (h / 3.0)


def edge_regularized_integral(f, lo: float, hi: float,
                              rel_tol: float = 1e-10) -> tuple[float, float]:
    """Integrate f over [lo, hi] when f has fractional-power zeros at the ends.

    Substituting q = lo + t^2 (and mirrored on the right half) turns
    integrands like sqrt(hi - q) smooth, restoring fast Simpson convergence.
    """
    if hi <= lo:
        return 0.0, 0.0
    mid = 0.5 * (lo + hi)

    def left(t):
        return 2.0 * t * f(lo + t * t)

    def right(t):
        return 2.0 * t * f(hi - t * t)

    v1, d1 = simpson_doubling(left, 0.0, math.sqrt(mid - lo), rel_tol)
    v2, d2 = simpson_doubling(right, 0.0, math.sqrt(hi - mid), rel_tol)
    return v1 + v2, d1 + d2


def region_below(potential, level: float) -> list[tuple[float, float]]:
    """Intervals {q : V(q) <= level} for a (polynomial) confining potential."""
    c = potential.poly_coeffs().astype(float)
    c[0] -= level
    desc = np.trim_zeros(c[::-1], "f")
    if desc.size <= 1:
        raise UnsupportedError("potential is constant; sublevel set unbounded")
    roots = np.roots(desc)
    real = np.sort(roots[np.abs(roots.imag) <= 1e-9 * (1.0 + np.abs(roots.real))].real)
    if real.size < 2:
        return []
    intervals = []
    for k in range(real.size - 1):
        a, b = float(real[k]), float(real[k + 1])
        if b - a <= 0:
            continue
        mid = 0.5 * (a + b)
        if float(potential.value(mid)) <= level:
            intervals.append((a, b))
    merged: list[tuple[float, float]] = []
    for a, b in intervals:
        if merged and a <= merged[-1][1] + 1e-12 * (1.0 + abs(a)):
            merged[-1] = (merged[-1][0], b)
        else:
            merged.append((a, b))
    return merged


def confining_span(potential, level: float) -> tuple[float, float]:
    """The smallest interval containing {V <= level}."""
    intervals = region_below(potential, level)
    if not intervals:
        raise UnsupportedError(f"sublevel set at {level!r} is empty")
    return intervals[0][0], intervals[-1][1]
