"""Plain quadrature and root-bracketing helpers.

Nothing in here knows about measures or paths; these are the scalar tools the
rest of the package leans on (adaptive Simpson for densities, breakpoint-aware
trapezoid for piecewise-linear integrands, bisection for level crossings).
"""
from __future__ import annotations

import numpy as np


def adaptive_simpson(fn, a: float, b: float, tol: float = 1e-10, max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature of ``fn`` on [a, b] with absolute tolerance."""
    if b <= a:
        return 0.0

    def simpson(lo, mid, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, hi, flo, fmid, fhi, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lmid = 0.5 * (lo + mid)
        rmid = 0.5 * (mid + hi)
        flm = fn(lmid)
        frm = fn(rmid)
        left = simpson(lo, lmid, mid, flo, flm, fmid)
        right = simpson(mid, rmid, hi, fmid, frm, fhi)
        if depth >= max_depth or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return (recurse(lo, mid, flo, flm, fmid, left, eps / 2.0, depth + 1)
                + recurse(mid, hi, fmid, frm, fhi, right, eps / 2.0, depth + 1))

    mid = 0.5 * (a + b)
    fa, fm, fb = fn(a), fn(mid), fn(b)
    whole = simpson(a, mid, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, tol, 0)


def trapezoid_refined(fn, a: float, b: float, h: float, breakpoints=()) -> float:
    """Composite trapezoid on [a, b] with uniform step h plus extra nodes.

    Exact (to round-off) for integrands that are piecewise linear between the
    supplied breakpoints, which is what the spike corpus needs.
    """
    if b <= a:
        return 0.0
    n = max(1, int(np.ceil((b - a) / h - 1e-12)))
    nodes = np.linspace(a, b, n + 1)
    extra = [x for x in breakpoints if a < x < b]
    if extra:
        nodes = np.unique(np.concatenate([nodes, np.asarray(extra, float)]))
    vals = np.asarray(fn(nodes), float)
    return float(np.trapezoid(vals, nodes))


def simpson_segments(fn, edges) -> float:
    """Simpson's rule applied per segment of ``edges`` (exact for piecewise
    quadratics whose breaks are at the edges)."""
    edges = np.asarray(edges, float)
    lo = edges[:-1]
    hi = edges[1:]
    mid = 0.5 * (lo + hi)
    return float(np.sum((hi - lo) / 6.0 * (fn(lo) + 4.0 * fn(mid) + fn(hi))))


def bisect_root(fn, a: float, b: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Bisection on a sign change of ``fn`` over [a, b]."""
    fa, fb = fn(a), fn(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0:
        raise ValueError("no sign change on bracket")
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        fm = fn(mid)
        if fm == 0.0 or (b - a) < tol:
            return mid
        if fa * fm < 0:
            b, fb = mid, fm
        else:
            a, fa = mid, fm
    return 0.5 * (a + b)
