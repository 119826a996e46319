"""Small numerical helpers (adaptive quadrature)."""

from __future__ import annotations

import math


def adaptive_simpson(fn, a: float, b: float, rel_tol: float = 1e-10,
                     max_depth: int = 48) -> float:
    """Adaptive Simpson quadrature of fn over [a, b].

    Tolerance is relative to the running whole-interval estimate with an
    absolute floor, so integrals through zero terminate.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0

    def simpson(lo, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    fa, fb = fn(a), fn(b)
    m = 0.5 * (a + b)
    fm = fn(m)
    whole = simpson(a, b, fa, fm, fb)
    scale = max(abs(whole), 1e-300)
    tol0 = rel_tol * max(scale, 1e-12)

    def recurse(lo, hi, flo, fmid, fhi, acc, tol, depth):
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = fn(lm), fn(rm)
        left = simpson(lo, mid, flo, flm, fmid)
        right = simpson(mid, hi, fmid, frm, fhi)
        if depth >= max_depth:
            return left + right
        if abs(left + right - acc) <= 15.0 * tol:
            return left + right + (left + right - acc) / 15.0
        return (recurse(lo, mid, flo, flm, fmid, left, 0.5 * tol, depth + 1)
                + recurse(mid, hi, fmid, frm, fhi, right, 0.5 * tol, depth + 1))

    out = recurse(a, b, fa, fm, fb, whole, tol0, 0)
    if math.isnan(out):
        raise ValueError("quadrature produced NaN")
    return sign * out
