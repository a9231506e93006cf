"""Scalar root finding and quadrature kernels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import DepthExceeded, NoBracket, NoConvergence


@dataclass(frozen=True)
class RootConfig:
    abs_tol: float = 1e-12
    max_iter: int = 200

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class QuadConfig:
    rel_tol: float = 1e-10
    max_depth: int = 50

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")


DEFAULT_ROOT = RootConfig()
DEFAULT_QUAD = QuadConfig()


def find_root_bracketed(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    cfg: RootConfig = DEFAULT_ROOT,
) -> float:
    """Root of ``f`` inside ``[lo, hi]`` by Brent's method.

    ``f`` is only ever evaluated inside the bracket. Raises ``NoBracket`` if
    ``f(lo)`` and ``f(hi)`` share a sign and ``NoConvergence`` when
    ``cfg.max_iter`` is exhausted.
    """
    if not lo < hi:
        raise NoBracket(f"empty bracket [{lo}, {hi}]")
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if math.isnan(flo) or math.isnan(fhi) or (flo > 0) == (fhi > 0):
        raise NoBracket(f"f({lo})={flo} and f({hi})={fhi} do not bracket a root")
    try:
        root, info = optimize.brentq(
            f, lo, hi, xtol=cfg.abs_tol, maxiter=cfg.max_iter, full_output=True, disp=False
        )
    except RuntimeError as exc:  # pragma: no cover - disp=False reports via info
        raise NoConvergence(str(exc)) from exc
    if not info.converged:
        raise NoConvergence(f"no convergence after {info.iterations} iterations: {info.flag}")
    return min(max(root, lo), hi)


def _simpson(fa, fm, fb, a, b):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def integrate(
    f: Callable[[float], float],
    a: float,
    b: float,
    cfg: QuadConfig = DEFAULT_QUAD,
) -> float:
    """Adaptive Simpson quadrature of ``f`` over ``[a, b]``.

    A panel is accepted once the two-half Simpson estimate differs from the
    one-panel estimate by at most ``15 * tol`` (Richardson-corrected), where
    the tolerance is ``rel_tol`` relative to the running magnitude of the
    integral and is halved with each split.
    """
    if b < a:
        raise ValueError("integrate requires a <= b")
    if a == b:
        return 0.0

    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = _simpson(fa, fm, fb, a, b)
    # Scale for the relative tolerance; a coarse 5-point estimate guards
    # against a panel whose Simpson value happens to vanish.
    xs = np.linspace(a, b, 5)
    scale = max(abs(whole), (b - a) * float(np.mean(np.abs([f(x) for x in xs]))), 1e-300)
    tol = cfg.rel_tol * scale

    def recurse(a, m, b, fa, fm, fb, whole, tol, depth):
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = _simpson(fa, flm, fm, a, m)
        right = _simpson(fm, frm, fb, m, b)
        err = left + right - whole
        if abs(err) <= 15.0 * tol:
            return left + right + err / 15.0
        if depth >= cfg.max_depth:
            raise DepthExceeded(f"tolerance not reached on [{a}, {b}] at depth {depth}")
        return recurse(a, lm, m, fa, flm, fm, left, 0.5 * tol, depth + 1) + recurse(
            m, rm, b, fm, frm, fb, right, 0.5 * tol, depth + 1
        )

    return recurse(a, m, b, fa, fm, fb, whole, tol, 1)


def simpson_segments(f: Callable[[np.ndarray], np.ndarray], edges: np.ndarray) -> np.ndarray:
    """Per-segment Simpson integrals of a vectorised ``f`` between ``edges``.

    Exact when ``f`` restricted to each segment is a polynomial of degree <= 3,
    which is the case for the piecewise-linear survival integrands.
    """
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1], edges[1:]
    return (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
