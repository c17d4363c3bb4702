"""Composite Gauss-Legendre quadrature with panel doubling.

Small, self-contained engine used for KL divergences, differential entropy
and score second moments. Panels are doubled until two successive refinements
agree within the tolerance; failure to converge raises QuadratureError, which
callers surface as a numerical error.
"""
from __future__ import annotations

import numpy as np


class QuadratureError(RuntimeError):
    """Raised when panel refinement does not reach the requested tolerance."""


_NODES = 24
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_NODES)


def _panel_eval(f, a: float, b: float, panels: int) -> float:
    edges = np.linspace(a, b, panels + 1)
    lows, highs = edges[:-1], edges[1:]
    half = 0.5 * (highs - lows)
    mids = 0.5 * (highs + lows)
    pts = (mids[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    vals = np.asarray(f(pts), dtype=float).reshape(panels, _NODES)
    return float((half * (vals @ _GL_W)).sum())


def integrate_1d(f, a: float, b: float, tol: float = 1e-9, max_panels: int = 2048) -> float:
    """Integral of vectorized ``f`` over [a, b] to absolute tolerance ``tol``."""
    panels = 8
    prev = _panel_eval(f, a, b, panels)
    while panels <= max_panels:
        panels *= 2
        cur = _panel_eval(f, a, b, panels)
        if abs(cur - prev) <= tol:
            return cur
        prev = cur
    raise QuadratureError(
        f"quadrature did not converge to {tol:g} within {max_panels} panels"
    )


def integrate_2d(
    f, xlim: tuple[float, float], ylim: tuple[float, float], tol: float = 1e-8, max_panels: int = 64
) -> float:
    """Tensor-product Gauss-Legendre integral of ``f(pts)`` with pts of shape (n, 2)."""

    def tensor(panels: int) -> float:
        ex = np.linspace(xlim[0], xlim[1], panels + 1)
        ey = np.linspace(ylim[0], ylim[1], panels + 1)
        hx, mx = 0.5 * np.diff(ex), 0.5 * (ex[:-1] + ex[1:])
        hy, my = 0.5 * np.diff(ey), 0.5 * (ey[:-1] + ey[1:])
        px = (mx[:, None] + hx[:, None] * _GL_X[None, :]).ravel()
        py = (my[:, None] + hy[:, None] * _GL_X[None, :]).ravel()
        wx = (hx[:, None] * _GL_W[None, :]).ravel()
        wy = (hy[:, None] * _GL_W[None, :]).ravel()
        xx, yy = np.meshgrid(px, py, indexing="ij")
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
        vals = np.asarray(f(pts), dtype=float).reshape(px.size, py.size)
        return float(wx @ vals @ wy)

    panels = 4
    prev = tensor(panels)
    while panels <= max_panels:
        panels *= 2
        cur = tensor(panels)
        if abs(cur - prev) <= tol:
            return cur
        prev = cur
    raise QuadratureError(
        f"2d quadrature did not converge to {tol:g} within {max_panels} panels"
    )
