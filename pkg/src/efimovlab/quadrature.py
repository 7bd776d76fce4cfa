"""Composite Gauss-Legendre rules aligned to declared breakpoints.

Every integrand in this package is piecewise smooth with kinks at known
points, so each grid is a union of segments between consecutive
breakpoints, each carrying an affinely mapped Gauss-Legendre rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

DEFAULT_ORDER = 8
BREAKPOINT_DEDUP_TOL = 1e-14


@lru_cache(maxsize=64)
def _reference_rule(g: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(g)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Quadrature nodes and positive weights on ``[a, b]``.

    ``breakpoints`` always contains both endpoints; no node sits on a
    breakpoint.
    """

    domain: tuple[float, float]
    breakpoints: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    order_per_segment: int

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def measure(self) -> float:
        return self.domain[1] - self.domain[0]

    @property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    def segment_of(self, i: int) -> int:
        """Index of the segment containing node ``i``."""
        return i // self.order_per_segment

    def sample(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Return ``sqrt(w_i) * f(x_i)``, the L2-scaled coordinate vector."""
        return self.sqrt_weights * _evaluate_1d(f, self.nodes)


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Tensor product of two 1-D grids.

    Node ``(x_i, y_j)`` is flattened to ``i * gy.size + j`` (row-major).
    """

    gx: Grid1D
    gy: Grid1D

    @property
    def shape(self) -> tuple[int, int]:
        return self.gx.size, self.gy.size

    @property
    def size(self) -> int:
        return self.gx.size * self.gy.size

    def flatten(self, i: int, j: int) -> int:
        nx, ny = self.shape
        if not (0 <= i < nx and 0 <= j < ny):
            raise IndexError(f"node ({i}, {j}) outside {nx}x{ny} grid")
        return i * ny + j

    def unflatten(self, k: int) -> tuple[int, int]:
        return divmod(k, self.gy.size)

    @property
    def weights(self) -> np.ndarray:
        return np.outer(self.gx.weights, self.gy.weights).ravel()

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates as two ``(nx, ny)`` arrays."""
        return np.meshgrid(self.gx.nodes, self.gy.nodes, indexing="ij")

    def sample(self, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
        """Return ``sqrt(w_i w_j) * f(x_i, y_j)`` flattened."""
        X, Y = self.mesh()
        vals = np.broadcast_to(np.asarray(f(X, Y), dtype=float), X.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("function is not finite at every grid node")
        scale = np.outer(self.gx.sqrt_weights, self.gy.sqrt_weights)
        return (scale * vals).ravel()

    def sample_separable(self, fx: Callable, fy: Callable) -> np.ndarray:
        """Coordinates of ``fx(x) * fy(y)``; cheaper than :meth:`sample`."""
        return np.outer(self.gx.sample(fx), self.gy.sample(fy)).ravel()


def _evaluate_1d(f: Callable, x: np.ndarray) -> np.ndarray:
    vals = np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("function is not finite at every quadrature node")
    return vals


def build_grid(
    domain: Sequence[float],
    breakpoints: Sequence[float] = (),
    g: int = DEFAULT_ORDER,
) -> Grid1D:
    """Composite Gauss-Legendre grid with ``g`` nodes per segment.

    Parameters
    ----------
    domain : pair of floats
        Interval ``[a, b]`` with ``a < b``.
    breakpoints : sequence of floats
        Interior kink locations.  Domain endpoints are added when absent and
        points closer than 1e-14 are merged.
    g : int
        Gauss-Legendre order on each segment; exact for polynomials of
        degree ``2g - 1`` per segment.
    """
    a, b = (float(v) for v in domain)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError(f"domain endpoints must be finite, got [{a}, {b}]")
    if a >= b:
        raise ValueError(f"empty domain [{a}, {b}]")
    if int(g) != g or g < 1:
        raise ValueError(f"segment order must be a positive integer, got {g}")
    g = int(g)

    bps = np.asarray(list(breakpoints), dtype=float)
    if bps.size and not np.all(np.isfinite(bps)):
        raise ValueError("breakpoints must be finite")
    if bps.size and (bps.min() < a - BREAKPOINT_DEDUP_TOL or bps.max() > b + BREAKPOINT_DEDUP_TOL):
        raise ValueError(f"breakpoints must lie inside [{a}, {b}]")

    pts = np.sort(np.concatenate([[a, b], np.clip(bps, a, b)]))
    merged = [pts[0]]
    for p in pts[1:]:
        if p - merged[-1] > BREAKPOINT_DEDUP_TOL:
            merged.append(p)
    # the right endpoint must survive exactly
    merged[-1] = b
    bp = np.array(merged)

    ref_x, ref_w = _reference_rule(g)
    left, right = bp[:-1, None], bp[1:, None]
    half = 0.5 * (right - left)
    nodes = (0.5 * (left + right) + half * ref_x).ravel()
    weights = (half * ref_w).ravel()

    for arr in (bp, nodes, weights):
        arr.setflags(write=False)
    return Grid1D(domain=(a, b), breakpoints=bp, nodes=nodes, weights=weights, order_per_segment=g)


def integrate(f: Callable[[np.ndarray], np.ndarray], grid: Grid1D) -> float:
    """Sum ``w_i f(x_i)`` left to right over the nodes."""
    vals = _evaluate_1d(f, grid.nodes)
    return _ordered_sum(grid.weights * vals)


def _ordered_sum(terms: np.ndarray) -> float:
    # fixed order keeps results independent of BLAS threading
    total = 0.0
    for t in terms.tolist():
        total += t
    return total


def product_grid(gx: Grid1D, gy: Grid1D) -> Grid2D:
    return Grid2D(gx, gy)
