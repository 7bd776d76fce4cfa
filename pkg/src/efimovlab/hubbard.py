"""Explicit model with infinitely many bound states below the essential edge.

The construction lives on ``[0, 1]`` and is organised around the dyadic
points ``p_n = 1 - 2**-n``.  On each segment ``[p_{n-1}, p_n]``:

* ``phi_n`` is a normalized sine bump (the segments are disjoint, so the
  family is orthonormal);
* ``r_n`` is a tent peaking at the segment midpoint ``q_n``.

The potential is ``k0(x, y) = u(x) u(y)`` with ``u = sum_{n>=2} delta_n r_n``
(zero on ``[0, 1/2]``), the first kernel is ``k1 == 1`` with coupling
``gamma >= 2/3``, and the second kernel is
``k2(y, t) = sum_n (2/3)**n phi_n(y) phi_n(t)``.  Both infinite sums are
truncated: ``M`` tents and ``N`` kernel terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .operators import (
    KERNEL_X,
    KERNEL_Y,
    AxisSpec,
    ModelSpec,
    constant_kernel,
    product_potential,
    rank_sum_kernel,
)
from .quadrature import DEFAULT_ORDER

GAMMA_MIN = 2.0 / 3.0
KERNEL_RATIO = 2.0 / 3.0
DELTA_RATIO = math.sqrt(2.0) / 3.0


def p(n: int) -> float:
    if n < 0:
        raise ValueError(f"breakpoint index must be >= 0, got {n}")
    return 1.0 - 2.0 ** (-n)


def q(n: int) -> float:
    """Midpoint of ``[p_{n-1}, p_n]``."""
    if n < 1:
        raise ValueError(f"tent index must be >= 1, got {n}")
    return 0.5 * (p(n - 1) + p(n))


def breakpoints(n: int) -> tuple[float, Optional[float]]:
    """``(p_n, q_n)``; ``q_0`` does not exist and is returned as ``None``."""
    return p(n), (q(n) if n >= 1 else None)


def tent(kappa: int, x) -> np.ndarray:
    """Piecewise-linear bump: 0 at ``p_{kappa-1}`` and ``p_kappa``, 1 at ``q_kappa``."""
    x = np.asarray(x, dtype=float)
    a, m, b = p(kappa - 1), q(kappa), p(kappa)
    if not a < m < b:
        return np.zeros_like(x)
    up = (x - a) / (m - a)
    down = (b - x) / (b - m)
    return np.where((x >= a) & (x <= b), np.minimum(up, down), 0.0)


def phi(n: int, y) -> np.ndarray:
    """``2**((n+1)/2) sin(pi (y - p_{n-1}) / (p_n - p_{n-1}))`` on its segment, else 0."""
    if n < 1:
        raise ValueError(f"phi index must be >= 1, got {n}")
    y = np.asarray(y, dtype=float)
    a, b = p(n - 1), p(n)
    if b <= a:
        # segment narrower than float resolution near 1
        return np.zeros_like(y)
    inside = (y >= a) & (y <= b)
    return np.where(inside, 2.0 ** ((n + 1) / 2) * np.sin(np.pi * (y - a) / (b - a)), 0.0)


def default_delta(n: int) -> float:
    return 1.0 if n == 1 else DELTA_RATIO**n


def analytic_T_eigenvalue(n: int, gamma: float) -> float:
    """Eigenvalue of ``gamma T1 + T2`` on ``1 (x) phi_n``."""
    if n < 1:
        raise ValueError(f"index must be >= 1, got {n}")
    return gamma + KERNEL_RATIO**n


@dataclass(frozen=True)
class Example5Params:
    """Truncation and coupling parameters of the example model.

    ``infinite_series`` records that the ``N`` kernel terms truncate the
    infinite series; set it to ``False`` for a genuinely rank-``N`` kernel.
    """

    M: int = 4
    N: int = 4
    gamma: float = GAMMA_MIN
    delta: Optional[Callable[[int], float]] = None
    g: int = DEFAULT_ORDER
    infinite_series: bool = True

    def __post_init__(self):
        if not (self.gamma >= GAMMA_MIN - 1e-12):
            raise ValueError(f"gamma = {self.gamma} violates the model constraint gamma >= 2/3")
        if self.M < 2:
            raise ValueError(f"potential truncation M must be >= 2, got {self.M}")
        if self.N < 1:
            raise ValueError(f"kernel truncation N must be >= 1, got {self.N}")
        if self.g < 1:
            raise ValueError(f"quadrature order g must be >= 1, got {self.g}")
        for n in range(2, self.M + 1):
            d = self.delta_n(n)
            if d < 0 or d > DELTA_RATIO**n * (1 + 1e-12):
                raise ValueError(f"delta_{n} = {d} outside [0, (sqrt(2)/3)^{n}]")

    def delta_n(self, n: int) -> float:
        return float(self.delta(n)) if self.delta is not None else default_delta(n)

    @property
    def depth(self) -> int:
        return max(self.M, self.N)


def potential_u(x, params: Example5Params) -> np.ndarray:
    """``sum_{n=2..M} delta_n r_n(x)``; identically 0 on ``[0, 1/2]``."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)):
        raise ValueError("u is defined on [0, 1] only")
    out = np.zeros_like(x)
    for n in range(2, params.M + 1):
        out = out + params.delta_n(n) * tent(n, x)
    return out


def kernel_k2(y, t, params: Example5Params) -> np.ndarray:
    y, t = np.asarray(y, dtype=float), np.asarray(t, dtype=float)
    out = np.zeros(np.broadcast(y, t).shape)
    for n in range(1, params.N + 1):
        out = out + KERNEL_RATIO**n * phi(n, y) * phi(n, t)
    return out


def _segment_index(y: np.ndarray) -> np.ndarray:
    # n with y in [p_{n-1}, p_n); y = 1 maps to a huge index whose term vanishes
    with np.errstate(divide="ignore"):
        n = np.floor(-np.log2(np.maximum(1.0 - y, 1e-300))) + 1
    return n.astype(np.int64)


def k2_tail_bound(y, t, params: Example5Params) -> np.ndarray:
    """Pointwise size of the omitted terms of the kernel series.

    The supports of the ``phi_n`` are disjoint, so at any ``(y, t)`` at most
    one term is nonzero; the tail is that term when its index exceeds ``N``
    and 0 otherwise.  A uniform bound does not help here because
    ``sup |phi_n|**2`` grows like ``2**n``.
    """
    y, t = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(t, dtype=float))
    ny, nt = _segment_index(y), _segment_index(t)
    out = np.zeros(y.shape)
    mask = (ny == nt) & (ny > params.N) & (ny <= 53)
    for n in np.unique(ny[mask]):
        sel = mask & (ny == n)
        out[sel] = np.abs(KERNEL_RATIO ** int(n) * phi(int(n), y[sel]) * phi(int(n), t[sel]))
    return out


def grid_breakpoints(depth: int) -> tuple[float, ...]:
    """``p_0..p_depth`` and the midpoints ``q_1..q_depth``, plus 1."""
    pts = [p(n) for n in range(depth + 1)] + [q(n) for n in range(1, depth + 1)] + [1.0]
    return tuple(sorted(pts))


def example_model(params: Example5Params) -> ModelSpec:
    u = lambda x: potential_u(x, params)  # noqa: E731
    k0 = product_potential(u, u, name="u(x)u(y)")
    k1 = constant_kernel(KERNEL_X, 1.0)
    terms = [(KERNEL_RATIO**n, _phi_factory(n)) for n in range(1, params.N + 1)]
    k2 = rank_sum_kernel(
        KERNEL_Y,
        terms,
        infinite_rank=params.infinite_series,
        tail_bound=lambda y, t: k2_tail_bound(y, t, params),
        name=f"k2[N={params.N}]",
    )
    axis = AxisSpec((0.0, 1.0), grid_breakpoints(params.depth), params.g)
    return ModelSpec(k0, k1, k2, gamma=float(params.gamma), x_axis=axis, y_axis=axis, name="example5")


def _phi_factory(n: int) -> Callable[[np.ndarray], np.ndarray]:
    return lambda y: phi(n, y)


def phi_family(indices) -> list[Callable[[np.ndarray], np.ndarray]]:
    return [_phi_factory(n) for n in indices]
