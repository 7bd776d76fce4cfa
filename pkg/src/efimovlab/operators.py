"""Discretized operators on L2 of a rectangle.

All matrices live in *symmetrized* coordinates: a function ``f`` on a grid
is represented by ``sqrt(w) * f(nodes)``, so the Euclidean inner product of
two coordinate vectors approximates the L2 inner product of the functions,
and the weighted Nystrom matrix ``k(x_i, x_j) w_j`` becomes the symmetric
``sqrt(w_i) k(x_i, x_j) sqrt(w_j)`` with the same spectrum.

Two-dimensional operators are kept in the structured form

    diag(d) + X (x) I + I (x) Y

which covers the multiplication operator, both partial integral operators
and every combination of them.  ``to_dense`` materializes the matrix on
request, subject to a size cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .quadrature import DEFAULT_ORDER, Grid1D, Grid2D, build_grid, product_grid

DEFAULT_DENSE_CAP = 6400
SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10
ZERO_SET_TOL = 1e-8

KERNEL_X = "kernel-x"
KERNEL_Y = "kernel-y"
POTENTIAL = "potential"
_KINDS = (KERNEL_X, KERNEL_Y, POTENTIAL)


class DenseCapError(ValueError):
    """Raised when a dense matrix larger than the configured cap is requested."""


def _eval2(fn: Callable, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    vals = np.broadcast_to(np.asarray(fn(a, b), dtype=float), np.broadcast(a, b).shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("kernel evaluation produced NaN or infinity")
    return vals


# --------------------------------------------------------------------------
# kernels and models
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A kernel ``k(s, t)`` on one axis, or a potential ``k0(x, y)``.

    ``rank_terms`` optionally lists ``(coefficient, factor)`` pairs with
    ``k(s, t) = sum_n c_n e_n(s) e_n(t)`` for orthonormal ``e_n``.  When
    ``infinite_rank`` is set the listed terms are a truncation of an
    infinite series, and ``tail_bound(s, t)`` (if given) bounds the
    pointwise truncation error.
    """

    kind: str
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    symmetric: bool = True
    rank_terms: Optional[tuple[tuple[float, Callable[[np.ndarray], np.ndarray]], ...]] = None
    infinite_rank: bool = False
    tail_bound: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind == POTENTIAL and self.rank_terms is not None:
            raise ValueError("a potential carries no rank structure")

    def __call__(self, s, t):
        return _eval2(self.evaluator, np.asarray(s, dtype=float), np.asarray(t, dtype=float))

    @property
    def is_kernel(self) -> bool:
        return self.kind != POTENTIAL

    def coefficients(self, n_terms: Optional[int] = None) -> list[float]:
        if self.rank_terms is None:
            raise ValueError(f"kernel {self.name or '<anonymous>'} has no rank structure")
        terms = self.rank_terms if n_terms is None else self.rank_terms[:n_terms]
        return [float(c) for c, _ in terms]

    def symmetry_defect(self, points: np.ndarray) -> float:
        """Largest ``|k(s, t) - k(t, s)|`` over all pairs of ``points``."""
        if not self.is_kernel:
            return 0.0
        S, T = np.meshgrid(points, points, indexing="ij")
        return float(np.max(np.abs(self(S, T) - self(T, S))))

    def rank_defect(self, points: np.ndarray) -> float:
        """Largest excess of ``|k - sum c_n e_n e_n|`` over the declared tail bound."""
        if self.rank_terms is None:
            return 0.0
        S, T = np.meshgrid(points, points, indexing="ij")
        approx = np.zeros_like(S)
        for c, e in self.rank_terms:
            approx += c * np.asarray(e(S), dtype=float) * np.asarray(e(T), dtype=float)
        err = np.abs(self(S, T) - approx)
        if self.tail_bound is not None:
            err = err - _eval2(self.tail_bound, S, T)
        return float(max(np.max(err), 0.0))


def zero_kernel(kind: str) -> KernelSpec:
    rank = () if kind != POTENTIAL else None
    return KernelSpec(kind, lambda s, t: 0.0, rank_terms=rank, name="zero")


def constant_kernel(kind: str, value: float, domain: Sequence[float] = (0.0, 1.0)) -> KernelSpec:
    """``k == value``; on ``[a, b]`` this is ``value * (b-a)`` times the projection onto constants."""
    value = float(value)
    if kind == POTENTIAL:
        return KernelSpec(kind, lambda s, t: value, name=f"constant({value:g})")
    a, b = domain
    length = b - a
    e0 = _constant_function(1.0 / np.sqrt(length))
    return KernelSpec(
        kind,
        lambda s, t: value,
        rank_terms=((value * length, e0),),
        name=f"constant({value:g})",
    )


def _constant_function(c: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.full(np.shape(x), c)


def rank_sum_kernel(
    kind: str,
    terms: Sequence[tuple[float, Callable[[np.ndarray], np.ndarray]]],
    *,
    infinite_rank: bool = False,
    tail_bound: Optional[Callable] = None,
    name: str = "rank-sum",
) -> KernelSpec:
    terms = tuple((float(c), e) for c, e in terms)

    def evaluator(s, t):
        out = np.zeros(np.broadcast(s, t).shape)
        for c, e in terms:
            out = out + c * np.asarray(e(s), dtype=float) * np.asarray(e(t), dtype=float)
        return out

    return KernelSpec(
        kind, evaluator, rank_terms=terms, infinite_rank=infinite_rank, tail_bound=tail_bound, name=name
    )


def product_potential(u: Callable, v: Callable, name: str = "product") -> KernelSpec:
    return KernelSpec(
        POTENTIAL,
        lambda x, y: np.asarray(u(x), dtype=float) * np.asarray(v(y), dtype=float),
        name=name,
    )


@dataclass(frozen=True)
class AxisSpec:
    domain: tuple[float, float] = (0.0, 1.0)
    breakpoints: tuple[float, ...] = ()
    g: int = DEFAULT_ORDER

    def grid(self) -> Grid1D:
        return build_grid(self.domain, self.breakpoints, self.g)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """One instance of ``H = H0 - (gamma T1 + T2)``."""

    k0: KernelSpec
    k1: KernelSpec
    k2: KernelSpec
    gamma: float = 1.0
    x_axis: AxisSpec = field(default_factory=AxisSpec)
    y_axis: AxisSpec = field(default_factory=AxisSpec)
    name: str = ""

    def __post_init__(self):
        if self.k0.kind != POTENTIAL:
            raise ValueError("k0 must be a potential")
        if not self.k1.is_kernel or not self.k2.is_kernel:
            raise ValueError("k1 and k2 must be kernels")
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError(f"coupling gamma must be a finite nonnegative number, got {self.gamma}")

    @cached_property
    def grid(self) -> Grid2D:
        return product_grid(self.x_axis.grid(), self.y_axis.grid())

    @property
    def size(self) -> int:
        return self.grid.size

    def with_order(self, g: int) -> "ModelSpec":
        return replace(self, x_axis=replace(self.x_axis, g=g), y_axis=replace(self.y_axis, g=g))

    def shifted(self, c: float) -> "ModelSpec":
        """Same model with ``H`` replaced by ``H + c``."""
        k0 = self.k0
        return replace(
            self,
            k0=KernelSpec(POTENTIAL, lambda x, y: k0(x, y) + c, name=f"{k0.name}+{c:g}"),
        )

    def assumptions(self) -> dict:
        """Standing hypotheses checked at grid nodes.

        A zero of ``k0`` strictly between nodes cannot be detected, so
        ``k0_zero_set_nonempty`` only reports whether some node value is
        within 1e-8 of zero.
        """
        X, Y = self.grid.mesh()
        k0 = self.k0(X, Y)
        m1 = discretize_kernel(self.k1, self.grid.gx).matrix
        m2 = discretize_kernel(self.k2, self.grid.gy).matrix
        min1 = float(np.linalg.eigvalsh(m1)[0])
        min2 = float(np.linalg.eigvalsh(m2)[0])
        return {
            "k0_nonnegative": bool(k0.min() >= -ZERO_SET_TOL),
            "k0_zero_set_nonempty": bool(np.abs(k0).min() <= ZERO_SET_TOL),
            "k0_min_node_value": float(k0.min()),
            "K1_psd": min1 >= -PSD_TOL,
            "K2_psd": min2 >= -PSD_TOL,
            "K1_min_eigenvalue": min1,
            "K2_min_eigenvalue": min2,
            "zero_set_checked_at_nodes_only": True,
        }


# --------------------------------------------------------------------------
# operators
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SymmetricOperator:
    """Real symmetric operator in symmetrized coordinates.

    Either ``matrix`` is set (1-D roles, or 2-D roles materialized on
    request) or the structured parts ``diag``, ``x_block``, ``y_block`` on
    a ``shape2 = (nx, ny)`` product grid are.  Structured operators may
    carry a materialized ``matrix`` as well.
    """

    role: str
    dim: int
    matrix: Optional[np.ndarray] = None
    diag: Optional[np.ndarray] = None
    x_block: Optional[np.ndarray] = None
    y_block: Optional[np.ndarray] = None
    shape2: Optional[tuple[int, int]] = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_matrix(cls, role: str, matrix: np.ndarray, **meta) -> "SymmetricOperator":
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
        return cls(role, matrix.shape[0], matrix=matrix, meta=dict(meta))

    @classmethod
    def structured(
        cls,
        role: str,
        shape2: tuple[int, int],
        diag=None,
        x_block=None,
        y_block=None,
        **meta,
    ) -> "SymmetricOperator":
        nx, ny = shape2
        if diag is not None and np.shape(diag) != (nx * ny,):
            raise ValueError(f"diagonal has shape {np.shape(diag)}, expected ({nx * ny},)")
        if x_block is not None and np.shape(x_block) != (nx, nx):
            raise ValueError(f"x block has shape {np.shape(x_block)}, expected ({nx}, {nx})")
        if y_block is not None and np.shape(y_block) != (ny, ny):
            raise ValueError(f"y block has shape {np.shape(y_block)}, expected ({ny}, {ny})")
        return cls(role, nx * ny, diag=diag, x_block=x_block, y_block=y_block, shape2=(nx, ny), meta=dict(meta))

    @property
    def is_structured(self) -> bool:
        return self.shape2 is not None

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.dim:
            raise ValueError(f"vector of length {v.shape[0]} does not match dimension {self.dim}")
        if not self.is_structured:
            return self.matrix @ v
        nx, ny = self.shape2
        batch = v.shape[1:]
        V = v.reshape(nx, ny, -1)
        out = np.zeros_like(V)
        if self.diag is not None:
            out += self.diag.reshape(nx, ny, 1) * V
        if self.x_block is not None:
            out += np.einsum("ik,kjb->ijb", self.x_block, V)
        if self.y_block is not None:
            out += np.einsum("jk,ikb->ijb", self.y_block, V)
        return out.reshape((nx * ny,) + batch)

    def to_dense(self, cap: Optional[int] = DEFAULT_DENSE_CAP) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        if cap is not None and self.dim > cap:
            raise DenseCapError(
                f"dense {self.role} would have dimension {self.dim} > dense cap {cap}; "
                "raise the cap or use the iterative path"
            )
        nx, ny = self.shape2
        M = np.zeros((self.dim, self.dim))
        if self.diag is not None:
            M[np.diag_indices(self.dim)] += self.diag
        if self.x_block is not None:
            M += np.kron(self.x_block, np.eye(ny))
        if self.y_block is not None:
            M += np.kron(np.eye(nx), self.y_block)
        return M

    def materialized(self, cap: Optional[int] = DEFAULT_DENSE_CAP) -> "SymmetricOperator":
        if self.matrix is not None:
            return self
        return replace(self, matrix=self.to_dense(cap))

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator((self.dim, self.dim), matvec=self.apply, matmat=self.apply, dtype=float)

    def symmetry_defect(self) -> float:
        parts = [self.matrix, self.x_block, self.y_block]
        return max((float(np.max(np.abs(p - p.T))) for p in parts if p is not None), default=0.0)

    def shifted(self, c: float) -> "SymmetricOperator":
        """``self + c I``."""
        matrix = None if self.matrix is None else self.matrix + c * np.eye(self.dim)
        if not self.is_structured:
            return replace(self, matrix=matrix)
        diag = np.full(self.dim, float(c)) if self.diag is None else self.diag + c
        return replace(self, matrix=matrix, diag=diag)


def combine(role: str, *terms: tuple[float, SymmetricOperator]) -> SymmetricOperator:
    """Linear combination ``sum c_k A_k`` of operators of the same shape."""
    if not terms:
        raise ValueError("nothing to combine")
    dims = {op.dim for _, op in terms}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")
    if all(op.is_structured for _, op in terms):
        shapes = {op.shape2 for _, op in terms}
        if len(shapes) != 1:
            raise ValueError(f"grid shape mismatch: {sorted(shapes)}")

        def acc(attr):
            parts = [c * getattr(op, attr) for c, op in terms if getattr(op, attr) is not None]
            return sum(parts[1:], parts[0]) if parts else None

        return SymmetricOperator.structured(
            role, shapes.pop(), diag=acc("diag"), x_block=acc("x_block"), y_block=acc("y_block")
        )
    matrix = sum(c * op.to_dense(cap=None) for c, op in terms)
    return SymmetricOperator.from_matrix(role, matrix)


def discretize_kernel(k: KernelSpec, grid: Grid1D, role: str = "K") -> SymmetricOperator:
    """Symmetrized Nystrom matrix ``sqrt(w_i) k(x_i, x_j) sqrt(w_j)``."""
    if not k.is_kernel:
        raise ValueError("discretize_kernel needs a one-axis kernel, got a potential")
    x = grid.nodes
    K = k(x[:, None], x[None, :])
    sw = grid.sqrt_weights
    M = sw[:, None] * K * sw[None, :]
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    defect = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if defect > SYMMETRY_TOL * scale:
        raise ValueError(f"kernel {k.name or '<anonymous>'} is not symmetric on the grid (defect {defect:.3e})")
    M = 0.5 * (M + M.T)
    return SymmetricOperator.from_matrix(role, M, kernel=k.name, grid_size=grid.size)


def assemble_H0(k0: KernelSpec, grid2: Grid2D) -> SymmetricOperator:
    if k0.kind != POTENTIAL:
        raise ValueError("H0 needs a potential")
    X, Y = grid2.mesh()
    return SymmetricOperator.structured("H0", grid2.shape, diag=k0(X, Y).ravel().copy())


def assemble_T1(k1: KernelSpec, grid2: Grid2D, gamma: float = 1.0) -> SymmetricOperator:
    """``gamma * (M1 (x) I)``: integration over the first variable."""
    M1 = discretize_kernel(k1, grid2.gx, role="K1").matrix
    return SymmetricOperator.structured("T1", grid2.shape, x_block=gamma * M1, gamma=gamma)


def assemble_T2(k2: KernelSpec, grid2: Grid2D) -> SymmetricOperator:
    """``I (x) M2``: integration over the second variable."""
    M2 = discretize_kernel(k2, grid2.gy, role="K2").matrix
    return SymmetricOperator.structured("T2", grid2.shape, y_block=M2)


@dataclass(frozen=True, eq=False)
class Components:
    H0: SymmetricOperator
    T1: SymmetricOperator
    T2: SymmetricOperator

    @property
    def T(self) -> SymmetricOperator:
        return combine("T", (1.0, self.T1), (1.0, self.T2))

    @property
    def W1(self) -> SymmetricOperator:
        return combine("W1", (1.0, self.H0), (-1.0, self.T1))

    @property
    def W2(self) -> SymmetricOperator:
        return combine("W2", (1.0, self.H0), (-1.0, self.T2))

    @property
    def H(self) -> SymmetricOperator:
        return combine("H", (1.0, self.H0), (-1.0, self.T1), (-1.0, self.T2))


def assemble_components(spec: ModelSpec) -> Components:
    g2 = spec.grid
    return Components(
        H0=assemble_H0(spec.k0, g2),
        T1=assemble_T1(spec.k1, g2, spec.gamma),
        T2=assemble_T2(spec.k2, g2),
    )


def assemble_H(
    spec: ModelSpec, *, dense: bool = True, dense_cap: Optional[int] = DEFAULT_DENSE_CAP
) -> SymmetricOperator:
    """``H = H0 - gamma T1 - T2``.

    With ``dense=True`` the matrix is materialized and a grid larger than
    ``dense_cap`` is refused.  With ``dense=False`` only the structured
    form is built; use it with the iterative eigensolver.
    """
    parts = assemble_components(spec)
    H = parts.H
    H.meta.update(H0=parts.H0, T1=parts.T1, T2=parts.T2, spec=spec)
    if dense:
        H = H.materialized(dense_cap)
    return H


def quadratic_form(op: SymmetricOperator, v: np.ndarray) -> float:
    """Rayleigh quotient ``v.Av / v.v``."""
    v = np.asarray(v, dtype=float)
    nn = float(v @ v)
    if nn == 0.0:
        raise ValueError("quadratic form of the zero vector")
    return float(v @ op.apply(v)) / nn
