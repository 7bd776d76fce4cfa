"""Symmetric eigensolves, tensor-sum spectral arithmetic and the minimax sequence."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence, Union

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .operators import DEFAULT_DENSE_CAP, PSD_TOL, SYMMETRY_TOL, SymmetricOperator

MERGE_TOL = 1e-12
EIGENVALUE = "eigenvalue"
EDGE_SATURATED = "edge-saturated"

MatrixLike = Union[SymmetricOperator, np.ndarray]


def edge_tolerance(e_min: float) -> float:
    """Default margin below an edge for a value to count as a bound state."""
    return 1e-6 * max(1.0, abs(e_min))


def _as_matrix(op: MatrixLike, cap: Optional[int] = DEFAULT_DENSE_CAP) -> np.ndarray:
    if isinstance(op, SymmetricOperator):
        return op.to_dense(cap)
    M = np.asarray(op, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    return M


def _check_symmetric(M: np.ndarray) -> None:
    if M.shape[0] == 0:
        raise ValueError("operator has dimension 0")
    scale = max(1.0, float(np.max(np.abs(M))))
    defect = float(np.max(np.abs(M - M.T)))
    if defect > SYMMETRY_TOL * scale:
        raise ValueError(f"matrix is not symmetric (max |M - M^T| = {defect:.3e})")


# --------------------------------------------------------------------------
# spectral sets
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralSet:
    """Sorted finite multiset of reals, optionally with 0 as an essential point."""

    points: tuple[float, ...] = ()
    essential_zero: bool = False

    def __post_init__(self):
        pts = tuple(sorted(float(p) for p in self.points))
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def distinct(self, tol: float = MERGE_TOL) -> "SpectralSet":
        return SpectralSet(tuple(merge_values(self.points, tol)), self.essential_zero)

    def contains(self, value: float, tol: float = MERGE_TOL) -> bool:
        return any(abs(value - p) <= tol for p in self.points) or (self.essential_zero and abs(value) <= tol)

    @property
    def sup(self) -> float:
        vals = list(self.points) + ([0.0] if self.essential_zero else [])
        return max(vals) if vals else float("-inf")


def merge_values(values: Iterable[float], tol: float = MERGE_TOL) -> list[float]:
    """Sort and collapse runs of values closer than ``tol``."""
    out: list[float] = []
    for v in sorted(float(x) for x in values):
        if not out or v - out[-1] > tol:
            out.append(v)
    return out


def _discrete_part(sd: Union[SpectralSet, Sequence[float]], tol: float) -> list[float]:
    vals = sd.points if isinstance(sd, SpectralSet) else sd
    return merge_values((v for v in vals if abs(v) > tol), tol)


class TensorSpectrum(NamedTuple):
    sigma: SpectralSet
    essential: SpectralSet
    discrete: SpectralSet


def tensor_spectrum(sd1, sd2, tol: float = MERGE_TOL) -> TensorSpectrum:
    """Spectrum of ``K1 (x) I + I (x) K2`` from the discrete spectra of ``K1`` and ``K2``.

    Both inputs are nonzero eigenvalues of compact operators; 0 is adjoined
    to each as the essential point.  Zeros in the inputs are dropped.
    """
    a = _discrete_part(sd1, tol)
    b = _discrete_part(sd2, tol)
    full_a, full_b = [0.0] + a, [0.0] + b
    sigma = merge_values((x + y for x in full_a for y in full_b), tol)
    essential = merge_values([0.0] + a + b, tol)
    discrete = merge_values(
        s for s in (x + y for x in a for y in b) if all(abs(s - e) > tol for e in essential)
    )
    return TensorSpectrum(
        SpectralSet(tuple(sigma), essential_zero=True),
        SpectralSet(tuple(essential), essential_zero=True),
        SpectralSet(tuple(discrete)),
    )


@dataclass(frozen=True)
class CardinalityReport:
    sigma_K1: int
    sigma_K2: int
    sigma_d_K1: int
    sigma_d_K2: int
    sigma_e_T: int
    sigma_d_T: int
    lower_bound_holds: bool  # |sd(K_k)| + 1 <= |se(T)| for k = 1, 2
    upper_bound_holds: bool  # |se(T)| <= |sd(K1)| + |sd(K2)| + 1
    product_bound_holds: bool  # |sd(T)| <= |sd(K1)| |sd(K2)|

    @property
    def all_hold(self) -> bool:
        return self.lower_bound_holds and self.upper_bound_holds and self.product_bound_holds


def cardinality_checks(sd1, sd2, tol: float = MERGE_TOL) -> CardinalityReport:
    a = _discrete_part(sd1, tol)
    b = _discrete_part(sd2, tol)
    ts = tensor_spectrum(a, b, tol)
    ne, nd = len(ts.essential), len(ts.discrete)
    return CardinalityReport(
        sigma_K1=len(a) + 1,
        sigma_K2=len(b) + 1,
        sigma_d_K1=len(a),
        sigma_d_K2=len(b),
        sigma_e_T=ne,
        sigma_d_T=nd,
        lower_bound_holds=len(a) + 1 <= ne and len(b) + 1 <= ne,
        upper_bound_holds=ne <= len(a) + len(b) + 1,
        product_bound_holds=nd <= len(a) * len(b),
    )


# --------------------------------------------------------------------------
# eigensolvers
# --------------------------------------------------------------------------


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, eigenvalues=None, residuals=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues
        self.residuals = residuals


def eig_symmetric(op: MatrixLike, *, vectors: bool = True, cap: Optional[int] = DEFAULT_DENSE_CAP):
    """All eigenvalues (ascending) and, optionally, orthonormal eigenvectors."""
    M = _as_matrix(op, cap)
    _check_symmetric(M)
    if vectors:
        return scipy.linalg.eigh(M)
    return scipy.linalg.eigh(M, eigvals_only=True)


def eigenvalues_below(op: MatrixLike, bound: float, *, cap: Optional[int] = DEFAULT_DENSE_CAP) -> np.ndarray:
    """Eigenvalues strictly below ``bound``, ascending (dense path)."""
    M = _as_matrix(op, cap)
    _check_symmetric(M)
    w = scipy.linalg.eigh(M, eigvals_only=True, subset_by_value=(-np.inf, bound))
    return w[w < bound]


@dataclass(frozen=True)
class PartialEigensystem:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    method: str


def lowest_eigenpairs(
    op: MatrixLike,
    m: int,
    tol: float = 1e-10,
    *,
    seed: int = 0,
    max_iter: Optional[int] = None,
) -> PartialEigensystem:
    """The ``m`` smallest eigenpairs, iteratively when the operator is large.

    Uses implicitly restarted Lanczos (ARPACK) on the matrix-free apply,
    started from a seeded random vector, and falls back to a dense solve
    when ``m`` is within one of the dimension.  Each returned eigenvalue has
    residual at most ``tol``, which bounds its distance to the spectrum.
    """
    if isinstance(op, SymmetricOperator):
        n = op.dim
    else:
        op = SymmetricOperator.from_matrix("A", op)
        n = op.dim
    if not 1 <= m <= n:
        raise ValueError(f"requested {m} eigenpairs of a dimension-{n} operator")

    if m >= n - 1:
        w, V = eig_symmetric(op, cap=None)
        w, V = w[:m], V[:, :m]
        return PartialEigensystem(w, V, _residuals(op, w, V), "dense")

    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    try:
        w, V = eigsh(
            op.as_linear_operator(),
            k=m,
            which="SA",
            v0=v0,
            tol=0.0,
            ncv=min(n, max(2 * m + 1, m + 32)),
            maxiter=max_iter,
        )
    except ArpackNoConvergence as exc:
        res = _residuals(op, exc.eigenvalues, exc.eigenvectors) if len(exc.eigenvalues) else np.array([])
        raise NonConvergenceError(
            f"Lanczos did not converge for {m} eigenpairs; {len(exc.eigenvalues)} converged",
            eigenvalues=exc.eigenvalues,
            residuals=res,
        ) from exc
    order = np.argsort(w)
    w, V = w[order], V[:, order]
    res = _residuals(op, w, V)
    if np.any(res > tol):
        raise NonConvergenceError(
            f"Lanczos residuals above tolerance {tol:g}: max {res.max():.3e}", eigenvalues=w, residuals=res
        )
    return PartialEigensystem(w, V, res, "lanczos")


def _residuals(op: SymmetricOperator, w: np.ndarray, V: np.ndarray) -> np.ndarray:
    return np.linalg.norm(op.apply(V) - V * w, axis=0)


# --------------------------------------------------------------------------
# minimax sequence
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MinimaxResult:
    mu: tuple[float, ...]
    raw: tuple[float, ...]
    tags: tuple[str, ...]
    e_min: float
    tol: float
    minimizers: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    @property
    def n_below_edge(self) -> int:
        return self.tags.count(EIGENVALUE)


def _lowest_pair(M: np.ndarray) -> tuple[float, np.ndarray]:
    w, V = scipy.linalg.eigh(M, subset_by_index=(0, 0))
    return float(w[0]), V[:, 0]


def minimax_sequence(
    op: MatrixLike,
    n: int,
    e_min: float,
    tol: Optional[float] = None,
    *,
    method: str = "eigh",
) -> MinimaxResult:
    """First ``n`` terms of the minimax sequence with an injected essential edge.

    ``method="literal"`` runs the deflation construction step by step: each
    term minimizes the Rayleigh quotient over the orthogonal complement of
    the previous minimizers, and ``mu_n`` is the running supremum.
    ``method="eigh"`` reads the same numbers off a full eigensolve.

    A finite matrix has no essential spectrum, so ``e_min`` must come from
    outside.  Terms at or above ``e_min - tol`` are tagged edge-saturated
    and reported as ``e_min``.
    """
    M = _as_matrix(op)
    _check_symmetric(M)
    dim = M.shape[0]
    if not 1 <= n <= dim:
        raise ValueError(f"cannot take {n} minimax terms of a dimension-{dim} operator")
    if tol is None:
        tol = edge_tolerance(e_min)

    minimizers = None
    if method == "literal":
        minimizers = np.zeros((dim, n))
        steps = []
        for k in range(n):
            if k == 0:
                val, x = _lowest_pair(M)
            else:
                # orthonormal basis of the complement of the previous minimizers
                Q = np.linalg.qr(minimizers[:, :k], mode="complete")[0][:, k:]
                val, y = _lowest_pair(Q.T @ M @ Q)
                x = Q @ y
            minimizers[:, k] = x / np.linalg.norm(x)
            steps.append(val)
        raw = np.maximum.accumulate(np.array(steps))
    elif method == "eigh":
        raw = scipy.linalg.eigh(M, eigvals_only=True, subset_by_index=(0, n - 1))
    else:
        raise ValueError(f"unknown minimax method {method!r}")

    tags = []
    mu = []
    saturated = False
    for r in raw:
        saturated = saturated or not (r < e_min - tol)
        tags.append(EDGE_SATURATED if saturated else EIGENVALUE)
        mu.append(float(e_min) if saturated else float(r))
    return MinimaxResult(tuple(mu), tuple(float(r) for r in raw), tuple(tags), float(e_min), tol, minimizers)


class OrderViolation(ValueError):
    """``B - A`` is not positive semidefinite."""


@dataclass(frozen=True)
class OrderReport:
    mu_A: tuple[float, ...]
    mu_B: tuple[float, ...]
    min_eig_B_minus_A: float
    max_violation: float
    holds: bool


def check_order_monotonicity(
    A: MatrixLike,
    B: MatrixLike,
    e_min: float,
    n: int,
    *,
    method: str = "eigh",
    tol: float = 1e-10,
) -> OrderReport:
    """Compare the minimax sequences of ``A <= B`` under a shared edge."""
    MA, MB = _as_matrix(A), _as_matrix(B)
    if MA.shape != MB.shape:
        raise ValueError(f"shape mismatch {MA.shape} vs {MB.shape}")
    gap = float(scipy.linalg.eigh(MB - MA, eigvals_only=True, subset_by_index=(0, 0))[0])
    if gap < -PSD_TOL:
        raise OrderViolation(f"A is not <= B: B - A has eigenvalue {gap:.6e}")
    ra = minimax_sequence(MA, n, e_min, method=method)
    rb = minimax_sequence(MB, n, e_min, method=method)
    diff = np.array(ra.mu) - np.array(rb.mu)
    worst = float(diff.max())
    return OrderReport(ra.mu, rb.mu, gap, worst, worst <= tol)
