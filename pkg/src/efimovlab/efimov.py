"""Essential edge, finiteness test, sufficient conditions and bound-state counting.

The essential spectrum of ``H = H0 - T1 - T2`` is the union of the spectra
of ``H0``, ``W1 = H0 - T1`` and ``W2 = H0 - T2``.  ``W1`` acts pointwise in
``y``, so its spectrum is the closure of the union of the spectra of the
fiber operators ``k0(., y) - K1`` and is computed by a sweep over the
``y`` nodes; ``W2`` likewise over ``x``.  Discretizing ``W1`` on the full
product grid would instead produce spurious isolated eigenvalues.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .hubbard import Example5Params, example_model
from .operators import (
    DEFAULT_DENSE_CAP,
    ModelSpec,
    SymmetricOperator,
    assemble_components,
    assemble_H,
    discretize_kernel,
    quadratic_form,
)
from .spectra import SpectralSet, edge_tolerance, lowest_eigenpairs, tensor_spectrum

log = logging.getLogger(__name__)

EDGE_TIE_TOL = 1e-9
ORTHONORMAL_TOL = 1e-8
PREMISE_TOL = 1e-10
DISCRETE_EIG_TOL = 1e-10
GAP_SHRINK_FACTOR = 1.2

FINITE = "finite-spectrum-predicted"
EFIMOV_POSSIBLE = "efimov-possible"
PREMISE_VIOLATED = "premise-violated"

SUFFICIENT = "efimov-sufficient"
TAIL_SUFFICIENT = "tail-sufficient"
NOT_ESTABLISHED = "not-established"

CONSISTENT = "accumulation consistent"
NO_ACCUMULATION = "no accumulation"
INCONSISTENT = "inconsistent"


def worker_count() -> int:
    """Worker threads for independent sweeps; ``EFIMOV_THREADS`` caps it."""
    env = os.environ.get("EFIMOV_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer EFIMOV_THREADS=%r", env)
    return 1


def _ordered_map(fn, items):
    items = list(items)
    workers = worker_count()
    if workers == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# essential edge
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EssentialEdgeReport:
    sigma_H0_range: tuple[float, float]
    w1_fiber_minima: np.ndarray  # indexed by y node
    w2_fiber_minima: np.ndarray  # indexed by x node
    Lambda: float
    attained_by: str
    fiber_index: Optional[int]
    components_at_edge: tuple[str, ...]
    w1_fiber_spectra: Optional[np.ndarray] = field(default=None, repr=False)
    w2_fiber_spectra: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def Lambda_W1(self) -> float:
        return float(self.w1_fiber_minima.min())

    @property
    def Lambda_W2(self) -> float:
        return float(self.w2_fiber_minima.min())

    def to_dict(self) -> dict:
        return {
            "Lambda": self.Lambda,
            "attained_by": self.attained_by,
            "fiber_index": self.fiber_index,
            "components_at_edge": list(self.components_at_edge),
            "sigma_H0_range": list(self.sigma_H0_range),
            "E_min_W1": self.Lambda_W1,
            "E_min_W2": self.Lambda_W2,
        }


def essential_edge(spec: ModelSpec, *, keep_spectra: bool = False) -> EssentialEdgeReport:
    """Lower edge of the essential spectrum by fiber sweeps."""
    g2 = spec.grid
    X, Y = g2.mesh()
    k0 = spec.k0(X, Y)  # (nx, ny)
    M1 = spec.gamma * discretize_kernel(spec.k1, g2.gx).matrix
    M2 = discretize_kernel(spec.k2, g2.gy).matrix

    def w1_fiber(j):
        return scipy.linalg.eigh(np.diag(k0[:, j]) - M1, eigvals_only=True)

    def w2_fiber(i):
        return scipy.linalg.eigh(np.diag(k0[i, :]) - M2, eigvals_only=True)

    s1 = np.array(_ordered_map(w1_fiber, range(g2.gy.size)))
    s2 = np.array(_ordered_map(w2_fiber, range(g2.gx.size)))
    m1, m2 = s1[:, 0], s2[:, 0]
    h0_min, h0_max = float(k0.min()), float(k0.max())

    candidates = [("W1", float(m1.min()), int(m1.argmin())), ("W2", float(m2.min()), int(m2.argmin())), ("H0", h0_min, None)]
    Lambda = min(c[1] for c in candidates)
    at_edge = tuple(name for name, val, _ in candidates if val <= Lambda + EDGE_TIE_TOL)
    name, _, idx = next(c for c in candidates if c[0] == at_edge[0])
    return EssentialEdgeReport(
        sigma_H0_range=(h0_min, h0_max),
        w1_fiber_minima=m1,
        w2_fiber_minima=m2,
        Lambda=Lambda,
        attained_by=name,
        fiber_index=idx,
        components_at_edge=at_edge,
        w1_fiber_spectra=s1 if keep_spectra else None,
        w2_fiber_spectra=s2 if keep_spectra else None,
    )


# --------------------------------------------------------------------------
# sup of the essential spectrum of T, finiteness test
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Eta0:
    value: float
    sd1: tuple[float, ...]
    sd2: tuple[float, ...]
    source: str  # "rank" or "discretized"


def _discrete_spectrum(kernel, scale: float, grid, n_terms: Optional[int]) -> tuple[tuple[float, ...], str]:
    if kernel.rank_terms is not None:
        vals = [scale * c for c in kernel.coefficients(n_terms)]
        source = "rank"
    else:
        w = np.linalg.eigvalsh(scale * discretize_kernel(kernel, grid).matrix)
        vals = list(w)
        source = "discretized"
    return tuple(sorted(v for v in vals if abs(v) > DISCRETE_EIG_TOL)), source


def eta0(spec: ModelSpec, N: Optional[int] = None) -> Eta0:
    """Supremum of the essential spectrum of ``T = gamma T1 + T2``.

    ``N`` truncates the rank structure of both kernels to their first ``N``
    terms.  Kernels without rank structure are discretized and their
    eigenvalues with ``|lambda| > 1e-10`` taken as the discrete spectrum.
    """
    sd1, src1 = _discrete_spectrum(spec.k1, spec.gamma, spec.grid.gx, N)
    sd2, src2 = _discrete_spectrum(spec.k2, 1.0, spec.grid.gy, N)
    value = max([0.0, *sd1, *sd2])
    source = "rank" if src1 == src2 == "rank" else "discretized"
    return Eta0(value, sd1, sd2, source)


@dataclass(frozen=True)
class FinitenessReport:
    verdict: str
    Lambda: float
    eta0: float
    premise_margin: float  # min over nodes of k0 - (Lambda + eta0)
    premise_holds: bool
    sigma_d_T: tuple[float, ...]
    sigma_d_T_infinite: bool
    negative_part_size: int  # eigenvalues of eta0 - T below 0 at this truncation
    growth: tuple[int, ...] = ()  # |sigma_d(T)| at truncations 1..N when infinite

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "Lambda": self.Lambda,
            "eta0": self.eta0,
            "premise_margin": self.premise_margin,
            "premise_holds": self.premise_holds,
            "sigma_d_T": list(self.sigma_d_T),
            "sigma_d_T_infinite": self.sigma_d_T_infinite,
            "negative_part_size": self.negative_part_size,
            "growth": list(self.growth),
        }


def finiteness_test(spec: ModelSpec, edge: Optional[EssentialEdgeReport] = None) -> FinitenessReport:
    """Premise ``H0 >= E_min(H) + eta0`` and finiteness of the discrete spectrum of ``T``.

    Verdicts: finite-spectrum-predicted (premise holds, finite discrete
    spectrum of T, hence finitely many bound states); efimov-possible
    (premise holds and T has infinite discrete spectrum, the necessary
    condition for accumulation); premise-violated (the result says nothing).
    """
    edge = edge or essential_edge(spec)
    e = eta0(spec)
    X, Y = spec.grid.mesh()
    margin = float((spec.k0(X, Y) - (edge.Lambda + e.value)).min())
    holds = margin >= -PREMISE_TOL
    ts = tensor_spectrum(e.sd1, e.sd2)
    infinite = bool(spec.k1.infinite_rank or spec.k2.infinite_rank)
    growth: tuple[int, ...] = ()
    if infinite:
        depth = max(len(e.sd1), len(e.sd2))
        growth = tuple(
            len(
                tensor_spectrum(
                    _truncate(spec.k1, spec.gamma, n) if spec.k1.infinite_rank else e.sd1,
                    _truncate(spec.k2, 1.0, n) if spec.k2.infinite_rank else e.sd2,
                ).discrete
            )
            for n in range(1, depth + 1)
        )
    negative = sum(1 for w in ts.discrete if e.value - w < 0)
    if not holds:
        verdict = PREMISE_VIOLATED
    elif infinite:
        verdict = EFIMOV_POSSIBLE
    else:
        verdict = FINITE
    return FinitenessReport(
        verdict, edge.Lambda, e.value, margin, holds, ts.discrete.points, infinite, negative, growth
    )


def _truncate(kernel, scale, n):
    return tuple(v for v in (scale * c for c in kernel.coefficients(n)) if abs(v) > DISCRETE_EIG_TOL)


# --------------------------------------------------------------------------
# sufficient conditions
# --------------------------------------------------------------------------


class EdgeComponentError(ValueError):
    """The essential edge is not attained by the component a check requires."""


@dataclass(frozen=True)
class ConditionRow:
    kappa: int
    lhs: float
    rhs: float
    margin: float
    passed: bool


@dataclass(frozen=True)
class ConditionReport:
    component: str  # "W1" (family on the second axis) or "W2" (family on the first)
    Lambda: float
    Lambda_component: float
    rows: tuple[ConditionRow, ...]
    verdict: str
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "component": self.component,
            "Lambda": self.Lambda,
            "Lambda_component": self.Lambda_component,
            "verdict": self.verdict,
            "rows": [vars(r) for r in self.rows],
            "notes": list(self.notes),
        }


def _check_orthonormal(vectors: np.ndarray) -> None:
    gram = vectors.T @ vectors
    err = float(np.max(np.abs(gram - np.eye(gram.shape[0])))) if gram.size else 0.0
    if err > ORTHONORMAL_TOL:
        raise ValueError(f"family is not orthonormal on the grid (max Gram defect {err:.3e})")


def _verdict(rows: Sequence[ConditionRow]) -> str:
    passed = [r.passed for r in rows]
    if passed and all(passed):
        return SUFFICIENT
    # finitely many failing members can be dropped from an infinite family,
    # so a passing suffix of at least two rows still points to sufficiency
    last_fail = max(i for i, ok in enumerate(passed) if not ok)
    if len(passed) - 1 - last_fail >= 2:
        return TAIL_SUFFICIENT
    return NOT_ESTABLISHED


def _condition_check(
    spec: ModelSpec,
    family: Sequence[Callable],
    kappas: Optional[Sequence[int]],
    component: str,
    strict: bool,
    edge: Optional[EssentialEdgeReport],
) -> ConditionReport:
    if not family:
        raise ValueError("empty family")
    kappas = list(kappas) if kappas is not None else list(range(1, len(family) + 1))
    if len(kappas) != len(family):
        raise ValueError("kappas and family differ in length")
    edge = edge or essential_edge(spec)
    g2 = spec.grid
    notes = []

    if component == "W1":
        fam_grid, const_grid = g2.gy, g2.gx
        lam_c = edge.Lambda_W1
        other = edge.Lambda_W2
    else:
        fam_grid, const_grid = g2.gx, g2.gy
        lam_c = edge.Lambda_W2
        other = edge.Lambda_W1
    if not (abs(edge.Lambda - lam_c) <= EDGE_TIE_TOL and lam_c <= other + EDGE_TIE_TOL):
        msg = (
            f"essential edge {edge.Lambda:.12g} is attained by {edge.attained_by}, "
            f"not by {component} (E_min({component}) = {lam_c:.12g})"
        )
        if strict:
            raise EdgeComponentError(msg)
        notes.append(msg)

    vecs = np.column_stack([fam_grid.sample(f) for f in family])
    _check_orthonormal(vecs)
    const = const_grid.sample(lambda s: np.full(np.shape(s), 1.0 / np.sqrt(const_grid.measure)))

    parts = assemble_components(spec)
    if component == "W1":
        W, T_other = parts.W1, parts.T2
    else:
        W, T_other = parts.W2, parts.T1

    rows = []
    for kappa, v in zip(kappas, vecs.T):
        f = np.outer(const, v).ravel() if component == "W1" else np.outer(v, const).ravel()
        lhs = quadratic_form(W, f)
        rhs = lam_c + quadratic_form(T_other, f)
        margin = rhs - lhs
        rows.append(ConditionRow(int(kappa), lhs, rhs, margin, margin > 0))
    return ConditionReport(component, edge.Lambda, lam_c, tuple(rows), _verdict(rows), tuple(notes))


def check_w1_condition(
    spec: ModelSpec,
    family: Sequence[Callable],
    kappas: Optional[Sequence[int]] = None,
    *,
    strict: bool = True,
    edge: Optional[EssentialEdgeReport] = None,
) -> ConditionReport:
    """Test ``(W1 f_k, f_k) < Lambda_1 + (T2 f_k, f_k)`` with ``f_k = 1 (x) phi_k``.

    ``family`` is a list of functions on the second axis, orthonormal on the
    grid.  Requires the essential edge to be ``E_min(W1) <= E_min(W2)``;
    with ``strict=False`` a violation is recorded in ``notes`` instead.
    """
    return _condition_check(spec, family, kappas, "W1", strict, edge)


def check_w2_condition(
    spec: ModelSpec,
    family: Sequence[Callable],
    kappas: Optional[Sequence[int]] = None,
    *,
    strict: bool = True,
    edge: Optional[EssentialEdgeReport] = None,
) -> ConditionReport:
    """Mirror image of :func:`check_w1_condition` with ``f_k = phi_k (x) 1``."""
    return _condition_check(spec, family, kappas, "W2", strict, edge)


# --------------------------------------------------------------------------
# counting bound states
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CountResult:
    count: int
    below: tuple[float, ...]
    smallest: tuple[float, ...]
    method: str


def count_below(
    op: SymmetricOperator,
    Lambda: float,
    tol: Optional[float] = None,
    *,
    dense_cap: Optional[int] = DEFAULT_DENSE_CAP,
    seed: int = 0,
    n_smallest: int = 5,
) -> CountResult:
    """Eigenvalues below ``Lambda - tol``, densely when ``op.dim <= dense_cap``."""
    if tol is None:
        tol = edge_tolerance(Lambda)
    bound = Lambda - tol
    if op.matrix is not None or dense_cap is None or op.dim <= dense_cap:
        w = scipy.linalg.eigh(op.to_dense(dense_cap), eigvals_only=True)
        method = "dense"
    else:
        m = min(op.dim, max(n_smallest, 8))
        while True:
            w = lowest_eigenpairs(op, m, tol=1e-9, seed=seed).values
            if w[-1] >= bound or m == op.dim:
                break
            m = min(op.dim, 2 * m)
        method = "lanczos"
    below = tuple(float(v) for v in w[w < bound])
    return CountResult(len(below), below, tuple(float(v) for v in w[:n_smallest]), method)


# --------------------------------------------------------------------------
# accumulation study
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScheduleRow:
    M: int
    N: int
    g: int

    @property
    def label(self) -> str:
        return f"M={self.M},N={self.N},g={self.g}"


@dataclass(frozen=True)
class AccumulationRow:
    label: str
    M: int
    N: int
    g: int
    nx: int
    ny: int
    Lambda: float
    count: int
    gap: Optional[float]  # Lambda - largest eigenvalue below it
    smallest: tuple[float, ...]
    method: str


@dataclass(frozen=True)
class AccumulationTable:
    rows: tuple[AccumulationRow, ...]
    verdict: str
    skipped: tuple[str, ...] = ()

    HEADER = ("label", "M", "N", "g", "nx", "ny", "Lambda", "count", "gap", "e1", "e2", "e3", "e4", "e5", "method")

    def records(self) -> list[tuple]:
        out = []
        for r in self.rows:
            sm = list(r.smallest) + [None] * (5 - len(r.smallest))
            out.append((r.label, r.M, r.N, r.g, r.nx, r.ny, r.Lambda, r.count, r.gap, *sm[:5], r.method))
        return out

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "skipped": list(self.skipped), "rows": [vars(r) for r in self.rows]}


def _as_schedule(schedule) -> list[ScheduleRow]:
    rows = [r if isinstance(r, ScheduleRow) else ScheduleRow(*r) for r in schedule]
    if not rows:
        raise ValueError("empty schedule")
    keys = [(r.N, r.M, r.g) for r in rows]
    if any(b <= a for a, b in zip(keys, keys[1:])):
        raise ValueError("schedule must strictly refine: increasing N, or equal N with increasing M or g")
    return rows


def accumulation_verdict(rows: Sequence[AccumulationRow]) -> str:
    counts = [r.count for r in rows]
    if all(c == 0 for c in counts):
        return NO_ACCUMULATION
    if any(b < a for a, b in zip(counts, counts[1:])):
        return INCONSISTENT
    gaps = [r.gap for r in rows]
    if any(gp is None for gp in gaps):
        return INCONSISTENT
    if len(gaps) < 2 or any(a < GAP_SHRINK_FACTOR * b for a, b in zip(gaps, gaps[1:])):
        return INCONSISTENT
    return CONSISTENT


def accumulation_study(
    model: Union[Example5Params, Callable[[ScheduleRow], ModelSpec]],
    schedule,
    *,
    dense_cap: Optional[int] = DEFAULT_DENSE_CAP,
    iterative: bool = True,
    seed: int = 0,
    tol: Optional[float] = None,
) -> AccumulationTable:
    """Bound-state counts and edge gaps along a refinement schedule.

    ``model`` is either example parameters (rows override ``M``, ``N``,
    ``g``) or a factory building a model for each row.  Rows above the
    dense cap use the Lanczos path, or are skipped when ``iterative`` is
    false.
    """
    rows = _as_schedule(schedule)
    if isinstance(model, Example5Params):
        base = model
        factory = lambda r: example_model(replace(base, M=r.M, N=r.N, g=r.g))  # noqa: E731
    else:
        factory = model

    out, skipped = [], []
    for r in rows:
        spec = factory(r)
        too_big = dense_cap is not None and spec.size > dense_cap
        if too_big and not iterative:
            msg = f"{r.label}: dimension {spec.size} exceeds dense cap {dense_cap}; row skipped"
            log.warning(msg)
            skipped.append(msg)
            continue
        edge = essential_edge(spec)
        H = assemble_H(spec, dense=not too_big, dense_cap=dense_cap)
        res = count_below(H, edge.Lambda, tol, dense_cap=dense_cap, seed=seed)
        gap = edge.Lambda - res.below[-1] if res.count else None
        nx, ny = spec.grid.shape
        out.append(
            AccumulationRow(r.label, r.M, r.N, r.g, nx, ny, edge.Lambda, res.count, gap, res.smallest, res.method)
        )
        log.info("%s: %d below edge %.12g, gap %s", r.label, res.count, edge.Lambda, gap)
    return AccumulationTable(tuple(out), accumulation_verdict(out), tuple(skipped))
