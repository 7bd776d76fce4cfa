"""Acceptance suite: one test per criterion, each printed as PASS/FAIL in the summary.

Tolerances and runtime budgets are the ones the criteria pin.  Run with

    pytest tests/test_acceptance.py -v
"""

import json
import time
from fractions import Fraction

import numpy as np
import pytest

from efimovlab.cli import main
from efimovlab.efimov import (
    CONSISTENT,
    FINITE,
    SUFFICIENT,
    accumulation_study,
    check_w1_condition,
    count_below,
    essential_edge,
    finiteness_test,
)
from efimovlab.hubbard import (
    DELTA_RATIO,
    KERNEL_RATIO,
    Example5Params,
    analytic_T_eigenvalue,
    example_model,
    grid_breakpoints,
    phi,
    phi_family,
)
from efimovlab.operators import assemble_components, assemble_H
from efimovlab.quadrature import build_grid, integrate
from efimovlab.spectra import EDGE_SATURATED, EIGENVALUE, cardinality_checks, check_order_monotonicity, minimax_sequence

from oracles import random_symmetric

pytestmark = pytest.mark.slow


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f} s, budget {self.seconds} s"


def ones(x):
    return np.ones_like(np.asarray(x, dtype=float))


@pytest.mark.criterion(1, "essential edge equals -gamma for gamma in {2/3, 1}")
def test_criterion_1_edge():
    with Budget(10):
        for gamma in (2 / 3, 1.0):
            edge = essential_edge(example_model(Example5Params(M=4, N=4, gamma=gamma, g=8)))
            assert abs(edge.Lambda + gamma) <= 1e-9, (gamma, edge.Lambda)


@pytest.mark.criterion(2, "closed-form eigenvalues of gamma T1 + T2")
def test_criterion_2_T_eigenvalues():
    with Budget(10):
        spec = example_model(Example5Params(M=4, N=4, gamma=2 / 3, g=8))
        T = assemble_components(spec).T
        for n in range(1, 5):
            f = spec.grid.sample_separable(ones, lambda y: phi(n, y))
            residual = np.linalg.norm(T.apply(f) - analytic_T_eigenvalue(n, 2 / 3) * f)
            assert residual <= 1e-8, (n, residual)


@pytest.mark.criterion(3, "sufficiency inequality for kappa = 2..6 with the default delta rule")
def test_criterion_3_condition():
    with Budget(30):
        spec = example_model(Example5Params(M=6, N=6, gamma=2 / 3, g=8))
        kappas = list(range(2, 7))
        rep = check_w1_condition(spec, phi_family(kappas), kappas)
        assert rep.verdict == SUFFICIENT
        for row in rep.rows:
            bound = KERNEL_RATIO**row.kappa - DELTA_RATIO**row.kappa
            assert row.passed and row.margin >= bound - 1e-8, (row.kappa, row.margin, bound)


@pytest.mark.criterion(4, "bound-state counts and edge gaps along N = 2..5")
def test_criterion_4_accumulation():
    with Budget(300):
        tab = accumulation_study(Example5Params(gamma=2 / 3, g=8), [(n, n, 8) for n in (2, 3, 4, 5)])
    counts = [r.count for r in tab.rows]
    gaps = [r.gap for r in tab.rows]
    assert len(tab.rows) == 4 and not tab.skipped
    assert counts == sorted(counts) and counts[0] >= 1
    for a, b in zip(gaps, gaps[1:]):
        assert a >= 1.2 * b, gaps
    assert all(abs(r.Lambda + 2 / 3) <= 1e-9 for r in tab.rows)
    assert tab.verdict == CONSISTENT


@pytest.mark.criterion(5, "finiteness verdict and refinement-stable count for the rank-one truncation")
def test_criterion_5_finiteness():
    with Budget(60):
        counts = []
        for g in (6, 8, 12):
            spec = example_model(Example5Params(M=4, N=1, gamma=2 / 3, g=g, infinite_series=False))
            edge = essential_edge(spec)
            rep = finiteness_test(spec, edge=edge)
            assert rep.verdict == FINITE
            H = assemble_H(spec, dense=spec.size <= 6400)
            counts.append(count_below(H, edge.Lambda).count)
    assert len(set(counts)) == 1, counts


def exact_counts(sd1, sd2):
    a = set(sd1) - {0}
    b = set(sd2) - {0}
    essential = {Fraction(0)} | a | b
    discrete = {x + y for x in a for y in b} - essential
    return len(a), len(b), len(essential), len(discrete)


@pytest.mark.criterion(6, "tensor-sum spectrum and cardinality bounds")
def test_criterion_6_tensor():
    rng = np.random.default_rng(6)
    with Budget(60):
        for _ in range(100):
            M1, M2 = random_symmetric(rng, 6), random_symmetric(rng, 8)
            K = np.kron(M1, np.eye(8)) + np.kron(np.eye(6), M2)
            sums = np.sort(np.add.outer(np.linalg.eigvalsh(M1), np.linalg.eigvalsh(M2)).ravel())
            assert np.max(np.abs(np.linalg.eigvalsh(K) - sums)) <= 1e-9
        for _ in range(1000):
            sd1 = [Fraction(int(k), 6) for k in rng.integers(-12, 13, size=rng.integers(0, 7))]
            sd2 = [Fraction(int(k), 6) for k in rng.integers(-12, 13, size=rng.integers(0, 7))]
            rep = cardinality_checks([float(v) for v in sd1], [float(v) for v in sd2])
            assert (rep.sigma_d_K1, rep.sigma_d_K2, rep.sigma_e_T, rep.sigma_d_T) == exact_counts(sd1, sd2)
            assert rep.all_hold


@pytest.mark.criterion(7, "minimax sequence fidelity and order monotonicity")
def test_criterion_7_minimax():
    rng = np.random.default_rng(7)
    with Budget(120):
        for trial in range(200):
            dim = int(rng.integers(2, 61))
            A = random_symmetric(rng, dim)
            w = np.linalg.eigvalsh(A)
            k = int(rng.integers(1, min(dim, 8)))
            e_min = 0.5 * (w[k - 1] + w[k])
            n = min(dim, k + 3)
            method = "literal" if trial % 2 == 0 else "eigh"
            res = minimax_sequence(A, n, e_min, method=method)
            assert res.tags == (EIGENVALUE,) * k + (EDGE_SATURATED,) * (n - k)
            assert np.max(np.abs(np.array(res.mu[:k]) - w[:k])) <= 1e-9
            assert all(m == e_min for m in res.mu[k:])
            assert np.max(np.abs(np.array(res.raw) - w[:n])) <= 1e-9
        for _ in range(200):
            dim = int(rng.integers(2, 41))
            B = random_symmetric(rng, dim)
            G = rng.standard_normal((dim, int(rng.integers(1, dim + 1))))
            e_min = float(rng.uniform(-3, 3))
            rep = check_order_monotonicity(B - G @ G.T, B, e_min, dim)
            assert rep.holds, rep.max_violation


@pytest.mark.criterion(8, "quadrature exactness and normalization of the sine bumps")
def test_criterion_8_quadrature():
    rng = np.random.default_rng(8)
    with Budget(10):
        for _ in range(50):
            g = int(rng.integers(1, 11))
            inner = np.sort(rng.uniform(0.02, 0.98, size=rng.integers(0, 6)))
            grid = build_grid((0.0, 1.0), inner, g)
            bp = grid.breakpoints
            d = 2 * g - 1
            for s in range(len(bp) - 1):
                a, b = bp[s], bp[s + 1]
                f = lambda x, a=a, b=b: np.where((x > a) & (x < b), (x - a) ** d, 0.0)  # noqa: E731
                exact = (b - a) ** (d + 1) / (d + 1)
                assert abs(integrate(f, grid) - exact) <= 1e-12 * exact
        for n in range(1, 7):
            grid = build_grid((0.0, 1.0), grid_breakpoints(n), 8)
            assert abs(integrate(lambda y: phi(n, y) ** 2, grid) - 1.0) <= 1e-10


@pytest.mark.criterion(9, "byte-identical outputs from repeated accumulation runs")
def test_criterion_9_determinism(tmp_path):
    config = {
        "experiment": "accumulate",
        "model": {"type": "example5", "gamma": "2/3", "g": 8},
        "schedule": [{"N": n} for n in (2, 3, 4, 5)],
        "seed": 0,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    outs = []
    for name in ("first", "second"):
        out = tmp_path / name
        assert main(["run", "--config", str(path), "--out", str(out)]) == 0
        outs.append(out)
    for name in ("report.json", "table.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
