"""Batch front end.

    efimovlab run --experiment example5 --gamma 2/3 --M 4 --N 4 --out out/

Writes ``report.json`` and ``table.csv`` (plus ``plot.svg`` for the
spectrum, accumulate and example5 experiments) into ``--out``.  Exit
status: 0 success, 2 when a scientific check fails, 1 on error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import CONFIG_SCHEMA, EXPERIMENTS, ConfigError, RunConfig, basis_function, load_config
from .efimov import (
    CONSISTENT,
    NOT_ESTABLISHED,
    AccumulationTable,
    EdgeComponentError,
    ScheduleRow,
    accumulation_study,
    check_w1_condition,
    check_w2_condition,
    count_below,
    essential_edge,
    finiteness_test,
)
from .hubbard import analytic_T_eigenvalue, phi, phi_family
from .operators import DenseCapError, assemble_components, assemble_H
from .reporting import emit_csv, emit_svg, write_json

log = logging.getLogger("efimovlab")

EXIT_OK, EXIT_ERROR, EXIT_FAILED_CHECK = 0, 1, 2


def _model_summary(cfg: RunConfig, spec) -> dict:
    out = {"type": "example5" if cfg.is_example else "inline", "gamma": spec.gamma, "grid_shape": list(spec.grid.shape)}
    if cfg.is_example:
        p = cfg.example_params()
        out.update(M=p.M, N=p.N, g=p.g, infinite_series=p.infinite_series)
    return out


def _spectrum_outputs(spec, cfg: RunConfig):
    edge = essential_edge(spec)
    H = assemble_H(spec, dense=True, dense_cap=cfg.dense_cap)
    res = count_below(H, edge.Lambda, cfg.count_tol, dense_cap=cfg.dense_cap, seed=cfg.seed)
    return edge, res


def _family(cfg: RunConfig, spec, axis: str):
    """Test family for a sufficiency check, on ``axis`` ('x' or 'y')."""
    if cfg.family is not None:
        grid = spec.grid.gx if axis == "x" else spec.grid.gy
        idx = cfg.family["indices"]
        return [basis_function(cfg.family["basis"], n, grid.domain, "family.basis") for n in idx], idx
    if not cfg.is_example:
        raise ConfigError("family: required for inline models")
    p = cfg.example_params()
    kappas = cfg.kappas or list(range(2, max(p.N, 2) + 1))
    return phi_family(kappas), kappas


def run_spectrum(cfg: RunConfig, out: Path) -> int:
    spec = cfg.model_spec()
    edge, res = _spectrum_outputs(spec, cfg)
    report = {
        "experiment": "spectrum",
        "model": _model_summary(cfg, spec),
        "edge": edge.to_dict(),
        "count_below": res.count,
        "eigenvalues_below": list(res.below),
        "smallest": list(res.smallest),
        "method": res.method,
    }
    write_json(report, out / "report.json")
    rows = [(i + 1, v, v < edge.Lambda) for i, v in enumerate(res.smallest)]
    emit_csv(("index", "eigenvalue", "below_edge"), rows, out / "table.csv")
    emit_svg([("H", list(res.smallest))], edge.Lambda, out / "plot.svg", xlabel="operator", title="lowest eigenvalues")
    return EXIT_OK


def run_essential(cfg: RunConfig, out: Path) -> int:
    spec = cfg.model_spec()
    edge = essential_edge(spec)
    report = {"experiment": "essential", "model": _model_summary(cfg, spec), "edge": edge.to_dict()}
    report["assumptions"] = spec.assumptions()
    write_json(report, out / "report.json")
    rows = [("W1", j, y, m) for j, (y, m) in enumerate(zip(spec.grid.gy.nodes, edge.w1_fiber_minima))]
    rows += [("W2", i, x, m) for i, (x, m) in enumerate(zip(spec.grid.gx.nodes, edge.w2_fiber_minima))]
    emit_csv(("component", "node", "coordinate", "fiber_min"), rows, out / "table.csv")
    return EXIT_OK


def run_condition(cfg: RunConfig, out: Path, component: str) -> int:
    spec = cfg.model_spec()
    axis = "y" if component == "W1" else "x"
    family, kappas = _family(cfg, spec, axis)
    check = check_w1_condition if component == "W1" else check_w2_condition
    rep = check(spec, family, kappas)
    report = {"experiment": cfg.experiment, "model": _model_summary(cfg, spec), "condition": rep.to_dict()}
    write_json(report, out / "report.json")
    rows = [(r.kappa, r.lhs, r.rhs, r.margin, r.passed) for r in rep.rows]
    emit_csv(("kappa", "lhs", "rhs", "margin", "pass"), rows, out / "table.csv")
    return EXIT_FAILED_CHECK if rep.verdict == NOT_ESTABLISHED else EXIT_OK


def run_thm41(cfg: RunConfig, out: Path) -> int:
    spec = cfg.model_spec()
    rep = finiteness_test(spec)
    report = {
        "experiment": "thm41",
        "model": _model_summary(cfg, spec),
        "finiteness": rep.to_dict(),
        "assumptions": spec.assumptions(),
    }
    write_json(report, out / "report.json")
    rows = [(i + 1, w, rep.eta0 - w < 0) for i, w in enumerate(rep.sigma_d_T)] or [(0, None, None)]
    emit_csv(("index", "sigma_d_T", "above_eta0"), rows, out / "table.csv")
    return EXIT_OK


def _schedule(cfg: RunConfig) -> list[ScheduleRow]:
    if cfg.schedule:
        base = cfg.example_params() if cfg.is_example else None
        rows = []
        for r in cfg.schedule:
            M = r.get("M", r["N"]) if base else 2
            g = r.get("g", base.g if base else 8)
            rows.append(ScheduleRow(M, r["N"], g))
        return rows
    if not cfg.is_example:
        raise ConfigError("schedule: required for inline models")
    p = cfg.example_params()
    return [ScheduleRow(n, n, p.g) for n in range(2, max(p.N, 2) + 1)]


def run_accumulate(cfg: RunConfig, out: Path) -> int:
    rows = _schedule(cfg)
    if cfg.is_example:
        model = cfg.example_params()
    else:
        model = lambda r: cfg.model_spec(g=r.g)  # noqa: E731
    table: AccumulationTable = accumulation_study(
        model, rows, dense_cap=cfg.dense_cap, seed=cfg.seed, tol=cfg.count_tol
    )
    report = {"experiment": "accumulate", "accumulation": table.to_dict()}
    if cfg.is_example:
        report["model"] = {"type": "example5", "gamma": model.gamma, "infinite_series": model.infinite_series}
    write_json(report, out / "report.json")
    emit_csv(AccumulationTable.HEADER, table.records(), out / "table.csv")
    if table.rows:
        emit_svg(
            [(f"N={r.N},g={r.g}", list(r.smallest)) for r in table.rows],
            table.rows[0].Lambda,
            out / "plot.svg",
            xlabel="schedule",
            title="lowest eigenvalues vs truncation",
        )
    return EXIT_OK if table.verdict == CONSISTENT else EXIT_FAILED_CHECK


def run_example5(cfg: RunConfig, out: Path) -> int:
    if not cfg.is_example:
        raise ConfigError("model.type: the example5 experiment needs the example model")
    p = cfg.example_params()
    spec = cfg.model_spec()
    edge, res = _spectrum_outputs(spec, cfg)
    parts = assemble_components(spec)
    T = parts.T
    residuals = []
    for n in range(1, p.N + 1):
        f = spec.grid.sample_separable(lambda x: np.ones_like(x), lambda y, n=n: phi(n, y))
        omega = analytic_T_eigenvalue(n, p.gamma)
        residuals.append({"n": n, "omega": omega, "residual": float(np.linalg.norm(T.apply(f) - omega * f))})
    kappas = cfg.kappas or list(range(2, max(p.N, 2) + 1))
    cond = check_w1_condition(spec, phi_family(kappas), kappas, edge=edge)
    fin = finiteness_test(spec, edge=edge)
    report = {
        "experiment": "example5",
        "model": _model_summary(cfg, spec),
        "edge": edge.to_dict(),
        "count_below": res.count,
        "eigenvalues_below": list(res.below),
        "smallest": list(res.smallest),
        "T_eigen_residuals": residuals,
        "condition": cond.to_dict(),
        "finiteness": fin.to_dict(),
    }
    write_json(report, out / "report.json")
    rows = [(i + 1, v, edge.Lambda - v) for i, v in enumerate(res.below)] or [(0, None, None)]
    emit_csv(("index", "eigenvalue", "gap_to_edge"), rows, out / "table.csv")
    emit_svg([("H", list(res.smallest))], edge.Lambda, out / "plot.svg", xlabel="operator", title="bound states")
    return EXIT_FAILED_CHECK if cond.verdict == NOT_ESTABLISHED else EXIT_OK


RUNNERS = {
    "spectrum": run_spectrum,
    "essential": run_essential,
    "condition5": lambda cfg, out: run_condition(cfg, out, "W1"),
    "condition6": lambda cfg, out: run_condition(cfg, out, "W2"),
    "thm41": run_thm41,
    "accumulate": run_accumulate,
    "example5": run_example5,
}


def run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return RUNNERS[cfg.experiment](cfg, out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="efimovlab", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--experiment", choices=EXPERIMENTS)
    r.add_argument("--config", type=Path, help="JSON run configuration")
    r.add_argument("--out", help="output directory (default: out)")
    r.add_argument("--gamma", help="coupling; fractions such as 2/3 are accepted")
    r.add_argument("--M", type=int, help="potential truncation")
    r.add_argument("--N", type=int, help="kernel series truncation")
    r.add_argument("--g", type=int, help="Gauss-Legendre order per segment")
    r.add_argument("--seed", type=int, help="seed for the iterative eigensolver")
    r.add_argument("--dense-cap", type=int, help="largest dense matrix dimension")
    r.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("schema", help="print the configuration JSON schema")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(json.dumps(CONFIG_SCHEMA, indent=2))
        return EXIT_OK

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        raw = {}
        if args.config is not None:
            try:
                raw = json.loads(args.config.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"<config>: not valid JSON ({exc})") from None
            except OSError as exc:
                raise ConfigError(f"--config: cannot read {args.config} ({exc.strerror})") from None
            if not isinstance(raw, dict):
                raise ConfigError("<root>: configuration must be a JSON object")
        overrides = dict(
            experiment=args.experiment,
            out=args.out,
            gamma=args.gamma,
            M=args.M,
            N=args.N,
            g=args.g,
            seed=args.seed,
            dense_cap=args.dense_cap,
        )
        cfg = load_config(raw, overrides)
        return run(cfg)
    except (ConfigError, DenseCapError, EdgeComponentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
