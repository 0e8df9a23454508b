"""Command line driver: solve, action, metric, verify, sweep.

Run configurations are JSON files; complex numbers are ``[re, im]`` pairs.
Reports are JSON with the full input echoed back, every numeric result
paired with a residual or error estimate, and (in deterministic mode, the
default) wall times zeroed so identical configurations produce bitwise
identical reports.

Exit codes: 0 success, 1 numerical failure, 2 validation failure, 3 I/O
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .action import (
    DEFAULT_LADDER,
    action,
    moduli_stencil,
    solve_and_action,
    verify_action_gradient,
)
from .errors import ConesphereError, ValidationError
from .field import FieldEvaluator
from .kahler import MetricMatrix, gram, verify_cbar_metric, verify_kahler_potential
from .model import Configuration, complete_accessories, validate_orders
from .monodromy import solve_accessory
from .quadrature import QuadBudget, budget_preset
from .transport import DEFAULT_RTOL

WORKERS_ENV = "CONESPHERE_WORKERS"


def _c2j(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _j2c(v) -> complex:
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(v[0], v[1])
    if isinstance(v, (int, float)):
        return complex(v)
    raise ValidationError(f"expected a number or [re, im] pair, got {v!r}")


def _matrix_json(M: np.ndarray) -> list:
    return [[_c2j(x) for x in row] for row in np.atleast_2d(M)]


@dataclass
class RunConfig:
    """Everything one run needs; defaults match the library defaults."""

    alphas: list
    free_points: list
    guess: list | None = None
    ode_rtol: float = DEFAULT_RTOL
    solver_tol: float = 1e-9
    fd_step: float = 1e-3
    potential_fd_step: float = 2e-2
    epsilon_ladder: tuple = DEFAULT_LADDER
    budget: QuadBudget = field(default_factory=QuadBudget)
    budget_name: str = "default"
    pair_set: str = "banded"
    deterministic: bool = True

    def __post_init__(self):
        if self.ode_rtol <= 0 or self.solver_tol <= 0 or self.fd_step <= 0:
            raise ValidationError("tolerances and steps must be positive")
        ladder = tuple(float(e) for e in self.epsilon_ladder)
        if any(b >= a for a, b in zip(ladder, ladder[1:])) or not ladder:
            raise ValidationError("epsilon ladder must be strictly decreasing")
        self.epsilon_ladder = ladder

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {
            "alphas", "free_points", "guess", "ode_rtol", "solver_tol",
            "fd_step", "potential_fd_step", "epsilon_ladder", "budget",
            "pair_set", "deterministic",
        }
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        if "alphas" not in data or "free_points" not in data:
            raise ValidationError("config needs 'alphas' and 'free_points'")
        budget = data.get("budget", "default")
        if isinstance(budget, str):
            budget_name = budget
            budget = budget_preset(budget)
        elif isinstance(budget, dict):
            budget_name = "custom"
            budget = QuadBudget(**budget)
        else:
            raise ValidationError("budget must be a preset name or a field table")
        return cls(
            alphas=[float(a) for a in data["alphas"]],
            free_points=[_j2c(v) for v in data["free_points"]],
            guess=[_j2c(v) for v in data["guess"]] if data.get("guess") else None,
            ode_rtol=float(data.get("ode_rtol", DEFAULT_RTOL)),
            solver_tol=float(data.get("solver_tol", 1e-9)),
            fd_step=float(data.get("fd_step", 1e-3)),
            potential_fd_step=float(data.get("potential_fd_step", 2e-2)),
            epsilon_ladder=tuple(data.get("epsilon_ladder", DEFAULT_LADDER)),
            budget=budget,
            budget_name=budget_name,
            pair_set=str(data.get("pair_set", "banded")),
            deterministic=bool(data.get("deterministic", True)),
        )

    def echo(self) -> dict:
        return {
            "alphas": list(self.alphas),
            "free_points": [_c2j(z) for z in self.free_points],
            "guess": [_c2j(z) for z in self.guess] if self.guess else None,
            "ode_rtol": self.ode_rtol,
            "solver_tol": self.solver_tol,
            "fd_step": self.fd_step,
            "potential_fd_step": self.potential_fd_step,
            "epsilon_ladder": list(self.epsilon_ladder),
            "budget": self.budget_name,
            "budget_fields": self.budget.key(),
            "pair_set": self.pair_set,
            "deterministic": self.deterministic,
        }

    def domain_objects(self):
        orders = validate_orders(self.alphas)
        config = Configuration(tuple(self.free_points))
        if orders.n != config.n:
            raise ValidationError(
                f"{orders.n} orders but {config.n} marked points (free + 0, 1, infinity)"
            )
        return config, orders

    def solver_kwargs(self) -> dict:
        return {"tol": self.solver_tol, "pair_set": self.pair_set}


def _solve_report_json(rep) -> dict:
    acc = rep.accessory
    return {
        "free_accessories": [_c2j(c) for c in acc.free],
        "c_zero": _c2j(acc.c_zero),
        "c_one": _c2j(acc.c_one),
        "c_infinity": _c2j(acc.c_infinity),
        "residual_norm": rep.residual_norm,
        "residual_inf": rep.residual_inf,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "status": rep.status,
        "signature": rep.signature,
        "condition": rep.condition,
        "base_point": _c2j(rep.base_point) if rep.base_point is not None else None,
        "message": rep.message,
    }


def _action_json(av) -> dict:
    return {
        "value": av.value,
        "error_estimate": av.error_estimate,
        "eps_samples": [[e, s] for e, s in av.eps_samples],
        "extrapolants": list(av.extrapolants),
        "exponents": list(av.exponents),
    }


class _Timer:
    def __init__(self, deterministic: bool):
        self.deterministic = deterministic
        self.t0 = time.monotonic()

    def seconds(self) -> float:
        return 0.0 if self.deterministic else time.monotonic() - self.t0


def _write_report(report: dict, path: str | None):
    text = json.dumps(report, indent=2, sort_keys=True)
    if path is None or path == "-":
        print(text)
    else:
        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        except OSError as exc:
            raise IOError(f"cannot write report to {path}: {exc}") from exc


def cmd_solve(rc: RunConfig, out_path: str | None) -> int:
    timer = _Timer(rc.deterministic)
    config, orders = rc.domain_objects()
    rep = solve_accessory(config, orders, guess=rc.guess, rtol=rc.ode_rtol,
                          **rc.solver_kwargs())
    report = {
        "tool": {"name": "conesphere", "version": __version__, "command": "solve"},
        "config": rc.echo(),
        "solve": _solve_report_json(rep),
        "walltime_seconds": timer.seconds(),
    }
    _write_report(report, out_path)
    return 0 if rep.converged else 1


def cmd_action(rc: RunConfig, out_path: str | None, convergence_csv: str | None) -> int:
    timer = _Timer(rc.deterministic)
    config, orders = rc.domain_objects()
    res = solve_and_action(config, orders, guess=rc.guess, budget=rc.budget,
                           ladder=rc.epsilon_ladder, rtol=rc.ode_rtol,
                           solver_kwargs=rc.solver_kwargs())
    report = {
        "tool": {"name": "conesphere", "version": __version__, "command": "action"},
        "config": rc.echo(),
        "solve": _solve_report_json(res.solve),
        "action": _action_json(res.action),
        "walltime_seconds": timer.seconds(),
    }
    if convergence_csv:
        rows = [("eps", "S_eps", "extrapolant")]
        exts = res.action.extrapolants
        for (eps, s), ext in zip(res.action.eps_samples, exts):
            rows.append((eps, s, ext))
        with open(convergence_csv, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(rows)
    _write_report(report, out_path)
    return 0


def cmd_metric(rc: RunConfig, out_path: str | None) -> int:
    timer = _Timer(rc.deterministic)
    config, orders = rc.domain_objects()
    res = solve_and_action(config, orders, guess=rc.guess, rtol=rc.ode_rtol,
                           want_action=False, solver_kwargs=rc.solver_kwargs())
    gm = gram(res.evaluator, budget=rc.budget)
    metric = MetricMatrix.from_gram(gm)
    report = {
        "tool": {"name": "conesphere", "version": __version__, "command": "metric"},
        "config": rc.echo(),
        "solve": _solve_report_json(res.solve),
        "gram": {
            "matrix": _matrix_json(gm.matrix),
            "error_estimate": [[float(x) for x in row]
                               for row in np.atleast_2d(gm.error_estimate)],
            "eigenvalues": [float(x) for x in gm.eigenvalues],
        },
        "metric": {"matrix": _matrix_json(metric.matrix)},
        "walltime_seconds": timer.seconds(),
    }
    _write_report(report, out_path)
    return 0


def cmd_verify(rc: RunConfig, which: str, out_path: str | None,
               tolerances: dict | None = None) -> int:
    timer = _Timer(rc.deterministic)
    config, orders = rc.domain_objects()
    tol = {"theorem1": 1e-3, "theorem2": 1e-2, "potential": 5e-2}
    tol.update(tolerances or {})
    report = {
        "tool": {"name": "conesphere", "version": __version__, "command": "verify"},
        "config": rc.echo(),
        "which": which,
        "verify": {},
    }
    if config.n == 3:
        report["verify"]["skipped"] = (
            "three marked points leave no free moduli; "
            "the derivative identities are empty"
        )
        rep = solve_accessory(config, orders, rtol=rc.ode_rtol, **rc.solver_kwargs())
        report["solve"] = _solve_report_json(rep)
        report["walltime_seconds"] = timer.seconds()
        _write_report(report, out_path)
        return 0
    ok = True
    stencil = None
    if which in ("theorem1", "theorem2", "all"):
        stencil = moduli_stencil(
            config, orders, fd_step=rc.fd_step, budget=rc.budget,
            ladder=rc.epsilon_ladder, rtol=rc.ode_rtol,
            with_action=which in ("theorem1", "all"),
            solver_kwargs=rc.solver_kwargs(),
        )
        report["solve"] = _solve_report_json(stencil.center)
    if which in ("theorem1", "all"):
        t1 = verify_action_gradient(config, orders, stencil=stencil,
                                    ladder=rc.epsilon_ladder)
        passed = t1.worst_rel_residual < tol["theorem1"]
        ok &= passed
        report["verify"]["theorem1"] = {
            "fd_step": t1.fd_step,
            "per_index": [
                {
                    "index": c.index,
                    "c": _c2j(c.c_value),
                    "dS_dz": _c2j(c.dS_dz),
                    "empirical_sign": c.empirical_sign,
                    "rel_residual": c.rel_residual,
                }
                for c in t1.checks
            ],
            "sign_note": t1.sign_note,
            "worst_rel_residual": t1.worst_rel_residual,
            "tolerance": tol["theorem1"],
            "passed": passed,
        }
    if which in ("theorem2", "all"):
        t2 = verify_cbar_metric(config, orders, stencil=stencil, budget=rc.budget,
                                rtol=rc.ode_rtol, solver_kwargs=rc.solver_kwargs())
        passed = t2.residual < tol["theorem2"]
        ok &= passed
        report["verify"]["theorem2"] = {
            "fd_step": t2.fd_step,
            "residuals": t2.residuals,
            "convention": t2.convention,
            "residual": t2.residual,
            "diagonal_positive": t2.diagonal_positive,
            "gram": _matrix_json(t2.gram.matrix),
            "metric": _matrix_json(t2.metric.matrix),
            "tolerance": tol["theorem2"],
            "passed": passed,
        }
    if which in ("potential", "all"):
        t3 = verify_kahler_potential(config, orders, fd_step=rc.potential_fd_step,
                                     budget=rc.budget, ladder=rc.epsilon_ladder,
                                     rtol=rc.ode_rtol,
                                     solver_kwargs=rc.solver_kwargs())
        passed = t3.worst_rel_mismatch < tol["potential"]
        ok &= passed
        report["verify"]["potential"] = {
            "fd_step": t3.fd_step,
            "S_center": t3.S_center,
            "second_derivative": [float(x) for x in t3.second_derivative],
            "metric_diagonal": [float(x) for x in t3.metric_diagonal],
            "empirical_sign": t3.empirical_sign,
            "worst_rel_mismatch": t3.worst_rel_mismatch,
            "tolerance": tol["potential"],
            "passed": passed,
        }
    report["passed"] = ok
    report["walltime_seconds"] = timer.seconds()
    _write_report(report, out_path)
    return 0 if ok else 1


def _sweep_point(args):
    """Worker for one sweep point (top level so process pools can pickle it)."""
    rc_dict, z1, guess = args
    rc = RunConfig.from_dict(rc_dict)
    rc.free_points = [_j2c(z1)]
    rc.guess = [_j2c(guess)] if guess is not None else None
    row = {"z1": _j2c(z1), "status": "ok", "c1": None, "residual": None,
           "S": None, "G11": None}
    try:
        config, orders = rc.domain_objects()
        res = solve_and_action(config, orders, guess=rc.guess, budget=rc.budget,
                               ladder=rc.epsilon_ladder, rtol=rc.ode_rtol,
                               solver_kwargs=rc.solver_kwargs())
        gm = gram(res.evaluator, budget=rc.budget)
        row.update(
            c1=res.solve.accessory.free[0],
            residual=res.solve.residual_norm,
            S=res.action.value,
            G11=float(gm.matrix[0, 0].real),
        )
    except ConesphereError as exc:
        row["status"] = f"failed: {exc}"
    return row


def cmd_sweep(rc: RunConfig, grid: str, csv_path: str | None,
              out_path: str | None) -> int:
    config, orders = rc.domain_objects()
    if config.n != 4:
        raise ValidationError("sweeps cover the one-modulus case (four marked points)")
    try:
        start, stop, count = grid.split(":")
        start, stop, count = float(start), float(stop), int(count)
    except ValueError as exc:
        raise ValidationError(f"bad grid spec {grid!r}; expected start:stop:count") from exc
    if count < 1:
        raise ValidationError("grid count must be positive")
    points = np.linspace(start, stop, count)
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    rc_dict = _rc_to_dict(rc)
    rows = []
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        tasks = [(rc_dict, [float(x), 0.0], None) for x in points]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        guess = None
        for x in points:
            row = _sweep_point((rc_dict, [float(x), 0.0], guess))
            rows.append(row)
            if row["status"] == "ok":
                guess = _c2j(row["c1"])  # continuation along the sweep
    table = [("z1_re", "z1_im", "c1_re", "c1_im", "residual", "S", "G11", "status")]
    for row in rows:
        c1 = row["c1"]
        table.append((
            row["z1"].real, row["z1"].imag,
            c1.real if c1 is not None else "",
            c1.imag if c1 is not None else "",
            row["residual"] if row["residual"] is not None else "",
            row["S"] if row["S"] is not None else "",
            row["G11"] if row["G11"] is not None else "",
            row["status"],
        ))
    if csv_path:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(table)
    else:
        w = csv.writer(sys.stdout)
        w.writerows(table)
    if out_path:
        report = {
            "tool": {"name": "conesphere", "version": __version__, "command": "sweep"},
            "config": rc.echo(),
            "grid": grid,
            "n_ok": sum(1 for r in rows if r["status"] == "ok"),
            "n_failed": sum(1 for r in rows if r["status"] != "ok"),
        }
        _write_report(report, out_path)
    return 0 if all(r["status"] == "ok" for r in rows) else 1


def _rc_to_dict(rc: RunConfig) -> dict:
    return {
        "alphas": list(rc.alphas),
        "free_points": [_c2j(z) for z in rc.free_points],
        "ode_rtol": rc.ode_rtol,
        "solver_tol": rc.solver_tol,
        "fd_step": rc.fd_step,
        "potential_fd_step": rc.potential_fd_step,
        "epsilon_ladder": list(rc.epsilon_ladder),
        "budget": rc.budget_name if rc.budget_name != "custom" else
                  dict(zip(("n_theta", "p_rad", "panel_ratio", "bg_div", "bg_order",
                            "bg_refine_depth", "contour_nodes", "r_floor"),
                           rc.budget.key())),
        "pair_set": rc.pair_set,
        "deterministic": rc.deterministic,
    }


def _load_config(path: str, overrides: argparse.Namespace) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise IOError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
    rc = RunConfig.from_dict(data)
    if overrides.fd_step is not None:
        rc.fd_step = overrides.fd_step
    if overrides.epsilon_ladder is not None:
        ladder = tuple(float(x) for x in overrides.epsilon_ladder.split(","))
        rc.epsilon_ladder = ladder
    if overrides.budget is not None:
        rc.budget = budget_preset(overrides.budget)
        rc.budget_name = overrides.budget
    if overrides.ode_rtol is not None:
        rc.ode_rtol = overrides.ode_rtol
    if overrides.solver_tol is not None:
        rc.solver_tol = overrides.solver_tol
    if overrides.deterministic is not None:
        rc.deterministic = overrides.deterministic
    return RunConfig.from_dict(_rc_to_dict(rc) | (
        {"guess": [_c2j(z) for z in rc.guess]} if rc.guess else {}
    ))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="conesphere",
        description="Accessory parameters, regularized action and moduli "
                    "metric of hyperbolic cone spheres.",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="JSON run configuration")
        sp.add_argument("--output", "-o", default=None, help="report path (default stdout)")
        sp.add_argument("--fd-step", type=float, default=None)
        sp.add_argument("--epsilon-ladder", default=None,
                        help="comma separated decreasing cutoffs")
        sp.add_argument("--budget", choices=("low", "default", "high"), default=None)
        sp.add_argument("--ode-rtol", type=float, default=None)
        sp.add_argument("--solver-tol", type=float, default=None)
        det = sp.add_mutually_exclusive_group()
        det.add_argument("--deterministic", dest="deterministic",
                         action="store_true", default=None)
        det.add_argument("--no-deterministic", dest="deterministic",
                         action="store_false")

    sp = sub.add_parser("solve", help="accessory parameters only")
    common(sp)
    sp = sub.add_parser("action", help="solve plus the regularized action")
    common(sp)
    sp.add_argument("--convergence-csv", default=None,
                    help="write the (eps, S_eps, extrapolant) table here")
    sp = sub.add_parser("metric", help="solve plus the pairing and metric matrices")
    common(sp)
    sp = sub.add_parser("verify", help="finite-difference theorem checks")
    common(sp)
    sp.add_argument("--which", choices=("theorem1", "theorem2", "potential", "all"),
                    default="all")
    sp = sub.add_parser("sweep", help="sweep the free point of a four-point configuration")
    common(sp)
    sp.add_argument("--grid", required=True, help="start:stop:count along the real axis")
    sp.add_argument("--csv", default=None, help="CSV output path (default stdout)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = _load_config(args.config, args)
        if args.command == "solve":
            return cmd_solve(rc, args.output)
        if args.command == "action":
            return cmd_action(rc, args.output, args.convergence_csv)
        if args.command == "metric":
            return cmd_metric(rc, args.output)
        if args.command == "verify":
            return cmd_verify(rc, args.which, args.output)
        if args.command == "sweep":
            return cmd_sweep(rc, args.grid, args.csv, args.output)
        raise ValidationError(f"unknown command {args.command}")
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except IOError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except ConesphereError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
