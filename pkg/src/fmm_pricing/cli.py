"""Command line entry point: ``fmm-price <command> [options]``.

Commands: price-mc, price-pde, implied-vol, converge, cross-validate. The
configuration file comes from ``--config`` or the ``FMM_CONFIG`` variable.
Exit status is 0 on success, 2 for usage or configuration errors and 3 for
numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from dataclasses import replace
from typing import Sequence

import numpy as np

from .amfr_w1 import ScheduleError, SingularSystemError
from .analytics import (
    ConvergenceRow,
    CrossCheck,
    NoSolutionError,
    PriceReport,
    convergence_study,
    cross_validate,
    default_dt,
    implied_vol,
    price_mc_reports,
    price_swaption_pde,
)
from .config import ConfigError, RunConfig, parse_config
from .market_model import DomainError, SingularDenominatorError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
ENV_CONFIG = "FMM_CONFIG"

REPORT_COLUMNS = (
    "method", "a", "b", "exercise", "strike", "price", "ci_low", "ci_high",
    "implied_vol", "paths", "steps", "seed", "grid", "dt", "runtime",
)  # fmt: skip
CONVERGE_COLUMNS = ("L", "l2_error", "linf_error", "l2_order", "linf_order", "runtime")
CROSS_COLUMNS = ("a", "b", "strike", "pde_price", "mc_mean", "ci_low", "ci_high", "status", "runtime")


class UsageError(Exception):
    pass


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10e}"


def report_row(r: PriceReport) -> dict:
    m = r.metadata
    return {
        "method": r.method,
        "a": r.spec.a,
        "b": r.spec.b,
        "exercise": " ".join(str(e) for e in r.spec.exercise_dates),
        "strike": _num(r.spec.strike),
        "price": _num(r.price),
        "ci_low": _num(r.ci.low if r.ci else None),
        "ci_high": _num(r.ci.high if r.ci else None),
        "implied_vol": _num(r.implied_vol),
        "paths": _num(m.get("paths")),
        "steps": _num(m.get("steps")),
        "seed": _num(m.get("seed")),
        "grid": "x".join(str(n - 1) for n in m["shape"]) if "shape" in m else "",
        "dt": _num(m.get("dt")),
        "runtime": f"{r.wall_time:.3f}",
    }


def converge_row(r: ConvergenceRow) -> dict:
    return {
        "L": r.L,
        "l2_error": _num(r.l2_error),
        "linf_error": _num(r.linf_error),
        "l2_order": "" if r.l2_order is None else f"{r.l2_order:.4f}",
        "linf_order": "" if r.linf_order is None else f"{r.linf_order:.4f}",
        "runtime": f"{r.runtime:.3f}",
    }


def cross_row(c: CrossCheck) -> dict:
    return {
        "a": c.spec.a,
        "b": c.spec.b,
        "strike": _num(c.spec.strike),
        "pde_price": _num(c.pde.price),
        "mc_mean": _num(c.mc.price),
        "ci_low": _num(c.mc.ci.low),
        "ci_high": _num(c.mc.ci.high),
        "status": "PASS" if c.inside else "FAIL",
        "runtime": f"{c.pde.wall_time + c.mc.wall_time:.3f}",
    }


def format_table(rows: list[dict], columns: Sequence[str]) -> str:
    """Aligned text table; empty columns are dropped."""
    cols = [c for c in columns if any(str(r[c]) for r in rows)]
    cells = [[str(r[c]) for c in cols] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def write_csv(rows: list[dict], columns: Sequence[str], target: str) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    if target == "-":
        sys.stdout.write(buf.getvalue())
    else:
        with open(target, "w", newline="") as fh:
            fh.write(buf.getvalue())


# --- argument handling ----------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fmm-price", description="Price RFR swaptions under the FMM.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"configuration file (default: ${ENV_CONFIG})")
    common.add_argument("--csv", metavar="PATH", help="also write CSV to PATH ('-' for stdout)")
    common.add_argument("--quiet", action="store_true", help="no progress lines on stderr")

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--paths", type=int, help="number of Monte Carlo paths")
    mc.add_argument("--steps", type=int, help="time steps per path")
    mc.add_argument("--seed", type=int)
    mc.add_argument("--antithetic", action=argparse.BooleanOptionalAction, default=None)
    mc.add_argument("--workers", type=int)

    pde = argparse.ArgumentParser(add_help=False)
    pde.add_argument("--resolution", type=int, nargs="+", metavar="M", help="grid size per axis")
    pde.add_argument("--r-max", type=float, nargs="+", metavar="R", help="domain truncation per axis")
    pde.add_argument("--mesh", choices=("sinh", "uniform"))
    pde.add_argument("--dt-divisor", metavar="R", help="r in dt = tau_1/2^r, or '2L' for tau_1/(2L)")
    pde.add_argument("--theta", type=float)
    nu = pde.add_mutually_exclusive_group()
    nu.add_argument("--nu", type=float, help="explicit nu (overrides kappa)")
    nu.add_argument("--kappa", type=float, help="kappa_N in nu = kappa_N N theta for N >= 4")

    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    sub.add_parser("price-mc", parents=[common, mc], help="Monte Carlo prices with 95%% intervals")
    sub.add_parser("price-pde", parents=[common, pde], help="PDE prices")
    iv = sub.add_parser("implied-vol", parents=[common], help="Black vols for given prices")
    iv.add_argument("prices", type=float, nargs="+", help="one price per configured strike")
    cv = sub.add_parser("converge", parents=[common, pde], help="spatial convergence table")
    cv.add_argument("--resolutions", type=int, nargs="+", metavar="L")
    cv.add_argument("--reference", type=int, metavar="L")
    sub.add_parser("cross-validate", parents=[common, mc, pde], help="PDE price inside the MC interval?")
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    try:
        return _overrides(cfg, args)
    except DomainError as exc:
        raise UsageError(str(exc)) from exc


def _overrides(cfg: RunConfig, args) -> RunConfig:
    mc_changes = {
        "num_paths": getattr(args, "paths", None),
        "num_steps": getattr(args, "steps", None),
        "seed": getattr(args, "seed", None),
        "antithetic": getattr(args, "antithetic", None),
        "workers": getattr(args, "workers", None),
    }
    mc = replace(cfg.mc, **{k: v for k, v in mc_changes.items() if v is not None})
    pde = cfg.pde
    changes = {}
    if getattr(args, "resolution", None):
        changes["resolution"] = tuple(args.resolution)
    if getattr(args, "r_max", None):
        changes["r_max"] = tuple(args.r_max)
    if getattr(args, "mesh", None):
        changes["mesh"] = args.mesh
    if getattr(args, "dt_divisor", None) is not None:
        raw = args.dt_divisor
        try:
            changes["dt_exponent"] = None if raw.upper() == "2L" else int(raw)
        except ValueError:
            raise UsageError(f"--dt-divisor expects an integer or '2L', got {raw!r}") from None
    for name in ("theta", "nu", "kappa"):
        if getattr(args, name, None) is not None:
            changes[name] = getattr(args, name)
    if changes:
        pde = replace(pde, **changes)
    converge = cfg.converge
    if getattr(args, "resolutions", None):
        converge = replace(converge, resolutions=tuple(args.resolutions))
    if getattr(args, "reference", None):
        converge = replace(converge, reference=args.reference)
    return replace(cfg, mc=mc, pde=pde, converge=converge)


def _pde_kwargs(cfg: RunConfig, progress) -> dict:
    p = cfg.pde
    md = cfg.market_data()
    dt = default_dt(md, max(p.resolution), p.dt_exponent)
    return dict(grid_cfg=p.grid_config(), dt=dt, theta=p.theta, nu=p.nu, kappa=p.kappa, progress=progress)


def _progress(quiet: bool, label: str):
    if quiet:
        return None
    every = {"n": 0}

    def cb(step, total):
        pct = 100 * step // total
        if pct >= every["n"] or step == total:
            print(f"{label}: step {step}/{total}", file=sys.stderr, flush=True)
            every["n"] = pct + 10

    return cb


def run(args) -> int:
    path = args.config or os.environ.get(ENV_CONFIG)
    if not path:
        raise UsageError(f"no configuration: pass --config or set {ENV_CONFIG}")
    cfg = _apply_overrides(parse_config(path), args)
    md = cfg.market_data()
    specs = cfg.specs()
    cmd = args.command

    if cmd == "price-mc":
        rows = [report_row(r) for r in price_mc_reports(specs, md, cfg.mc)]
        columns = REPORT_COLUMNS
    elif cmd == "price-pde":
        rows = []
        for s in specs:
            rep = price_swaption_pde(s, md, **_pde_kwargs(cfg, _progress(args.quiet, f"K={s.strike:.6g}")))
            rows.append(report_row(rep))
        columns = REPORT_COLUMNS
    elif cmd == "implied-vol":
        if len(args.prices) != len(specs):
            raise UsageError(f"expected {len(specs)} prices, one per configured strike")
        rows = [
            {"a": s.a, "b": s.b, "strike": _num(s.strike), "price": _num(p), "implied_vol": _num(implied_vol(p, s, md))}
            for s, p in zip(specs, args.prices)
        ]
        columns = ("a", "b", "strike", "price", "implied_vol")
    elif cmd == "converge":
        c = cfg.converge
        if len(c.resolutions) < 2:
            raise UsageError("converge needs at least two resolutions")
        if c.reference <= max(c.resolutions):
            raise UsageError("the reference resolution must exceed every studied one")
        p = cfg.pde
        dt = default_dt(md, 0, 11 if p.dt_exponent is None else p.dt_exponent)
        note = None if args.quiet else (lambda msg: print(f"converge: {msg}", file=sys.stderr, flush=True))
        table = convergence_study(
            specs[0], md, c.resolutions, c.reference, p.mesh, p.grid_config().r_max,
            dt, p.theta, p.nu, p.kappa, note,
        )  # fmt: skip
        rows = [converge_row(r) for r in table]
        columns = CONVERGE_COLUMNS
    elif cmd == "cross-validate":
        checks = cross_validate(specs, md, cfg.mc, _pde_kwargs(cfg, _progress(args.quiet, "pde")))
        rows = [cross_row(c) for c in checks]
        columns = CROSS_COLUMNS
    else:  # argparse rejects unknown commands before this point
        raise UsageError(f"unknown command {cmd!r}")

    print(format_table(rows, columns))
    if args.csv:
        write_csv(rows, columns, args.csv)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return run(args)
    except (UsageError, ConfigError) as exc:
        print(f"fmm-price: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (
        SingularSystemError,
        SingularDenominatorError,
        NoSolutionError,
        ScheduleError,
        DomainError,
        ArithmeticError,
        np.linalg.LinAlgError,
    ) as exc:
        print(f"fmm-price: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
