"""Command-line front end.

Subcommands map one-to-one onto the library layers: `speed` and
`critical-nu` drive the Newton solver, `twopoint` / `susceptibility` /
`moments` the Green-function machinery, `monotonicity` the certificate,
and `simulate` the Monte Carlo cross-checks.  Curves go out as CSV,
scalars and verdicts as JSON; everything is deterministic given
(config, seed).

Exit codes: 0 success, 1 numerical failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import greenfn, mcsim, monotonicity
from .config import GRID_PRESETS, RunConfig
from .criticality import BracketError, find_nu_c, speed, sweep, sweep_csv
from .discretize import assemble
from .greenfn import DivergenceError
from .kernels import KernelKind
from .mcsim import MCError
from .model import ModelParams
from .spectral import (
    CriticalityError,
    EigenConvergenceError,
    lambda_first_derivs,
    lambda_second_derivs,
)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2

_NUMERICAL_ERRORS = (
    BracketError,
    DivergenceError,
    EigenConvergenceError,
    CriticalityError,
    MCError,
    OverflowError,
    FloatingPointError,
    np.linalg.LinAlgError,
)


class UsageError(ValueError):
    pass


def _write(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _estimate_dict(est: mcsim.WeightedEstimate) -> dict:
    return {
        "estimate": est.value,
        "std_error": est.std_error,
        "ess": est.n_effective,
        "n_samples": est.n_samples,
        "seed": est.seed,
        "n_conditioned": est.n_conditioned,
        "low_confidence": est.low_confidence,
    }


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.grid_preset is not None:
        overrides["grid_preset"] = args.grid_preset
    if args.out is not None:
        overrides["out"] = args.out
    return cfg.replace(**overrides) if overrides else cfg


def cmd_speed(cfg: RunConfig, args) -> int:
    g_list = tuple(args.g) if args.g else cfg.g_values
    if not g_list:
        raise UsageError("speed needs at least one g value")
    if any(g <= 0 for g in g_list):
        raise UsageError("g values must be positive")
    outcome = sweep(
        g_list,
        grid=cfg.grid(),
        tol=cfg.newton_tol,
        phi=cfg.phi(),
        residual_tol=cfg.eigen_residual_tol,
        fp_tol=cfg.fixed_point_tol,
    )
    _write(sweep_csv(outcome.points), cfg.out)

    small = [(p.g, p.theta) for p in outcome.points if 1e-3 <= p.g <= 1e-1]
    fit = None
    if len(small) >= 6:
        pl = greenfn.exponent_fit([s[0] for s in small], [s[1] for s in small])
        fit = {"exponent": pl.exponent, "amplitude": pl.amplitude, "r_squared": pl.r_squared}
    summary = {
        "n_points": len(outcome.points),
        "n_failures": len(outcome.failures),
        "failures": [{"g": g, "error": msg} for g, msg in outcome.failures],
        "small_g_fit": fit,
    }
    if cfg.out is not None:
        sys.stdout.write(_json_text(summary))
    return EXIT_NUMERICAL if outcome.failures else EXIT_OK


def cmd_critical_nu(cfg: RunConfig, args) -> int:
    if not args.g:
        raise UsageError("critical-nu needs at least one g value")
    rows, failed = [], False
    nu_start = 0.0
    for g in args.g:
        try:
            cp = find_nu_c(
                g,
                cfg.grid(),
                tol=cfg.newton_tol,
                phi=cfg.phi(),
                nu_start=nu_start,
                residual_tol=cfg.eigen_residual_tol,
            )
            nu_start = cp.nu_c
            rows.append(
                {
                    "g": g,
                    "nu_c": cp.nu_c,
                    "theta": cp.theta,
                    "gap": cp.gap,
                    "s_max": cp.s_max,
                    "n_nodes": cp.n_nodes,
                }
            )
        except _NUMERICAL_ERRORS as exc:
            failed = True
            rows.append({"g": g, "error": f"{type(exc).__name__}: {exc}"})
    _write(_json_text(rows), cfg.out)
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_twopoint(cfg: RunConfig, args) -> int:
    if args.j_max < 2:
        raise UsageError("--j-max must be >= 2")
    phi = cfg.phi()
    cp = find_nu_c(
        args.g, cfg.grid(), tol=cfg.newton_tol, phi=phi,
        residual_tol=cfg.eigen_residual_tol,
    )
    if args.nu < cp.nu_c and not args.allow_divergent:
        raise UsageError(
            f"nu={args.nu} is below nu_c({args.g}) = {cp.nu_c:.12g}; the two-point "
            "sum diverges there. Pass --allow-divergent to attempt it anyway."
        )
    grid = cp.grid
    params = ModelParams(g=args.g, nu=args.nu, phi=phi)
    M = assemble(KernelKind.K0, params, grid)
    fp = greenfn.fixed_point_q(params, grid, tol=cfg.fixed_point_tol)
    table = greenfn.two_point_table(params, grid, fp, args.j_max, M=M)
    _write(greenfn.two_point_csv(table), cfg.out)

    from .spectral import leading_eigenpair

    lam = leading_eigenpair(M, cfg.eigen_residual_tol).lam
    tail = np.arange(args.j_max // 2, args.j_max + 1)
    decay = None
    if np.all(table[tail] > 0):
        slope = np.polyfit(tail, np.log(table[tail]), 1)[0]
        decay = -float(slope)
    summary = {
        "g": args.g,
        "nu": args.nu,
        "nu_c": cp.nu_c,
        "lambda": lam,
        "expected_decay_rate": -math.log(lam) if lam > 0 else None,
        "fitted_decay_rate": decay,
        "j_max": args.j_max,
    }
    if cfg.out is not None:
        sys.stdout.write(_json_text(summary))
    return EXIT_OK


def _moment_block(params, grid, fp_tol, residual_tol, K):
    M = assemble(KernelKind.K0, params, grid)
    fp = greenfn.fixed_point_q(params, grid, tol=fp_tol)
    from .spectral import leading_eigenpair

    lam = leading_eigenpair(M, residual_tol).lam
    ms = greenfn.moment_sums(params, grid, fp, K_max=K, M=M, lam=lam)
    return ms, lam


def cmd_susceptibility(cfg: RunConfig, args) -> int:
    if args.k_min > args.k_max:
        raise UsageError("--k-min must not exceed --k-max")
    phi = cfg.phi()
    cp = find_nu_c(
        args.g, cfg.grid(), tol=cfg.newton_tol, phi=phi,
        residual_tol=cfg.eigen_residual_tol,
    )
    grid = cp.grid
    if args.nu is not None:
        params = ModelParams(g=args.g, nu=args.nu, phi=phi)
        ms, lam = _moment_block(params, grid, cfg.fixed_point_tol, cfg.eigen_residual_tol, args.K)
        _write(
            _json_text(
                {
                    "g": args.g,
                    "nu": args.nu,
                    "nu_c": cp.nu_c,
                    "lambda": lam,
                    "chi_plus": ms.chi_plus,
                    "chi": ms.chi,
                    "moments": {str(k): v for k, v in ms.moments.items()},
                    "xi": {str(k): v for k, v in ms.xi.items()},
                }
            ),
            cfg.out,
        )
        return EXIT_OK

    rows = []
    offsets = [2.0**-k for k in range(args.k_min, args.k_max + 1)]
    for off in offsets:
        params = ModelParams(g=args.g, nu=cp.nu_c + off, phi=phi)
        ms, _ = _moment_block(params, grid, cfg.fixed_point_tol, cfg.eigen_residual_tol, args.K)
        rows.append({"nu": params.nu, "chi_plus": ms.chi_plus, "xi": ms.xi})
    _write(greenfn.susceptibility_slice_csv(rows), cfg.out)

    chi_fit = greenfn.critical_exponent_fit(offsets, [r["chi_plus"] for r in rows])
    xi_fit = greenfn.critical_exponent_fit(offsets, [r["xi"][1] for r in rows])
    summary = {
        "g": args.g,
        "nu_c": cp.nu_c,
        "gamma_fit": -chi_fit.exponent,
        "nu1_fit": -xi_fit.exponent,
        "offsets": offsets,
    }
    if cfg.out is not None:
        sys.stdout.write(_json_text(summary))
    return EXIT_OK


def cmd_moments(cfg: RunConfig, args) -> int:
    phi = cfg.phi()
    params = ModelParams(g=args.g, nu=args.nu, phi=phi)
    ms, lam = _moment_block(
        params, cfg.grid(), cfg.fixed_point_tol, cfg.eigen_residual_tol, args.K
    )
    _write(
        _json_text(
            {
                "g": args.g,
                "nu": args.nu,
                "lambda": lam,
                "chi_plus": ms.chi_plus,
                "chi": ms.chi,
                "moments": {str(k): v for k, v in ms.moments.items()},
                "xi": {str(k): v for k, v in ms.xi.items()},
            }
        ),
        cfg.out,
    )
    return EXIT_OK


def cmd_monotonicity(cfg: RunConfig, args) -> int:
    g_list = tuple(args.g) if args.g else cfg.g_values
    if not g_list:
        raise UsageError("monotonicity needs at least one g value")
    phi = cfg.phi()
    verdicts, sequences, any_failed = [], [], False
    for g in g_list:
        cp = find_nu_c(
            g, cfg.grid(), tol=cfg.newton_tol, phi=phi,
            residual_tol=cfg.eigen_residual_tol,
        )
        cert = monotonicity.L_lambda(g, N=cfg.cn_terms, phi=phi, cp=cp)
        sequences.append(cert.cn)

        # independent route through the lambda-derivative machinery
        params = ModelParams(g=g, nu=cp.nu_c, phi=phi)
        spec = cp.spec
        dnu, dg = lambda_first_derivs(params, cp.grid, spec)
        d2nu2, d2nudg = lambda_second_derivs(params, cp.grid, spec)
        direct = d2nudg * dnu - d2nu2 * dg
        rel_gap = abs(cert.value - direct) / max(abs(direct), 1e-300)

        entry = monotonicity.certificate_json(cert)
        entry["L_from_derivatives"] = direct
        entry["rel_gap_between_routes"] = rel_gap
        entry["theta_prime"] = -cp.theta**2 * cert.value / (-dnu)
        verdicts.append(entry)
        if not cert.certified:
            any_failed = True
    if cfg.out is not None:
        _write(monotonicity.cn_csv(sequences), cfg.out)
    sys.stdout.write(_json_text(verdicts))
    return EXIT_NUMERICAL if any_failed else EXIT_OK


def cmd_simulate(cfg: RunConfig, args) -> int:
    phi = cfg.phi()
    n = args.n_samples if args.n_samples is not None else cfg.mc_samples
    if args.mode == "moments":
        cp = find_nu_c(
            args.g, cfg.grid(), tol=cfg.newton_tol, phi=phi,
            residual_tol=cfg.eigen_residual_tol,
        )
        if args.tilt == "auto":
            tilt = cp.theta
        elif args.tilt == "none":
            tilt = None
        else:
            tilt = float(args.tilt)
        params = ModelParams(g=args.g, nu=0.0, phi=phi)
        horizons = tuple(args.T) if args.T else cfg.mc_T
        runs = []
        for idx, T in enumerate(horizons):
            est = mcsim.estimate_conditional_moment(
                params, T=T, k=args.k, n_samples=n, seed=cfg.seed + idx, tilt_speed=tilt
            )
            run = _estimate_dict(est)
            run["T"] = T
            runs.append(run)
        if args.samples_out is not None:
            x, w_norm, _, _ = mcsim.conditional_sample(
                params, horizons[-1], n, cfg.seed + len(horizons) - 1, tilt, 10000
            )
            lines = ["x,weight"] + [f"{xi:.11e},{wi:.11e}" for xi, wi in zip(x, w_norm)]
            _write("\n".join(lines) + "\n", args.samples_out)
        out = {
            "mode": "moments",
            "g": args.g,
            "k": args.k,
            "tilt_speed": tilt,
            "spectral_theta": cp.theta,
            "runs": runs,
        }
        _write(_json_text(out), cfg.out)
        return EXIT_OK

    # laplace mode
    if args.nu is None:
        raise UsageError("simulate laplace needs --nu > 0")
    params = ModelParams(g=args.g, nu=args.nu, phi=phi)
    est = mcsim.estimate_laplace_two_point(
        params, N=args.N, i=args.i, j=args.j, n_samples=n, seed=cfg.seed
    )
    out = {
        "mode": "laplace",
        "g": args.g,
        "nu": args.nu,
        "N": args.N,
        "i": args.i,
        "j": args.j,
    }
    out.update(_estimate_dict(est))
    grid = cfg.grid()
    if grid.n <= 6000:
        lo, hi = sorted((args.i, args.j))
        out["spectral_reference"] = greenfn.finite_volume_two_point(
            params, grid, N=args.N, i=lo, j=hi
        )
    _write(_json_text(out), cfg.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="write the primary table/object here instead of stdout")
    common.add_argument(
        "--grid-preset", choices=GRID_PRESETS, help="override the quadrature preset"
    )

    p = argparse.ArgumentParser(
        prog="wsaw1d",
        description="Escape speed, critical point, and correlation structure of the "
        "1d weakly self-avoiding walk, with Monte Carlo cross-checks.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("speed", parents=[common], help="nu_c/theta sweep over g (CSV)")
    sp.add_argument("g", type=float, nargs="*", help="g values (default: config sweep list)")
    sp.set_defaults(func=cmd_speed)

    cn = sub.add_parser("critical-nu", parents=[common], help="critical point nu_c(g) (JSON)")
    cn.add_argument("g", type=float, nargs="+")
    cn.set_defaults(func=cmd_critical_nu)

    tp = sub.add_parser("twopoint", parents=[common], help="two-point function table (CSV)")
    tp.add_argument("g", type=float)
    tp.add_argument("nu", type=float)
    tp.add_argument("--j-max", type=int, default=40)
    tp.add_argument(
        "--allow-divergent",
        action="store_true",
        help="attempt nu < nu_c, where the lattice sum diverges",
    )
    tp.set_defaults(func=cmd_twopoint)

    su = sub.add_parser(
        "susceptibility", parents=[common],
        help="chi and correlation lengths along nu_c + 2^-k (CSV) or at one nu (JSON)",
    )
    su.add_argument("g", type=float)
    su.add_argument("--nu", type=float, help="single-nu mode")
    su.add_argument("--k-min", type=int, default=3)
    su.add_argument("--k-max", type=int, default=12)
    su.add_argument("--K", type=int, default=2, help="highest moment order")
    su.set_defaults(func=cmd_susceptibility)

    mo = sub.add_parser("moments", parents=[common], help="moment sums at one (g, nu) (JSON)")
    mo.add_argument("g", type=float)
    mo.add_argument("nu", type=float)
    mo.add_argument("--K", type=int, default=2)
    mo.set_defaults(func=cmd_moments)

    mn = sub.add_parser(
        "monotonicity", parents=[common], help="speed-monotonicity certificates (JSON)"
    )
    mn.add_argument("g", type=float, nargs="*")
    mn.set_defaults(func=cmd_monotonicity)

    si = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimators (JSON)")
    si.add_argument("mode", choices=("moments", "laplace"))
    si.add_argument("--g", type=float, default=1.0)
    si.add_argument("--k", type=int, default=1, help="moment order (moments mode)")
    si.add_argument("--T", type=float, action="append", help="horizon, repeatable (moments mode)")
    si.add_argument(
        "--tilt",
        default="auto",
        help="proposal tilt for moments mode: auto (spectral theta), none, or a number",
    )
    si.add_argument("--samples-out", help="per-sample diagnostic CSV (moments mode)")
    si.add_argument("--nu", type=float, help="Laplace parameter (laplace mode)")
    si.add_argument("--N", type=int, default=6, help="box half-width (laplace mode)")
    si.add_argument("--i", type=int, default=0)
    si.add_argument("--j", type=int, default=0)
    si.add_argument("--n-samples", type=int, help="override config sample count")
    si.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(cfg, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
