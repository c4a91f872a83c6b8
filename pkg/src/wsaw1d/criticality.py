"""Critical point nu_c(g), escape speed theta(g), and parameter sweeps.

nu_c(g) is the root of lambda(g, nu) = 1.  Since lambda is strictly
decreasing and convex in nu, a Newton iteration with the exact derivative
(eigenvector sandwich) and a bisection safeguard converges in a handful of
steps.  The escape speed is theta(g) = 1 / (-d lambda/d nu) at nu_c.

The nu dependence of the kernel is a diagonal similarity,
M(nu) = D M(0) D with D = diag(e^{-nu t_i / 2}), so one assembly per g
serves every Newton step.  A cheap diagonal test in log space certifies
lambda > 1 before assembling anything that would overflow at very negative
nu probes.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from . import greenfn
from .discretize import (
    QuadGrid,
    _DENSE_NODE_LIMIT,
    assemble,
    default_grid,
    k0_factors,
    k1_weighted_factors,
    with_s_max,
)
from .kernels import KernelKind, bessel_i0_scaled
from .model import ModelParams, PhiSpec, log_p, phi_eval
from .spectral import (
    SpectralResult,
    leading_eigenpair_dense,
    leading_eigenpair_from_factors,
)

_BRACKET_LO = -50.0
_BRACKET_HI = 5.0
_MAX_NEWTON_ITERS = 100
_TAIL_MASS_LIMIT = 1e-10
_MAX_EXTENSIONS = 4


class BracketError(RuntimeError):
    """No sign change of lambda - 1 inside the admissible nu bracket."""


@dataclass
class CriticalPoint:
    """nu_c and speed data for one g, with grid diagnostics."""

    g: float
    nu_c: float
    theta: float
    dlambda_dnu_at_nuc: float
    gap: float
    s_max: float
    n_nodes: int
    u_bar: float | None = None
    newton_iters: int = 0
    grid: QuadGrid = field(repr=False, default=None)
    spec: SpectralResult = field(repr=False, default=None)


class OperatorFamily:
    """K0 matrices at fixed g across nu, via the diagonal-similarity rescale."""

    def __init__(self, g: float, grid: QuadGrid, phi: PhiSpec, residual_tol: float = 1e-10):
        self.g = g
        self.grid = grid
        self.phi = phi
        self.residual_tol = residual_tol
        self.dense = grid.n <= _DENSE_NODE_LIMIT
        t = grid.nodes
        self.t = t
        self.phi_t = phi_eval(phi, t)
        rt = np.sqrt(t)
        # diag of M(nu=0) in log space: M_ii = w_i p(t_i) [e^{-x} I0(x)] at x=2t_i
        self._diag_log0 = (
            np.log(grid.weights) - g * self.phi_t + np.log(bessel_i0_scaled(2.0 * t))
        )
        if self.dense:
            base = ModelParams(g=g, nu=0.0, phi=phi)
            self._E0 = (
                (0.5 * log_p(base, t))[:, None]
                + (0.5 * log_p(base, t))[None, :]
                - (rt[:, None] - rt[None, :]) ** 2
            )
            sw = np.sqrt(grid.weights)
            self._C = (
                sw[:, None] * bessel_i0_scaled(2.0 * rt[:, None] * rt[None, :]) * sw[None, :]
            )

    def diag_certifies_supercritical(self, nu: float) -> bool:
        """True when some diagonal entry alone forces lambda(g, nu) > 1."""
        return bool(np.max(self._diag_log0 - nu * self.t) > 0.0)

    def matrix(self, nu: float) -> np.ndarray:
        ex = self._E0 - 0.5 * nu * (self.t[:, None] + self.t[None, :])
        return np.exp(ex) * self._C

    def eigenpair(self, nu: float) -> SpectralResult:
        if self.dense:
            return leading_eigenpair_dense(self.matrix(nu), self.residual_tol)
        params = ModelParams(g=self.g, nu=nu, phi=self.phi)
        return leading_eigenpair_from_factors(k0_factors(params, self.grid), self.residual_tol)

    def dlambda_dnu(self, nu: float, spec: SpectralResult) -> float:
        """Sandwich h' M_nu h using M_nu = -(t_i+t_j)/2 * M elementwise."""
        h = spec.h
        th = self.t * h
        if self.dense:
            Mh = self.matrix(nu) @ h
        else:
            U = k0_factors(ModelParams(g=self.g, nu=nu, phi=self.phi), self.grid)
            Mh = U @ (U.T @ h)
        return float(-(th @ Mh))


def find_nu_c(
    g: float,
    grid: QuadGrid | None = None,
    tol: float = 1e-12,
    phi: PhiSpec | None = None,
    nu_start: float = 0.0,
    auto_extend: bool = True,
    residual_tol: float = 1e-10,
) -> CriticalPoint:
    """Solve lambda(g, nu) = 1 for nu by safeguarded Newton.

    Seeds from nu_start (0 by default, or a warm start), keeps a bracket
    [lo, hi] with lambda > 1 on the left and < 1 on the right, and falls
    back to bisection whenever the Newton candidate leaves the bracket.
    If the converged eigenvector carries more than 1e-10 of its mass in the
    last panel, the grid is rebuilt with s_max * 1.5 and the solve repeats.
    """
    if g < 0:
        raise ValueError("g must be >= 0")
    if tol < 1e-12:
        raise ValueError("tol must be >= 1e-12")
    phi = phi or PhiSpec.quadratic()
    grid = grid if grid is not None else default_grid()

    for extension in range(_MAX_EXTENSIONS + 1):
        family = OperatorFamily(g, grid, phi, residual_tol=residual_tol)
        lo, hi = None, None
        nu = float(np.clip(nu_start, _BRACKET_LO, _BRACKET_HI))
        spec = None
        iters = 0
        while True:
            iters += 1
            if iters > _MAX_NEWTON_ITERS:
                raise BracketError(
                    f"no convergence after {_MAX_NEWTON_ITERS} iterations at g={g}"
                )
            if family.diag_certifies_supercritical(nu):
                lam = None
            else:
                spec = family.eigenpair(nu)
                lam = spec.lam
            if lam is None or lam > 1.0:
                lo = nu
            else:
                hi = nu
            if lam is not None and abs(lam - 1.0) <= tol:
                nu_c = nu
                break
            if lam is None:
                # certified supercritical without a usable eigenpair; without a
                # right bracket, probe rightward (toward smaller lambda)
                nu = 0.5 * (lo + hi) if hi is not None else max(0.5 * lo, lo + 1.0)
                continue
            dlam = family.dlambda_dnu(nu, spec)
            candidate = nu - (lam - 1.0) / dlam
            if lo is not None and hi is not None and not (lo < candidate < hi):
                candidate = 0.5 * (lo + hi)
            if candidate < _BRACKET_LO or candidate > _BRACKET_HI:
                raise BracketError(
                    f"nu left the bracket [{_BRACKET_LO}, {_BRACKET_HI}] at g={g}"
                )
            nu = candidate

        tail = float(np.linalg.norm(spec.h[grid.last_panel_slice()]))
        if auto_extend and tail > _TAIL_MASS_LIMIT and extension < _MAX_EXTENSIONS:
            grid = with_s_max(grid, 1.5 * grid.s_max)
            nu_start = nu_c
            continue
        if tail > _TAIL_MASS_LIMIT:
            raise BracketError(
                f"eigenvector tail mass {tail:.2e} persists after {_MAX_EXTENSIONS} "
                f"s_max extensions at g={g}"
            )
        dlam = family.dlambda_dnu(nu_c, spec)
        return CriticalPoint(
            g=g,
            nu_c=nu_c,
            theta=-1.0 / dlam,
            dlambda_dnu_at_nuc=dlam,
            gap=spec.gap,
            s_max=grid.s_max,
            n_nodes=grid.n,
            newton_iters=iters,
            grid=grid,
            spec=spec,
        )


def speed(
    g: float,
    grid: QuadGrid | None = None,
    tol: float = 1e-12,
    phi: PhiSpec | None = None,
    nu_start: float = 0.0,
    residual_tol: float = 1e-10,
    fp_tol: float = 1e-10,
) -> CriticalPoint:
    """find_nu_c plus the overlap u_bar = <q, h>^2 of the affine fixed point."""
    cp = find_nu_c(g, grid, tol=tol, phi=phi, nu_start=nu_start, residual_tol=residual_tol)
    params = ModelParams(g=g, nu=cp.nu_c, phi=phi or PhiSpec.quadratic())
    if cp.grid.n <= _DENSE_NODE_LIMIT:
        A = assemble(KernelKind.K1_WEIGHTED, params, cp.grid)
        fp = greenfn.fixed_point_q(params, cp.grid, A=A, tol=fp_tol)
    else:
        U1, V0 = k1_weighted_factors(params, cp.grid)
        fp = greenfn.fixed_point_q(
            params, cp.grid, A_apply=lambda f: U1 @ (V0.T @ f), tol=fp_tol
        )
    cp.u_bar = float(fp.q @ cp.spec.h) ** 2
    return cp


@dataclass
class SweepOutcome:
    points: list[CriticalPoint]
    failures: list[tuple[float, str]]


def sweep(
    g_values,
    grid: QuadGrid | None = None,
    tol: float = 1e-12,
    phi: PhiSpec | None = None,
    residual_tol: float = 1e-10,
    fp_tol: float = 1e-10,
) -> SweepOutcome:
    """speed() over a sorted g list, warm-starting Newton from the last nu_c."""
    points, failures = [], []
    nu_start = 0.0
    for g in g_values:
        try:
            cp = speed(
                g, grid, tol=tol, phi=phi, nu_start=nu_start,
                residual_tol=residual_tol, fp_tol=fp_tol,
            )
            points.append(cp)
            nu_start = cp.nu_c
        except Exception as exc:  # sweep must survive per-point failures
            failures.append((float(g), f"{type(exc).__name__}: {exc}"))
    return SweepOutcome(points=points, failures=failures)


SWEEP_CSV_HEADER = "g,nu_c,theta,u_bar,gap,s_max,n_nodes"


def sweep_csv(points: list[CriticalPoint]) -> str:
    """CSV rows (12 significant digits) in the documented column order."""
    buf = io.StringIO()
    buf.write(SWEEP_CSV_HEADER + "\n")
    for p in points:
        u_bar = p.u_bar if p.u_bar is not None else float("nan")
        buf.write(
            f"{p.g:.11e},{p.nu_c:.11e},{p.theta:.11e},{u_bar:.11e},"
            f"{p.gap:.11e},{p.s_max:.11e},{p.n_nodes}\n"
        )
    return buf.getvalue()
