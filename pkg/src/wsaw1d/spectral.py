"""Leading eigenpair, resolvent solves, and parameter derivatives of lambda.

lambda(g, nu) denotes the operator norm (largest eigenvalue) of the
discretized K0 operator.  First derivatives come from the eigenvector
sandwich (Hellmann-Feynman)

    d lambda / d nu = <M_nu h, h>,    d lambda / d g = <M_g h, h>,

and second derivatives from the rank-reduced resolvent formula

    lambda_{nu *} = <M_{nu *} h, h>
                  + 2 <(lambda I - M)^{-1} Pperp M_* h, Pperp M_nu h>,

where Pperp projects off the eigenvector, well posed because the leading
eigenvalue is simple (positive spectral gap).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, lu_factor, lu_solve

from .discretize import DiscretizedOperator, QuadGrid, assemble
from .kernels import KernelKind
from .model import ModelParams

_RESIDUAL_TOL = 1e-10
_GAP_MIN = 1e-8
# proximity of the resolvent shift to the top eigenvalue that we refuse
_CRITICAL_PROXIMITY = 1e-10


class CriticalityError(RuntimeError):
    """Resolvent shift indistinguishable from an eigenvalue (at criticality)."""


class EigenConvergenceError(RuntimeError):
    """Eigenpair residual exceeded tolerance."""


@dataclass
class SpectralResult:
    """Leading eigenpair of a K0 matrix with optional lambda derivatives.

    h is the sqrt(w)-scaled eigenvector, unit 2-norm, sign-fixed so its
    largest-magnitude entry is positive.  Far-tail entries may underflow to
    exactly zero; positivity holds wherever the matrix carries mass.
    """

    lam: float
    h: np.ndarray
    gap: float
    residual: float
    dlambda_dnu: float | None = None
    dlambda_dg: float | None = None
    d2lambda_dnu2: float | None = None
    d2lambda_dnudg: float | None = None


def _finalize_eigenpair(lam, lam2, h, residual, residual_tol=_RESIDUAL_TOL) -> SpectralResult:
    if h[np.argmax(np.abs(h))] < 0:
        h = -h
    if np.min(h) < -1e-12:
        raise EigenConvergenceError(
            f"leading eigenvector has negative entries (min {np.min(h):.3e})"
        )
    gap = lam - lam2
    if gap <= 0:
        raise EigenConvergenceError(f"leading eigenvalue not simple (gap {gap:.3e})")
    # backward error of the symmetric eigensolve scales with ||M|| = lam, so
    # judge the residual relative to lam once it exceeds 1 (the critical
    # region lam ~ 1 keeps the absolute reading)
    if residual > residual_tol * max(1.0, abs(lam)):
        raise EigenConvergenceError(f"eigenpair residual {residual:.3e} > {residual_tol}")
    return SpectralResult(lam=float(lam), h=h, gap=float(gap), residual=float(residual))


def leading_eigenpair_dense(M: np.ndarray, residual_tol: float = _RESIDUAL_TOL) -> SpectralResult:
    """Top eigenpair and spectral gap of a dense symmetric matrix."""
    n = M.shape[0]
    vals, vecs = eigh(M, subset_by_index=[n - 2, n - 1])
    lam, lam2 = float(vals[1]), float(vals[0])
    h = vecs[:, 1]
    residual = float(np.linalg.norm(M @ h - lam * h))
    return _finalize_eigenpair(lam, lam2, h, residual, residual_tol)


def leading_eigenpair(op: DiscretizedOperator, residual_tol: float = _RESIDUAL_TOL) -> SpectralResult:
    """Top eigenpair of a symmetric discretized operator (K0 and kin)."""
    if not op.symmetric:
        raise ValueError("leading_eigenpair expects a symmetric operator")
    return leading_eigenpair_dense(op.matrix, residual_tol)


def leading_eigenpair_from_factors(U: np.ndarray, residual_tol: float = _RESIDUAL_TOL) -> SpectralResult:
    """Top eigenpair of M = U U^T via the Gram matrix U^T U.

    The nonzero eigenvalues of U U^T and U^T U coincide, and U y maps Gram
    eigenvectors back to grid space; this handles grids far too large for
    dense assembly.
    """
    B = U.T @ U
    r = B.shape[0]
    vals, vecs = eigh(B, subset_by_index=[r - 2, r - 1])
    lam, lam2 = float(vals[1]), float(vals[0])
    h = U @ vecs[:, 1]
    h /= np.linalg.norm(h)
    residual = float(np.linalg.norm(U @ (U.T @ h) - lam * h))
    return _finalize_eigenpair(lam, lam2, h, residual, residual_tol)


def lambda_first_derivs(
    params: ModelParams,
    grid: QuadGrid,
    spec: SpectralResult,
    M_nu: DiscretizedOperator | None = None,
    M_g: DiscretizedOperator | None = None,
) -> tuple[float, float]:
    """(d lambda/d nu, d lambda/d g) by the eigenvector sandwich; both < 0."""
    h = spec.h
    if M_nu is None:
        M_nu = assemble(KernelKind.DNU_K0, params, grid)
    if M_g is None:
        M_g = assemble(KernelKind.DG_K0, params, grid)
    dnu = float(h @ (M_nu.matrix @ h))
    dg = float(h @ (M_g.matrix @ h))
    if dnu >= 0 or dg >= 0:
        raise EigenConvergenceError(
            f"lambda derivatives must be negative, got dnu={dnu:.3e}, dg={dg:.3e}"
        )
    spec.dlambda_dnu, spec.dlambda_dg = dnu, dg
    return dnu, dg


def lambda_second_derivs(
    params: ModelParams,
    grid: QuadGrid,
    spec: SpectralResult,
    M: DiscretizedOperator | None = None,
) -> tuple[float, float]:
    """(d2 lambda/d nu2, d2 lambda/d nu d g) by the resolvent formula.

    Solves on the eigenvector complement via the rank-one-deflated system
    (lambda I - M + h h^T), projecting before and after, which is exactly
    (lambda I - M)^{-1} restricted off the null direction.
    """
    if spec.gap < _GAP_MIN:
        raise EigenConvergenceError(f"gap {spec.gap:.3e} too small for second derivatives")
    h = spec.h
    if M is None:
        M = assemble(KernelKind.K0, params, grid)
    M_nu = assemble(KernelKind.DNU_K0, params, grid)
    M_g = assemble(KernelKind.DG_K0, params, grid)
    M_nunu = assemble(KernelKind.D2NU_K0, params, grid)
    M_nug = assemble(KernelKind.DNU_DG_K0, params, grid)

    v_nu = M_nu.matrix @ h
    v_g = M_g.matrix @ h
    p_nu = v_nu - (h @ v_nu) * h
    p_g = v_g - (h @ v_g) * h

    B = spec.lam * np.eye(len(h)) - M.matrix + np.outer(h, h)
    lu = lu_factor(B)
    x_nu = lu_solve(lu, p_nu)
    x_nu -= (h @ x_nu) * h
    x_g = lu_solve(lu, p_g)
    x_g -= (h @ x_g) * h

    d2nu2 = float(h @ (M_nunu.matrix @ h) + 2.0 * (x_nu @ p_nu))
    d2nudg = float(h @ (M_nug.matrix @ h) + 2.0 * (x_g @ p_nu))
    if d2nu2 < 0:
        raise EigenConvergenceError(f"d2 lambda/d nu2 = {d2nu2:.3e} violates convexity")
    spec.d2lambda_dnu2, spec.d2lambda_dnudg = d2nu2, d2nudg
    return d2nu2, d2nudg


class Resolvent:
    """Reusable LU factorization of (shift I - M) with residual checking."""

    def __init__(self, M: np.ndarray, shift: float, lam_max: float | None = None):
        if lam_max is not None and abs(shift - lam_max) < _CRITICAL_PROXIMITY:
            raise CriticalityError(
                f"shift {shift} within {_CRITICAL_PROXIMITY} of top eigenvalue {lam_max}"
            )
        self.shift = float(shift)
        self._M = M
        self._lu = lu_factor(shift * np.eye(M.shape[0]) - M)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x = lu_solve(self._lu, rhs)
        res = np.linalg.norm(self.shift * x - self._M @ x - rhs)
        bound = _RESIDUAL_TOL * max(np.linalg.norm(rhs), 1e-300)
        if res > bound:
            raise CriticalityError(
                f"resolvent residual {res:.3e} exceeds {bound:.3e}; "
                f"shift {self.shift} is too close to the spectrum"
            )
        return x


def resolvent_solve(
    M: DiscretizedOperator | np.ndarray,
    shift: float,
    rhs: np.ndarray,
    lam_max: float | None = None,
) -> np.ndarray:
    """Solve (shift I - M) x = rhs directly, residual-checked."""
    A = M.matrix if isinstance(M, DiscretizedOperator) else M
    return Resolvent(A, shift, lam_max=lam_max).solve(rhs)
