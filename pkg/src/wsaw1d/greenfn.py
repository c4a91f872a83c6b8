"""Two-point function, susceptibility, moment sums, and correlation lengths.

The half-line boundary contribution is the fixed point q of the affine
operator T (offset sqrt(p(t)) e^{-t} plus the K1Weighted integral part);
the two-point function between sites i <= j is then

    G_ij = <Q^{j-i} q, q>,

with Q the K0 operator.  Sums over j reduce to resolvent solves:

    chi_plus = sum_{j>=1} G_0j = <Q (1-Q)^{-1} q, q>,
    sum_{j>=1} j^k G_0j = sum_m S(k,m) m! <Q^m (1-Q)^{-(m+1)} q, q>,

the latter via the Stirling-number expansion of sum j^k z^j.  All vectors
are sqrt(w)-scaled so plain dot products are the L^2 pairings.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .discretize import (
    DiscretizedOperator,
    QuadGrid,
    apply_T,
    assemble,
    sqrt_p_vector,
    t_affine_offset,
)
from .kernels import KernelKind
from .model import ModelParams
from .spectral import Resolvent

_FP_TOL = 1e-10
_FP_MAX_ITERS = 10_000
_NONCONTRACTION_WINDOW = 50
_SUBCRITICAL_MARGIN = 1e-8
_OVERFLOW_SCALE = 1e250
_K_MAX_SUPPORTED = 6


class DivergenceError(RuntimeError):
    """Iteration diverged (nu below nu_c for the requested quantity)."""


@dataclass
class FixedPoint:
    """Fixed point of the affine operator with iteration diagnostics."""

    q: np.ndarray
    iterations: int
    residual: float
    params: ModelParams


@dataclass
class MomentSums:
    """chi_plus, one-sided moment sums, and correlation lengths xi_k."""

    chi_plus: float
    chi: float
    moments: dict[int, float]
    xi: dict[int, float]


def fixed_point_q(
    params: ModelParams,
    grid: QuadGrid,
    A: DiscretizedOperator | None = None,
    A_apply=None,
    tol: float = _FP_TOL,
    max_iter: int = _FP_MAX_ITERS,
) -> FixedPoint:
    """Iterate f <- offset + A f from sqrt(p) until the increment is <= tol.

    The linear part must be a strict contraction (true up to and including
    nu = nu_c); a run of non-decreasing increments triggers a divergence
    error naming the parameter point.
    """
    if A_apply is None:
        if A is None:
            A = assemble(KernelKind.K1_WEIGHTED, params, grid)
        matrix = A.matrix

        def A_apply(f):
            return matrix @ f

    b = t_affine_offset(params, grid)
    f = sqrt_p_vector(params, grid)
    prev_inc = np.inf
    bad_streak = 0
    for it in range(1, max_iter + 1):
        f_new = b + A_apply(f)
        inc = float(np.linalg.norm(f_new - f))
        f = f_new
        if inc <= tol:
            return FixedPoint(q=f, iterations=it, residual=inc, params=params)
        if inc >= prev_inc:
            bad_streak += 1
            if bad_streak >= _NONCONTRACTION_WINDOW:
                raise DivergenceError(
                    f"affine iteration is not contracting at g={params.g}, "
                    f"nu={params.nu} (increment {inc:.3e})"
                )
        else:
            bad_streak = 0
        prev_inc = inc
    raise DivergenceError(
        f"fixed point not reached in {max_iter} iterations at g={params.g}, "
        f"nu={params.nu} (increment {prev_inc:.3e})"
    )


def _bridge(M: np.ndarray, v: np.ndarray, steps: int, params: ModelParams) -> np.ndarray:
    for _ in range(steps):
        v = M @ v
        if np.max(np.abs(v)) > _OVERFLOW_SCALE:
            raise DivergenceError(
                f"Q-power iteration diverging at g={params.g}, nu={params.nu}; "
                "nu is below nu_c for this separation"
            )
    return v


def two_point(
    params: ModelParams,
    grid: QuadGrid,
    fp: FixedPoint,
    i: int,
    j: int,
    M: DiscretizedOperator | None = None,
) -> float:
    """G_ij = <Q^{|j-i|} q, q> by repeated mat-vec; defined for nu >= nu_c."""
    if M is None:
        M = assemble(KernelKind.K0, params, grid)
    v = _bridge(M.matrix, fp.q, abs(j - i), params)
    return float(fp.q @ v)


def two_point_table(
    params: ModelParams,
    grid: QuadGrid,
    fp: FixedPoint,
    j_max: int,
    M: DiscretizedOperator | None = None,
) -> np.ndarray:
    """[G_00, G_01, ..., G_0jmax] sharing one running Q-power vector."""
    if M is None:
        M = assemble(KernelKind.K0, params, grid)
    out = np.empty(j_max + 1)
    v = fp.q
    out[0] = fp.q @ v
    for j in range(1, j_max + 1):
        v = _bridge(M.matrix, v, 1, params)
        out[j] = fp.q @ v
    return out


def finite_volume_two_point(
    params: ModelParams,
    grid: QuadGrid,
    N: int,
    i: int,
    j: int,
    M: DiscretizedOperator | None = None,
    A: DiscretizedOperator | None = None,
) -> float:
    """Two-point function on the box [-N, N]:

        G^N_ij = <Q^{j-i} T^{N+i}[sqrt p], T^{N-j}[sqrt p]>,

    the two affine-power vectors carrying the finite left/right half-lines.
    """
    if not (-N <= i <= j <= N):
        raise ValueError(f"need -N <= i <= j <= N, got N={N}, i={i}, j={j}")
    if M is None:
        M = assemble(KernelKind.K0, params, grid)
    if A is None:
        A = assemble(KernelKind.K1_WEIGHTED, params, grid)

    def t_power(k: int) -> np.ndarray:
        f = sqrt_p_vector(params, grid)
        for _ in range(k):
            f = apply_T(params, grid, A, f)
        return f

    left = t_power(N + i)
    right = t_power(N - j)
    return float(right @ _bridge(M.matrix, left, j - i, params))


def _subcritical_lambda(M: DiscretizedOperator, lam: float | None) -> float:
    if lam is None:
        from .spectral import leading_eigenpair

        lam = leading_eigenpair(M).lam
    if lam >= 1.0 - _SUBCRITICAL_MARGIN:
        raise DivergenceError(
            f"lambda = {lam:.12f} is not below 1 - {_SUBCRITICAL_MARGIN}; "
            "susceptibility diverges at the critical point"
        )
    return lam


def susceptibility_plus(
    params: ModelParams,
    grid: QuadGrid,
    fp: FixedPoint,
    M: DiscretizedOperator | None = None,
    lam: float | None = None,
) -> float:
    """One-sided susceptibility <Q (1-Q)^{-1} q, q>, for nu strictly above nu_c."""
    if M is None:
        M = assemble(KernelKind.K0, params, grid)
    lam = _subcritical_lambda(M, lam)
    solver = Resolvent(M.matrix, 1.0, lam_max=lam)
    x = solver.solve(fp.q)
    return float(fp.q @ (M.matrix @ x))


def _stirling2(k_max: int) -> list[list[int]]:
    """Stirling numbers of the second kind S(k, m) for k, m <= k_max."""
    S = [[0] * (k_max + 1) for _ in range(k_max + 1)]
    S[0][0] = 1
    for k in range(1, k_max + 1):
        for m in range(1, k + 1):
            S[k][m] = m * S[k - 1][m] + S[k - 1][m - 1]
    return S


def moment_sums(
    params: ModelParams,
    grid: QuadGrid,
    fp: FixedPoint,
    K_max: int,
    M: DiscretizedOperator | None = None,
    lam: float | None = None,
) -> MomentSums:
    """Moment sums sum_{j>=1} j^k G_0j and correlation lengths, k <= K_max.

    Uses one LU factorization of (1 - Q) for the whole chain
    <Q^m (1-Q)^{-(m+1)} q, q>, m = 1..K_max, then combines with Stirling
    weights.  xi_k symmetrizes over both signs of j through
    chi = 2 chi_plus + G_00.
    """
    if not 1 <= K_max <= _K_MAX_SUPPORTED:
        raise ValueError(f"K_max must be in 1..{_K_MAX_SUPPORTED}")
    if M is None:
        M = assemble(KernelKind.K0, params, grid)
    lam = _subcritical_lambda(M, lam)
    solver = Resolvent(M.matrix, 1.0, lam_max=lam)

    q = fp.q
    r = solver.solve(q)
    chi_plus = float(q @ (M.matrix @ r))
    g00 = float(q @ q)
    chi = 2.0 * chi_plus + g00

    base = {}
    w = q
    for m in range(1, K_max + 1):
        w = M.matrix @ solver.solve(w)
        base[m] = float(w @ r)

    S = _stirling2(K_max)
    moments, xi = {}, {}
    for k in range(1, K_max + 1):
        moments[k] = sum(S[k][m] * math.factorial(m) * base[m] for m in range(1, k + 1))
        xi[k] = (2.0 * moments[k] / chi) ** (1.0 / k)
    return MomentSums(chi_plus=chi_plus, chi=chi, moments=moments, xi=xi)


@dataclass
class PowerLawFit:
    exponent: float
    amplitude: float
    r_squared: float


def exponent_fit(xs, ys) -> PowerLawFit:
    """Least-squares power-law fit log y = a log x + log C, >= 6 points."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 6:
        raise ValueError("power-law fit needs at least 6 points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("power-law fit needs positive data")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return PowerLawFit(exponent=float(slope), amplitude=float(np.exp(intercept)), r_squared=r2)


def critical_exponent_fit(offsets, values, n_drop_coarse: int = 2) -> PowerLawFit:
    """Power-law fit of a quantity against nu - nu_c, for exponent extraction.

    The coarsest offsets are discarded before fitting: chi_plus and the
    moment sums carry an O(nu - nu_c) correction to the leading power law
    (chi_plus = A/x - B + ..., with B/A around 2 at g = 1), so the largest
    offsets bias the fitted slope while the near-critical points are clean
    as long as nu_c itself is resolved far below the finest offset.
    """
    order = np.argsort(np.asarray(offsets, dtype=float))
    keep = order[: order.size - n_drop_coarse] if n_drop_coarse > 0 else order
    xs = np.asarray(offsets, dtype=float)[keep]
    ys = np.asarray(values, dtype=float)[keep]
    return exponent_fit(xs, ys)


def two_point_csv(values: np.ndarray) -> str:
    """CSV table (j, G_0j)."""
    buf = io.StringIO()
    buf.write("j,G0j\n")
    for j, v in enumerate(values):
        buf.write(f"{j},{v:.11e}\n")
    return buf.getvalue()


def susceptibility_slice_csv(rows: list[dict]) -> str:
    """CSV table over a nu slice: nu, chi_plus, then xi_1..xi_k columns."""
    if not rows:
        return "nu,chi_plus\n"
    k_list = sorted(rows[0]["xi"].keys())
    buf = io.StringIO()
    buf.write("nu,chi_plus," + ",".join(f"xi_{k}" for k in k_list) + "\n")
    for row in rows:
        xi_cols = ",".join(f"{row['xi'][k]:.11e}" for k in k_list)
        buf.write(f"{row['nu']:.11e},{row['chi_plus']:.11e},{xi_cols}\n")
    return buf.getvalue()
