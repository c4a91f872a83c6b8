"""Speed-monotonicity certificate via the c_n sequence.

With h0 the unit eigenvector of Q at (g, nu_c(g)) and discrete integrals
I_t = sum t h0^2, I_phi = sum phi h0^2, define

    c_n = <Q^n [t h0], phi h0> I_t - <Q^n [t h0], t h0> I_phi.

The combination L[lambda] = lambda_{nu g} lambda_nu - lambda_{nu nu}
lambda_g equals -c_0 - 2 sum_{n>=1} c_n, and the escape speed is strictly
increasing in g exactly when this is negative.  c_0 > 0 and c_n >= 0 hold
by a stochastic-dominance argument whose two density-ratio reductions
(phi(s)/s and the Bessel ratio) are checked numerically here.

The h0 component of t h0 contributes exactly zero to every c_n (the two
products cancel term by term), so it is deflated away up front; the
remaining iterates decay at the spectral-gap rate, which gives the
geometric tail bound.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .criticality import CriticalPoint, find_nu_c
from .discretize import QuadGrid, assemble
from .kernels import KernelKind, bessel_i0_scaled
from .model import ModelParams, PhiSpec, phi_eval
from .spectral import EigenConvergenceError

_GAP_MIN_FOR_TAIL = 1e-3
_DOMINANCE_SLACK = 1e-12


@dataclass
class CnSequence:
    g: float
    nu_c: float
    values: np.ndarray
    N: int
    tail_bound: float
    mu2: float


@dataclass
class Certificate:
    """L[lambda] estimate with truncation tail and sign verdict."""

    g: float
    value: float
    tail: float
    certified: bool
    cn: CnSequence = field(repr=False, default=None)


def cn_sequence(
    g: float,
    grid: QuadGrid | None = None,
    N: int = 50,
    phi: PhiSpec | None = None,
    cp: CriticalPoint | None = None,
    phi_values: np.ndarray | None = None,
) -> CnSequence:
    """c_0..c_N at (g, nu_c(g)) with a geometric tail bound.

    phi_values overrides the sampled interaction inside the c_n formula
    only (the operator stays at the true model); its one intended use is
    the linear-phi null test where every c_n vanishes identically.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    phi = phi or PhiSpec.quadratic()
    if cp is None:
        cp = find_nu_c(g, grid, phi=phi)
    grid = cp.grid
    h = cp.spec.h
    t = grid.nodes
    phi_t = phi_values if phi_values is not None else phi_eval(phi, t)

    mu2 = 1.0 - cp.gap
    if cp.gap < _GAP_MIN_FOR_TAIL or mu2 >= 1.0:
        raise EigenConvergenceError(
            f"spectral gap {cp.gap:.3e} too small for a c_n tail bound at g={g}"
        )

    params = ModelParams(g=g, nu=cp.nu_c, phi=phi)
    M = assemble(KernelKind.K0, params, grid).matrix

    y_t = t * h
    y_phi = phi_t * h
    I_t = float(y_t @ h)
    I_phi = float(y_phi @ h)

    # the h0 component of u contributes exactly (I_phi I_t - I_t I_phi) = 0
    v = y_t - (y_t @ h) * h
    values = np.empty(N + 1)
    for n in range(N + 1):
        values[n] = (v @ y_phi) * I_t - (v @ y_t) * I_phi
        if n < N:
            v = M @ v
    tail = float(abs(values[N]) * mu2 / (1.0 - mu2))
    return CnSequence(g=g, nu_c=cp.nu_c, values=values, N=N, tail_bound=tail, mu2=mu2)


def L_lambda(
    g: float,
    grid: QuadGrid | None = None,
    N: int = 50,
    phi: PhiSpec | None = None,
    cp: CriticalPoint | None = None,
    cn: CnSequence | None = None,
) -> Certificate:
    """Certificate L[lambda] = -c_0 - 2 sum c_n; negative iff theta'(g) > 0."""
    if cn is None:
        cn = cn_sequence(g, grid, N=N, phi=phi, cp=cp)
    value = float(-cn.values[0] - 2.0 * np.sum(cn.values[1:]))
    tail = 2.0 * cn.tail_bound
    return Certificate(g=g, value=value, tail=tail, certified=value + tail < 0.0, cn=cn)


def theta_derivative(
    g: float,
    grid: QuadGrid | None = None,
    N: int = 50,
    phi: PhiSpec | None = None,
) -> float:
    """theta'(g) = -theta^2 L[lambda] / (-lambda_nu), from the certificate."""
    cp = find_nu_c(g, grid, phi=phi)
    cert = L_lambda(g, grid, N=N, phi=phi, cp=cp)
    return -cp.theta**2 * cert.value / (-cp.dlambda_dnu_at_nuc)


@dataclass
class DominancePair:
    x: float
    y: float
    min_slack: float
    passed: bool


@dataclass
class DominanceReport:
    g: float
    n: int
    phi_ratio_ok: bool
    pairs: list[DominancePair]

    @property
    def all_pass(self) -> bool:
        return self.phi_ratio_ok and all(p.passed for p in self.pairs)


def dominance_check(
    g: float,
    grid: QuadGrid | None = None,
    n: int = 1,
    samples: int = 100,
    seed: int = 0,
    s_points: int = 200,
) -> DominanceReport:
    """Numerical check of the two density-ratio monotonicity reductions.

    For n=0 the relevant likelihood ratio is proportional to phi(s)/s,
    which must be nondecreasing; for n>=1 it is s -> I0(2 sqrt(s y)) /
    I0(2 sqrt(s x)) for x <= y.  Report-style: failures are recorded, not
    raised, since they would indicate discretization artifacts.
    """
    phi = PhiSpec.quadratic()
    s_max = grid.s_max if grid is not None else 100.0
    rng = np.random.default_rng(seed)
    s = np.linspace(s_max / s_points, s_max, s_points)

    ratio = phi_eval(phi, s) / s
    phi_ratio_ok = bool(np.all(np.diff(ratio) >= -_DOMINANCE_SLACK))

    pairs = []
    if n >= 1:
        for _ in range(samples):
            x, y = np.sort(rng.uniform(0.0, s_max, size=2))
            # log of I0(2 sqrt(sy))/I0(2 sqrt(sx)) via scaled Bessels
            log_r = (
                np.log(bessel_i0_scaled(2.0 * np.sqrt(s * y)))
                - np.log(bessel_i0_scaled(2.0 * np.sqrt(s * x)))
                + 2.0 * np.sqrt(s) * (np.sqrt(y) - np.sqrt(x))
            )
            slack = float(np.min(np.diff(log_r)))
            pairs.append(DominancePair(x=x, y=y, min_slack=slack, passed=slack >= -_DOMINANCE_SLACK))
    return DominanceReport(g=g, n=n, phi_ratio_ok=phi_ratio_ok, pairs=pairs)


@dataclass
class HnRow:
    n: int
    from_cn: float
    from_fd: float
    rel_discrepancy: float


@dataclass
class HnReport:
    g: float
    rows: list[HnRow]
    L_lambda_value: float
    gaps_to_L: list[float]


def Hn_consistency(
    g: float,
    grid: QuadGrid | None = None,
    n_list: tuple[int, ...] = (5, 10, 20, 40),
    phi: PhiSpec | None = None,
    fd_step: float = 1e-4,
) -> HnReport:
    """Two routes to L[H_n], H_n = <Q^n h0, h0>^{1/n}, and their gap to L[lambda].

    Route one is the c-sequence formula

        L[H_n] = -(1/n) (-c_0/2 + c_n/2 + sum_{i,j=1..n} c_{|i-j|}),

    route two is plain finite differencing of H_n over (g, nu) with h0
    frozen at the base point.  The two must agree, and both drift toward
    L[lambda] as n grows.
    """
    phi = phi or PhiSpec.quadratic()
    n_max = max(n_list)
    cp = find_nu_c(g, grid, phi=phi)
    cn = cn_sequence(g, grid, N=max(n_max, 50), phi=phi, cp=cp)
    cert = L_lambda(g, grid, phi=phi, cp=cp, cn=cn)
    c = cn.values
    work_grid = cp.grid
    h0 = cp.spec.h

    # H_n at the 3x3 stencil of (g, nu) offsets, sharing one matrix per corner
    dg, dnu = fd_step, fd_step
    offsets = {}
    for a in (-1, 0, 1):
        for b in (-1, 0, 1):
            params = ModelParams(g=g + a * dg, nu=cp.nu_c + b * dnu, phi=phi)
            offsets[(a, b)] = assemble(KernelKind.K0, params, work_grid).matrix

    hs = {key: {} for key in offsets}
    for key, M in offsets.items():
        v = h0.copy()
        for n in range(1, n_max + 1):
            v = M @ v
            if n in n_list:
                hs[key][n] = float(v @ h0)

    rows, gaps = [], []
    for n in sorted(n_list):
        H = {key: val[n] ** (1.0 / n) for key, val in hs.items()}
        H_nu = (H[(0, 1)] - H[(0, -1)]) / (2 * dnu)
        H_g = (H[(1, 0)] - H[(-1, 0)]) / (2 * dg)
        H_nunu = (H[(0, 1)] - 2 * H[(0, 0)] + H[(0, -1)]) / dnu**2
        H_nug = (H[(1, 1)] - H[(1, -1)] - H[(-1, 1)] + H[(-1, -1)]) / (4 * dg * dnu)
        from_fd = H_nug * H_nu - H_nunu * H_g

        double = n * c[0] + 2.0 * sum((n - d) * c[d] for d in range(1, n))
        from_cn = -(-0.5 * c[0] + 0.5 * c[n] + double) / n

        rel = abs(from_cn - from_fd) / max(abs(from_cn), 1e-300)
        rows.append(HnRow(n=n, from_cn=from_cn, from_fd=from_fd, rel_discrepancy=rel))
        gaps.append(abs(from_cn - cert.value))
    return HnReport(g=g, rows=rows, L_lambda_value=cert.value, gaps_to_L=gaps)


def cn_csv(sequences: list[CnSequence]) -> str:
    """Long-format CSV (g, n, c_n)."""
    buf = io.StringIO()
    buf.write("g,n,c_n\n")
    for seq in sequences:
        for n, value in enumerate(seq.values):
            buf.write(f"{seq.g:.11e},{n},{value:.11e}\n")
    return buf.getvalue()


def certificate_json(cert: Certificate) -> dict:
    return {
        "g": float(cert.g),
        "L_lambda": float(cert.value),
        "tail_bound": float(cert.tail),
        "certified_negative": bool(cert.certified),
        "nu_c": float(cert.cn.nu_c),
        "N": int(cert.cn.N),
        "mu2": float(cert.cn.mu2),
    }
