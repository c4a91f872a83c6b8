"""Quadrature grids on [0, s_max] and Nystrom matrices for the kernels.

Operators act on L^2[0, infinity); after truncation to [0, s_max] and
quadrature (nodes t_i, weights w_i) an integral operator with kernel k
becomes the similarity-symmetrized matrix

    M_ij = sqrt(w_i) k(t_i, t_j) sqrt(w_j),

whose eigenvalues equal those of the plain Nystrom matrix k(t_i,t_j) w_j
while keeping symmetric kernels symmetric, so a symmetric eigensolver
applies.  Vectors are carried in sqrt(w)-scaled coordinates throughout:
f_i ~ sqrt(w_i) f(t_i), making discrete dot products approximate L^2 inner
products directly.

For the fine trapezoid grid (100001 nodes) the K0 matrix cannot be stored
densely; k0_factors returns the exact low-rank factor U with M = U U^T
obtained from the power series of I0, and eigenpairs come from the small
Gram matrix U^T U instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln

from .kernels import SYMMETRIC_KINDS, KernelKind, kernel_eval
from .model import ModelParams, log_p

_WEIGHT_SUM_RELTOL = 1e-12
# refuse dense assembly beyond this to avoid silent multi-GB allocations
_DENSE_NODE_LIMIT = 6000
_MAX_EXPONENT = 709.0


class QuadratureRule(Enum):
    GAUSS_LEGENDRE = "gauss-legendre"
    TRAPEZOID = "trapezoid"


@dataclass(frozen=True)
class QuadGrid:
    """Quadrature nodes/weights on [0, s_max] for one composite rule."""

    nodes: np.ndarray
    weights: np.ndarray
    s_max: float
    rule: QuadratureRule
    n_panels: int
    nodes_per_panel: int = 1

    def __post_init__(self):
        nodes, weights = self.nodes, self.weights
        if nodes.ndim != 1 or weights.shape != nodes.shape:
            raise ValueError("nodes and weights must be matching 1-d arrays")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if nodes[0] < 0 or nodes[-1] > self.s_max:
            raise ValueError("nodes must lie in [0, s_max]")
        if nodes[0] == 0 and self.rule is not QuadratureRule.TRAPEZOID:
            raise ValueError("t=0 node only allowed for the trapezoid rule")
        if abs(weights.sum() - self.s_max) > _WEIGHT_SUM_RELTOL * self.s_max:
            raise ValueError("quadrature weights must sum to s_max")

    @property
    def n(self) -> int:
        return self.nodes.size

    def last_panel_slice(self) -> slice:
        """Indices of the nodes in the final panel (tail-mass diagnostics)."""
        if self.rule is QuadratureRule.GAUSS_LEGENDRE:
            return slice(self.n - self.nodes_per_panel, self.n)
        return slice(self.n - 2, self.n)


def build_grid(
    s_max: float,
    n_panels: int,
    nodes_per_panel: int = 10,
    rule: QuadratureRule = QuadratureRule.GAUSS_LEGENDRE,
) -> QuadGrid:
    """Composite quadrature over n_panels equal panels of [0, s_max].

    Gauss-Legendre places nodes_per_panel open nodes per panel (t=0 never a
    node); the trapezoid rule uses the n_panels+1 panel endpoints including
    t=0 and ignores nodes_per_panel.
    """
    if s_max <= 0:
        raise ValueError("s_max must be positive")
    if n_panels < 1 or nodes_per_panel < 1:
        raise ValueError("panel counts must be >= 1")

    if rule is QuadratureRule.TRAPEZOID:
        nodes = np.linspace(0.0, s_max, n_panels + 1)
        h = s_max / n_panels
        weights = np.full(n_panels + 1, h)
        weights[0] = weights[-1] = 0.5 * h
        return QuadGrid(nodes, weights, float(s_max), rule, n_panels, 1)

    x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    edges = np.linspace(0.0, s_max, n_panels + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (hi - lo) * x[None, :] + 0.5 * (hi + lo)).ravel()
    weights = (0.5 * (hi - lo) * w[None, :]).ravel()
    return QuadGrid(nodes, weights, float(s_max), rule, n_panels, nodes_per_panel)


def default_grid(s_max: float = 100.0) -> QuadGrid:
    """10-point Gauss-Legendre on panels of width 1 (the working grid)."""
    return build_grid(s_max, n_panels=int(round(s_max)), nodes_per_panel=10)


def figure1_grid(s_max: float = 100.0) -> QuadGrid:
    """Trapezoid rule with step 0.001, the speed-figure compatibility mode."""
    return build_grid(
        s_max, n_panels=int(round(s_max / 0.001)), rule=QuadratureRule.TRAPEZOID
    )


def with_s_max(grid: QuadGrid, s_max: float) -> QuadGrid:
    """Same rule and node density on a longer (or shorter) interval."""
    n_panels = max(1, int(round(grid.n_panels * s_max / grid.s_max)))
    return build_grid(s_max, n_panels, grid.nodes_per_panel, grid.rule)


@dataclass(frozen=True)
class DiscretizedOperator:
    matrix: np.ndarray
    grid: QuadGrid
    kind: KernelKind
    params: ModelParams

    @property
    def symmetric(self) -> bool:
        return self.kind in SYMMETRIC_KINDS


def assemble(kind: KernelKind, params: ModelParams, grid: QuadGrid) -> DiscretizedOperator:
    """Dense M_ij = sqrt(w_i) k(t_i,t_j) sqrt(w_j) for grids of moderate size."""
    if grid.n > _DENSE_NODE_LIMIT:
        raise ValueError(
            f"refusing dense assembly at n={grid.n}; use k0_factors for large grids"
        )
    t = grid.nodes
    K = kernel_eval(kind, params, t[:, None], t[None, :])
    sw = np.sqrt(grid.weights)
    # grouping the weight product first keeps symmetric kinds bit-exactly
    # symmetric: sw_i*sw_j commutes exactly, K is symmetric by argument sort
    M = (sw[:, None] * sw[None, :]) * K
    return DiscretizedOperator(M, grid, kind, params)


def sqrt_p_vector(params: ModelParams, grid: QuadGrid) -> np.ndarray:
    """sqrt(w)-scaled samples of sqrt(p); the seed of the affine iteration."""
    ex = 0.5 * log_p(params, grid.nodes)
    if np.any(ex > _MAX_EXPONENT):
        raise OverflowError("sqrt(p) overflows double range on this grid")
    return np.sqrt(grid.weights) * np.exp(ex)


def t_affine_offset(params: ModelParams, grid: QuadGrid) -> np.ndarray:
    """sqrt(w)-scaled offset vector sqrt(p(t)) e^{-t} of the affine operator."""
    ex = 0.5 * log_p(params, grid.nodes) - grid.nodes
    if np.any(ex > _MAX_EXPONENT):
        raise OverflowError("affine offset overflows double range")
    return np.sqrt(grid.weights) * np.exp(ex)


def apply_T(
    params: ModelParams, grid: QuadGrid, A: DiscretizedOperator, f: np.ndarray
) -> np.ndarray:
    """One application of the discrete affine operator: offset + A f."""
    if A.kind is not KernelKind.K1_WEIGHTED:
        raise ValueError("apply_T expects the K1_WEIGHTED matrix")
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.n,):
        raise ValueError(f"vector has shape {f.shape}, grid has {grid.n} nodes")
    return t_affine_offset(params, grid) + A.matrix @ f


def _default_rank(s_max: float) -> int:
    # power-series terms of I0(2 sqrt(ts)) are negligible beyond
    # m ~ s_max + O(sqrt(s_max)) for t,s <= s_max
    return int(s_max + 12.0 * np.sqrt(s_max) + 25.0)


def _power_factor(params: ModelParams, grid: QuadGrid, rank: int, shift: int) -> np.ndarray:
    """Columns sqrt(w) sqrt(p(t)) e^{-t} t^{m+shift} / (m+shift)!, m=0..rank."""
    t = grid.nodes
    k = np.arange(rank + 1) + shift
    with np.errstate(divide="ignore"):
        logt = np.log(t)
    klogt = np.where(
        k[None, :] == 0, 0.0, k[None, :] * np.where(t[:, None] > 0, logt[:, None], 0.0)
    )
    klogt = np.where((t[:, None] == 0) & (k[None, :] > 0), -np.inf, klogt)
    ex = (0.5 * log_p(params, t) - t)[:, None] + klogt - gammaln(k + 1)[None, :]
    return np.sqrt(grid.weights)[:, None] * np.exp(ex)


def k0_factors(params: ModelParams, grid: QuadGrid, rank: int | None = None) -> np.ndarray:
    """Exact low-rank factor U of the K0 matrix: M = U U^T.

    Expanding I0(2 sqrt(ts)) = sum_m (ts)^m / (m!)^2 shows the kernel is a
    sum of products u_m(t) u_m(s) with u_m(t) = sqrt(p(t)) e^{-t} t^m / m!.
    On [0, s_max] the series is dominated by m up to roughly s_max, so a
    rank of s_max + O(sqrt(s_max)) reproduces M to machine precision.
    """
    if rank is None:
        rank = _default_rank(grid.s_max)
    return _power_factor(params, grid, rank, shift=0)


def k1_weighted_factors(
    params: ModelParams, grid: QuadGrid, rank: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Factors (U1, V0) of the K1Weighted matrix: A = U1 V0^T.

    Same power-series argument with the asymmetric weight sqrt(t/s):
    the kernel is sum_m u_{m+1}(t) u_m(s) in the notation of k0_factors.
    """
    if rank is None:
        rank = _default_rank(grid.s_max)
    U1 = _power_factor(params, grid, rank, shift=1)
    V0 = _power_factor(params, grid, rank, shift=0)
    return U1, V0
