"""Leading eigenpairs, eigenvalue derivatives, resolvents."""

import math

import numpy as np
import pytest

from wsaw1d.criticality import find_nu_c
from wsaw1d.discretize import assemble, build_grid, default_grid, k0_factors
from wsaw1d.kernels import KernelKind
from wsaw1d.model import ModelParams
from wsaw1d.spectral import (
    CriticalityError,
    EigenConvergenceError,
    Resolvent,
    lambda_first_derivs,
    lambda_second_derivs,
    leading_eigenpair,
    leading_eigenpair_dense,
    leading_eigenpair_from_factors,
    resolvent_solve,
)

# free walk: lambda(0, nu) = 1/(b + sqrt(b^2-1)) with b = 1 + nu/2
FREE_LAMBDA_NU1 = 1.0 / (1.5 + math.sqrt(1.25))


def free_lambda(nu):
    b = 1.0 + nu / 2.0
    return 1.0 / (b + math.sqrt(b * b - 1.0))


def test_free_walk_eigenvalue_default_grid(grid):
    op = assemble(KernelKind.K0, ModelParams(g=0.0, nu=1.0), grid)
    spec = leading_eigenpair(op)
    assert spec.lam == pytest.approx(FREE_LAMBDA_NU1, abs=1e-6)


def test_free_walk_eigenvalue_refined_grid():
    g = build_grid(100.0, 100, 20)
    op = assemble(KernelKind.K0, ModelParams(g=0.0, nu=1.0), g)
    spec = leading_eigenpair(op)
    assert spec.lam == pytest.approx(FREE_LAMBDA_NU1, abs=1e-8)


def test_free_walk_eigenvalue_nu_slice(grid):
    for nu in (0.1, 0.03, 0.3):
        op = assemble(KernelKind.K0, ModelParams(g=0.0, nu=nu), grid)
        spec = leading_eigenpair(op)
        assert spec.lam == pytest.approx(free_lambda(nu), abs=2e-6)


def test_dense_eigenpair_against_numpy(rng):
    # entrywise-positive symmetric matrix: Perron-Frobenius guarantees the
    # positive leading eigenvector the solver insists on
    A = rng.uniform(0.1, 1.0, size=(5, 5))
    M = 0.5 * (A + A.T)
    spec = leading_eigenpair_dense(M)
    w, V = np.linalg.eigh(M)
    assert spec.lam == pytest.approx(w[-1], rel=1e-14)
    assert spec.gap == pytest.approx(w[-1] - w[-2], rel=1e-12)
    v = V[:, -1]
    v = v if v[np.argmax(np.abs(v))] > 0 else -v
    np.testing.assert_allclose(spec.h, v, atol=1e-12)


def test_eigenvector_sign_and_positivity(small_grid):
    op = assemble(KernelKind.K0, ModelParams(g=1.0, nu=-1.0), small_grid)
    spec = leading_eigenpair(op)
    assert spec.h[np.argmax(np.abs(spec.h))] > 0
    # ground state of a positivity-improving kernel: no negative entries
    # beyond roundoff on the scale of the vector
    assert spec.h.min() > -1e-12
    assert np.linalg.norm(spec.h) == pytest.approx(1.0, rel=1e-12)


def test_factored_eigensolve_matches_dense(small_grid):
    p = ModelParams(g=1.0, nu=-0.5)
    spec_d = leading_eigenpair(assemble(KernelKind.K0, p, small_grid))
    U = k0_factors(p, small_grid)
    spec_f = leading_eigenpair_from_factors(U)
    assert spec_f.lam == pytest.approx(spec_d.lam, rel=1e-12)
    np.testing.assert_allclose(spec_f.h, spec_d.h, atol=1e-9)


def test_dlambda_dnu_free_walk_closed_form(grid):
    # d/dnu of 1/(b+sqrt(b^2-1)) at nu=1: -(1/2) lambda / sqrt(b^2-1)
    p = ModelParams(g=0.0, nu=1.0)
    spec = leading_eigenpair(assemble(KernelKind.K0, p, grid))
    dnu, dg = lambda_first_derivs(p, grid, spec)
    want = -0.5 * FREE_LAMBDA_NU1 / math.sqrt(1.25)
    assert dnu == pytest.approx(want, abs=1e-6)
    assert want == pytest.approx(-0.170820393249937, abs=1e-12)
    assert dg < 0


def test_first_derivs_match_finite_differences(grid):
    p = ModelParams(g=1.0, nu=0.0)
    spec = leading_eigenpair(assemble(KernelKind.K0, p, grid))
    dnu, dg = lambda_first_derivs(p, grid, spec)

    def lam(g_, nu_):
        return leading_eigenpair(
            assemble(KernelKind.K0, ModelParams(g=g_, nu=nu_), grid)
        ).lam

    h = 1e-5
    fd_nu = (lam(1.0, h) - lam(1.0, -h)) / (2 * h)
    fd_g = (lam(1.0 + h, 0.0) - lam(1.0 - h, 0.0)) / (2 * h)
    assert dnu == pytest.approx(fd_nu, rel=1e-6)
    assert dg == pytest.approx(fd_g, rel=1e-6)


def test_second_derivs_match_finite_differences(grid):
    p = ModelParams(g=1.0, nu=0.0)
    M = assemble(KernelKind.K0, p, grid)
    spec = leading_eigenpair(M)
    d2nu2, d2nudg = lambda_second_derivs(p, grid, spec, M=M)

    def lam(g_, nu_):
        return leading_eigenpair(
            assemble(KernelKind.K0, ModelParams(g=g_, nu=nu_), grid)
        ).lam

    h = 1e-4
    fd_nu2 = (lam(1.0, h) - 2 * lam(1.0, 0.0) + lam(1.0, -h)) / h**2
    fd_nug = (
        lam(1.0 + h, h) - lam(1.0 + h, -h) - lam(1.0 - h, h) + lam(1.0 - h, -h)
    ) / (4 * h * h)
    assert d2nu2 == pytest.approx(fd_nu2, rel=1e-4)
    assert d2nudg == pytest.approx(fd_nug, rel=1e-4)
    assert d2nu2 >= 0.0


def test_mixed_derivative_symmetry(grid):
    # d2 lambda / dnu dg computed with the roles of the two parameters
    # swapped: <M_nug h, h> + 2 <x_nu, p_g> instead of ... + 2 <x_g, p_nu>
    from scipy.linalg import lu_factor, lu_solve

    p = ModelParams(g=1.0, nu=-0.5)
    M = assemble(KernelKind.K0, p, grid)
    spec = leading_eigenpair(M)
    _, d2nudg = lambda_second_derivs(p, grid, spec, M=M)

    h = spec.h
    v_nu = assemble(KernelKind.DNU_K0, p, grid).matrix @ h
    v_g = assemble(KernelKind.DG_K0, p, grid).matrix @ h
    p_nu = v_nu - (h @ v_nu) * h
    p_g = v_g - (h @ v_g) * h
    B = spec.lam * np.eye(len(h)) - M.matrix + np.outer(h, h)
    lu = lu_factor(B)
    x_nu = lu_solve(lu, p_nu)
    x_nu -= (h @ x_nu) * h
    Mnug = assemble(KernelKind.DNU_DG_K0, p, grid).matrix
    swapped = float(h @ (Mnug @ h) + 2.0 * (x_nu @ p_g))
    assert d2nudg == pytest.approx(swapped, abs=1e-8 * max(1.0, abs(d2nudg)))


def test_lambda_monotone_decreasing_in_nu_and_g(small_grid):
    lams_nu = [
        leading_eigenpair(
            assemble(KernelKind.K0, ModelParams(g=1.0, nu=nu), small_grid)
        ).lam
        for nu in np.linspace(-1.5, 1.0, 5)
    ]
    assert np.all(np.diff(lams_nu) < 0)
    lams_g = [
        leading_eigenpair(
            assemble(KernelKind.K0, ModelParams(g=g, nu=0.0), small_grid)
        ).lam
        for g in (0.1, 0.5, 1.0, 2.0, 5.0)
    ]
    assert np.all(np.diff(lams_g) < 0)


def test_lambda_convex_in_nu(small_grid):
    nus = np.linspace(-1.2, 0.8, 5)
    lams = np.array(
        [
            leading_eigenpair(
                assemble(KernelKind.K0, ModelParams(g=1.0, nu=nu), small_grid)
            ).lam
            for nu in nus
        ]
    )
    assert np.all(np.diff(lams, 2) > 0)


def test_derivative_convexity_gap_at_random_points(small_grid, rng):
    for _ in range(10):
        p = ModelParams(g=float(rng.uniform(0.05, 3.0)), nu=float(rng.uniform(-1.0, 1.0)))
        M = assemble(KernelKind.K0, p, small_grid)
        spec = leading_eigenpair(M)
        assert spec.gap > 0
        dnu, dg = lambda_first_derivs(p, small_grid, spec)
        assert dnu < 0 and dg < 0
        d2nu2, _ = lambda_second_derivs(p, small_grid, spec, M=M)
        assert d2nu2 >= 0


def test_resolvent_trivial_cases(rng):
    rhs = rng.standard_normal(6)
    x = resolvent_solve(np.zeros((6, 6)), 2.0, rhs)
    np.testing.assert_allclose(x, rhs / 2.0, rtol=1e-14)
    np.testing.assert_allclose(resolvent_solve(np.zeros((6, 6)), 2.0, np.zeros(6)), 0.0)


def test_resolvent_neumann_series_oracle(grid):
    # (I - Q)^{-1} q  ==  sum_{j<=J} Q^j q up to the geometric tail, at a
    # comfortably subcritical nu
    g = 1.0
    cp = find_nu_c(g, grid=grid)
    p = ModelParams(g=g, nu=cp.nu_c + 0.1)
    M = assemble(KernelKind.K0, p, grid)
    spec = leading_eigenpair(M)
    assert spec.lam < 1.0
    q = np.exp(0.5 * -p.g * grid.nodes**2 - 0.5 * p.nu * grid.nodes) * np.sqrt(
        grid.weights
    )
    x = resolvent_solve(M, 1.0, q, lam_max=spec.lam)
    J = 200
    acc = np.zeros_like(q)
    v = q.copy()
    for _ in range(J + 1):
        acc += v
        v = M.matrix @ v
    tail = spec.lam ** (J + 1) / (1.0 - spec.lam) * np.linalg.norm(q)
    assert np.linalg.norm(x - acc) <= tail + 1e-9 * np.linalg.norm(x)


def test_resolvent_rejects_near_critical_shift():
    M = np.diag([0.5, 0.2])
    with pytest.raises(CriticalityError):
        Resolvent(M, 0.5 + 5e-11, lam_max=0.5)


def test_resolvent_reuse_multiple_rhs(rng):
    A = rng.standard_normal((8, 8))
    M = 0.1 * (A + A.T)
    r = Resolvent(M, 2.0)
    for _ in range(3):
        rhs = rng.standard_normal(8)
        x = r.solve(rhs)
        np.testing.assert_allclose(2.0 * x - M @ x, rhs, atol=1e-10)


def test_eigensolve_failure_modes():
    with pytest.raises(EigenConvergenceError):
        leading_eigenpair_dense(2.0 * np.eye(4))  # degenerate top eigenvalue
    with pytest.raises(EigenConvergenceError):
        # top eigenvector has a genuinely negative entry
        leading_eigenpair_dense(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    rng = np.random.default_rng(2)
    A = rng.uniform(0.1, 1.0, size=(40, 40))
    with pytest.raises(EigenConvergenceError):
        # roundoff on a 40x40 solve sits far above this threshold
        leading_eigenpair_dense(0.5 * (A + A.T), residual_tol=1e-18)


def test_second_derivs_gap_guard(small_grid):
    p = ModelParams(g=1.0, nu=0.0)
    M = assemble(KernelKind.K0, p, small_grid)
    spec = leading_eigenpair(M)
    spec_tiny_gap = type(spec)(
        lam=spec.lam, h=spec.h, gap=1e-9, residual=spec.residual
    )
    with pytest.raises(EigenConvergenceError):
        lambda_second_derivs(p, small_grid, spec_tiny_gap, M=M)
