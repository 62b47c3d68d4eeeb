import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from tsefem.assembly import apply_constraints
from tsefem.mesh import DIRICHLET
from tsefem.solver import (Factorization, ResidualError, SingularSystemError, estimate_condition_1norm,
                           find_alpha0, solve_saddle)


def dense_kappa1(A):
    A = np.asarray(A.todense() if sp.issparse(A) else A)
    return np.linalg.norm(A, 1) * np.linalg.norm(np.linalg.inv(A), 1)


def test_condition_diagonal():
    assert estimate_condition_1norm(sp.diags([1.0, 1e-6])) == pytest.approx(1e6, rel=1e-12)
    assert estimate_condition_1norm(np.eye(5)) == pytest.approx(1.0)


def test_condition_singular_is_inf():
    assert estimate_condition_1norm(np.array([[1.0, 2.0], [2.0, 4.0]])) == math.inf
    assert estimate_condition_1norm(sp.csc_matrix((3, 3))) == math.inf


@given(st.integers(0, 2 ** 31 - 1), st.integers(2, 30))
def test_condition_estimate_is_tight_lower_bound(seed, n):
    r = np.random.default_rng(seed)
    A = r.normal(size=(n, n)) + n * np.eye(n) * r.uniform(0, 2)
    if abs(np.linalg.det(A)) < 1e-8:
        return
    exact = dense_kappa1(A)
    est = estimate_condition_1norm(A)
    assert est <= exact * (1 + 1e-10)
    assert est >= 0.1 * exact


def test_condition_permutation_invariant(rng):
    A = rng.normal(size=(12, 12)) + 4 * np.eye(12)
    P = np.eye(12)[rng.permutation(12)]
    assert estimate_condition_1norm(P @ A @ P.T) == pytest.approx(estimate_condition_1norm(A), rel=1e-8)


def test_estimator_leaves_global_rng_untouched():
    np.random.seed(7)
    before = np.random.get_state()[1].copy()
    estimate_condition_1norm(np.diag([1.0, 2.0, 3.0]) + 0.1)
    assert np.array_equal(np.random.get_state()[1], before)


def test_factorization_flags_zero_pivot_without_false_positives():
    f = Factorization(sp.diags([1e8, 1.0, 1e-3]))
    assert not f.singular
    with pytest.raises(SingularSystemError):
        Factorization(sp.csc_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])))


def test_solve_saddle_stokes_mass(square4, rng):
    space, forms = square4.space, square4.forms
    system = apply_constraints(forms.mass, forms, space, [DIRICHLET], "mean")
    f = rng.normal(size=space.num_velocity_dofs)
    sol = solve_saddle(system, system.rhs(f, {DIRICHLET: 0.0}))
    assert sol.residual < 1e-12
    assert np.linalg.norm(forms.divergence @ sol.velocity) < 1e-10
    assert abs(forms.mean_row @ sol.pressure) < 1e-12
    with pytest.raises(ResidualError):
        solve_saddle(system, system.rhs(f, {DIRICHLET: 0.0}), tol=0.0)


def test_pin_and_mean_pressure_agree(square4, rng):
    space, forms = square4.space, square4.forms
    f = rng.normal(size=space.num_velocity_dofs)
    out = []
    for mode in ("mean", "pin"):
        s = apply_constraints(forms.mass, forms, space, [DIRICHLET], mode)
        out.append(solve_saddle(s, s.rhs(f, {DIRICHLET: 0.0})))
    assert np.allclose(out[0].velocity, out[1].velocity, atol=1e-10)
    assert np.allclose(out[0].pressure, out[1].pressure, atol=1e-8)


@pytest.mark.parametrize("n", [8, 16])
def test_find_alpha0_matches_dense_sweep(n, request):
    from tsefem.assembly import assemble_forms
    from tsefem.mesh import build_unit_square_mesh
    from tsefem.spaces import build_taylor_hood
    forms = assemble_forms(build_taylor_hood(build_unit_square_mesh(n)))
    M, K = forms.scalar_mass, forms.scalar_stiffness
    res = find_alpha0(M, K)
    grid = np.linspace(-6, 0, 121)
    kap = [dense_kappa1(M + 10 ** s * K) for s in grid]
    best = grid[int(np.argmin(kap))]
    assert abs(res.log10_alpha - best) < 0.1
    assert res.kappa <= 1.05 * min(kap)
    assert not res.flat


def test_find_alpha0_flat_objective():
    res = find_alpha0(sp.identity(4), sp.csr_matrix((4, 4)))
    assert res.flat
    assert res.log10_alpha == -12.0
    assert res.kappa == pytest.approx(1.0)


def test_find_alpha0_monotone_objective_hits_bracket_end():
    # kappa(diag(1,1e-6) + a I) decreases in a, so the top end wins
    res = find_alpha0(sp.diags([1.0, 1e-6]), sp.identity(2), bracket=(-8.0, 2.0))
    assert res.log10_alpha == 2.0
