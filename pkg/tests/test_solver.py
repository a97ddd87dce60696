import numpy as np
import pytest
from scipy import sparse

from curvflow.errors import (
    BreakdownError,
    DimensionMismatchError,
    MaxIterationsError,
    NotPositiveDefiniteError,
)
from curvflow.fem import assemble_mass, assemble_stiffness
from curvflow.shapes import ShapeSpec, generate
from curvflow.solver import factorize, solve, solve_cg


def mesh_system(subdiv=2, dt=1e-3):
    """D - dt*L from an icosphere: the SPD pattern the flow actually solves."""
    m = generate(ShapeSpec.icosphere(subdiv))
    D = assemble_mass(m)
    L = assemble_stiffness(m)
    return (D - dt * L).tocsc()


def test_spd_2x2():
    A = sparse.csc_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
    F = factorize(A)
    x = solve(F, np.array([3.0, 3.0]))
    assert np.allclose(x, [1.0, 1.0], atol=1e-14)


def test_indefinite_2x2_rejected():
    A = sparse.csc_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))  # eigenvalues 3, -1
    with pytest.raises(NotPositiveDefiniteError):
        factorize(A)


def test_zero_diagonal_rejected():
    A = sparse.csc_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))  # eigenvalues +-1
    with pytest.raises(NotPositiveDefiniteError):
        factorize(A)


def test_identity_solve_returns_rhs():
    A = sparse.identity(37, format="csc")
    F = factorize(A)
    rhs = np.arange(37, dtype=float)
    assert np.array_equal(solve(F, rhs), rhs)


def test_reconstruction_accuracy():
    A = mesh_system()
    F = factorize(A)
    R = F.reconstruct()
    denom = np.abs(A.toarray()).max()
    assert np.abs((R - A).toarray()).max() <= 1e-10 * denom


def test_residual_on_mesh_system():
    A = mesh_system(subdiv=2)
    rng = np.random.default_rng(0)
    b = rng.standard_normal((A.shape[0], 3))
    x = solve(factorize(A), b)
    res = A @ x - b
    for c in range(3):
        assert np.linalg.norm(res[:, c]) <= 1e-8 * np.linalg.norm(b[:, c])


def test_multi_rhs_equals_single_solves():
    A = mesh_system()
    rng = np.random.default_rng(1)
    b = rng.standard_normal((A.shape[0], 3))
    F = factorize(A)
    stacked = solve(F, b)
    for c in range(3):
        single = solve(F, b[:, c])
        assert np.array_equal(stacked[:, c], single)


def test_pivot_index_reported():
    A = sparse.csc_matrix(np.diag([1.0, 2.0, -3.0, 4.0]))
    with pytest.raises(NotPositiveDefiniteError) as err:
        factorize(A)
    assert err.value.pivot_index == 2


def test_nonfinite_rejected():
    A = sparse.csc_matrix(np.array([[np.nan, 0.0], [0.0, 1.0]]))
    with pytest.raises(NotPositiveDefiniteError):
        factorize(A)


def test_regularization_sanity():
    dense = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NotPositiveDefiniteError):
        factorize(sparse.csc_matrix(dense))
    F = factorize(sparse.csc_matrix(dense + 5.0 * np.eye(2)))
    assert F.pivots.min() > 0


def test_deterministic_factorization():
    A = mesh_system(subdiv=1)
    F1, F2 = factorize(A), factorize(A)
    assert np.array_equal(F1.pivots, F2.pivots)
    b = np.linspace(0.0, 1.0, A.shape[0])
    assert np.array_equal(solve(F1, b), solve(F2, b))


def test_cg_small_system():
    A = sparse.csc_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
    x = solve_cg(A, np.array([3.0, 3.0]), tol=1e-12)
    assert np.allclose(x, [1.0, 1.0], atol=1e-11)


def test_cg_agrees_with_direct_500():
    rng = np.random.default_rng(7)
    B = sparse.random(500, 500, density=0.01, random_state=42, format="csc")
    A = (B @ B.T + 500 * sparse.identity(500)).tocsc()
    b = rng.standard_normal(500)
    xd = solve(factorize(A), b)
    xc = solve_cg(A, b, tol=1e-12)
    assert np.linalg.norm(xd - xc) <= 1e-7 * np.linalg.norm(xd)


def test_cg_direct_agreement_on_flow_system():
    A = mesh_system(subdiv=2)
    rng = np.random.default_rng(3)
    b = rng.standard_normal((A.shape[0], 3))
    xd = solve(factorize(A), b)
    xc = solve_cg(A, b, tol=1e-12)
    assert np.abs(xd - xc).max() <= 1e-8 * np.abs(xd).max()


def test_cg_breakdown_on_indefinite():
    A = sparse.csc_matrix(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(BreakdownError):
        solve_cg(A, np.array([0.0, 0.0, 1.0]), tol=1e-10)


def test_cg_max_iterations():
    A = mesh_system(subdiv=1)
    b = np.random.default_rng(9).standard_normal(A.shape[0])
    with pytest.raises(MaxIterationsError):
        solve_cg(A, b, tol=1e-15, max_iter=1)


def test_cg_zero_rhs():
    A = mesh_system(subdiv=0)
    x = solve_cg(A, np.zeros(A.shape[0]), tol=1e-12)
    assert np.array_equal(x, np.zeros(A.shape[0]))


def test_dimension_mismatch():
    A = mesh_system(subdiv=0)
    F = factorize(A)
    with pytest.raises(DimensionMismatchError):
        solve(F, np.zeros(5))
    with pytest.raises(DimensionMismatchError):
        solve_cg(A, np.zeros(5))
