"""Operator wrappers and the Krylov solver."""

import numpy as np
import pytest

from helmbem.gmres import gmres
from helmbem.linops import (
    ApplyCounter,
    BlockOp,
    CallableOp,
    ChainOp,
    DenseOp,
    FactorizedInverseOp,
    IdentityOp,
    ScaledOp,
    SparseOp,
    SumOp,
    ZeroOp,
)


def random_complex(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def test_operator_compositions_match_dense():
    rng = np.random.default_rng(0)
    A = random_complex(rng, 6, 6)
    B = random_complex(rng, 6, 6)
    x = random_complex(rng, 6)
    opA, opB = DenseOp(A), DenseOp(B)
    assert np.allclose(opA(x), A @ x)
    assert np.allclose(ScaledOp(2.5 - 1j, opA)(x), (2.5 - 1j) * (A @ x))
    assert np.allclose(SumOp(opA, opB)(x), (A + B) @ x)
    assert np.allclose(ChainOp(opA, opB)(x), A @ (B @ x))
    assert np.allclose(IdentityOp(6)(x), x)
    assert np.allclose(ZeroOp((6, 6))(x), 0.0)
    assert np.allclose(CallableOp((6, 6), lambda v: A @ v)(x), A @ x)


def test_block_operator_layout():
    rng = np.random.default_rng(1)
    blocks = [[random_complex(rng, 3, 3) for _ in range(2)] for _ in range(2)]
    dense = np.block(blocks)
    op = BlockOp([[DenseOp(b) for b in row] for row in blocks])
    x = random_complex(rng, 6)
    assert np.allclose(op(x), dense @ x)


def test_sparse_and_factorized_inverse():
    import scipy.sparse as sp

    rng = np.random.default_rng(2)
    dense = np.diag(rng.uniform(1, 2, size=8)) + 0.05 * rng.normal(size=(8, 8))
    mat = sp.csr_matrix(dense)
    x = random_complex(rng, 8)
    assert np.allclose(SparseOp(mat)(x), dense @ x)
    inv = FactorizedInverseOp(mat)
    assert np.allclose(inv(x), np.linalg.solve(dense, x), rtol=1e-10)


def test_apply_counter():
    rng = np.random.default_rng(3)
    counter = ApplyCounter()
    A = DenseOp(random_complex(rng, 4, 4), counter)
    x = random_complex(rng, 4)
    for _ in range(5):
        A(x)
    assert counter.dense_matvecs == 5
    counter.reset()
    assert counter.dense_matvecs == 0


def test_shape_mismatch_rejected():
    rng = np.random.default_rng(8)
    A = DenseOp(random_complex(rng, 4, 3))
    with pytest.raises(ValueError):
        A(random_complex(rng, 4))
    assert A(random_complex(rng, 3)).shape == (4,)


def test_gmres_identity_converges_immediately():
    b = np.array([1.0, -2.0, 3.0 + 1j])
    x, report = gmres(lambda v: v, b, tol=1e-12)
    assert report.converged
    assert report.iterations == 1
    assert np.allclose(x, b)


def test_gmres_zero_rhs():
    x, report = gmres(lambda v: 2 * v, np.zeros(5, dtype=complex), tol=1e-10)
    assert report.converged
    assert np.allclose(x, 0.0)


def test_gmres_solves_general_complex_system():
    rng = np.random.default_rng(4)
    n = 40
    A = np.eye(n) + 0.1 * random_complex(rng, n, n)
    b = random_complex(rng, n)
    x, report = gmres(lambda v: A @ v, b, tol=1e-12, maxiter=n)
    assert report.converged
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)
    assert np.allclose(x, np.linalg.solve(A, b), rtol=1e-9)


def test_gmres_residual_history():
    rng = np.random.default_rng(5)
    n = 30
    A = np.eye(n) + 0.3 * random_complex(rng, n, n)
    b = random_complex(rng, n)
    x, report = gmres(lambda v: A @ v, b, tol=1e-10, maxiter=n)
    res = np.asarray(report.residuals)
    assert len(res) == report.iterations
    # least-squares residuals never increase
    assert np.all(np.diff(res) <= 1e-14)
    # the reported final residual matches the true one
    true_rel = np.linalg.norm(A @ x - b) / np.linalg.norm(b)
    assert res[-1] == pytest.approx(true_rel, rel=1e-6, abs=1e-13)
    assert report.solve_seconds >= 0.0


def test_gmres_respects_maxiter():
    rng = np.random.default_rng(6)
    n = 50
    A = random_complex(rng, n, n)  # no clustering: slow convergence
    b = random_complex(rng, n)
    x, report = gmres(lambda v: A @ v, b, tol=1e-14, maxiter=5)
    assert not report.converged
    assert report.iterations == 5


def test_gmres_lucky_breakdown_returns_exact_solution():
    # right-hand side inside a 1-dimensional invariant subspace
    P = np.diag([1.0, 1.0, 0.0])
    b = np.array([1.0, 1.0, 0.0])
    x, report = gmres(lambda v: P @ v, b, tol=1e-12)
    assert report.converged
    assert report.iterations == 1
    assert np.allclose(x, b)


def test_gmres_breakdown_on_inconsistent_system():
    # Krylov space becomes invariant while a residual component remains
    # outside the operator range; the best iterate is returned
    P = np.diag([1.0, 1.0, 0.0])
    b = np.array([1.0, 1.0, 1.0])
    x, report = gmres(lambda v: P @ v, b, tol=1e-12, maxiter=10)
    assert not report.converged
    assert report.breakdown
    assert np.allclose(x[:2], [1.0, 1.0])


def test_gmres_tolerance_is_relative():
    rng = np.random.default_rng(7)
    n = 20
    A = np.eye(n) + 0.2 * random_complex(rng, n, n)
    b = random_complex(rng, n)
    for scale in (1.0, 1e6, 1e-6):
        x, report = gmres(lambda v: A @ v, scale * b, tol=1e-8, maxiter=n)
        assert report.converged
        assert report.iterations == gmres(lambda v: A @ v, b, tol=1e-8, maxiter=n)[1].iterations
