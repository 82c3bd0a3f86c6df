import numpy as np
import pytest
import scipy.sparse as sp

from memflow import (
    NonFiniteInputError,
    SolveFailureError,
    band_upper,
    bandwidth_of,
    gemm,
    matvec,
    sparse_solve,
    spectral_radius,
    svd_dense,
)
from memflow.linalg import BandedCholeskyFactor

from oracles import jacobi_eigenvalues, naive_matmul


class TestSvdDense:
    def test_diagonal(self):
        res = svd_dense(np.array([[3.0, 0.0], [0.0, 4.0]]))
        assert np.allclose(res.S, [4.0, 3.0], atol=0)

    def test_identity(self):
        res = svd_dense(np.eye(3))
        assert np.allclose(res.S, 1.0)
        assert np.abs(res.U @ res.V.T - np.eye(3)).max() <= 1e-12

    def test_random_5x3_against_jacobi_oracle(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((5, 3))
        res = svd_dense(a)
        recon = res.U @ np.diag(res.S) @ res.V.T
        assert np.abs(recon - a).max() <= 1e-12
        eig = jacobi_eigenvalues(a.T @ a)
        assert np.abs(np.sqrt(np.clip(eig, 0, None)) - res.S).max() <= 1e-10

    @pytest.mark.parametrize("shape", [(4, 4), (12, 7), (7, 12), (50, 50)])
    def test_round_trip_and_orthogonality(self, shape):
        rng = np.random.default_rng(hash(shape) % 2**32)
        a = rng.standard_normal(shape)
        res = svd_dense(a)
        scale = 1.0 + np.abs(a).max()
        assert np.abs(res.U @ np.diag(res.S) @ res.V.T - a).max() <= 1e-12 * scale
        ku = res.U.shape[1]
        kv = res.V.shape[1]
        assert np.abs(res.U.T @ res.U - np.eye(ku)).max() <= 1e-12
        assert np.abs(res.V.T @ res.V - np.eye(kv)).max() <= 1e-12
        assert np.all(np.diff(res.S) <= 0) and np.all(res.S >= 0)

    def test_full_mode_square_factors(self):
        a = np.arange(12.0).reshape(4, 3)
        res = svd_dense(a, mode="full")
        assert res.U.shape == (4, 4) and res.V.shape == (3, 3)

    def test_rejects_non_finite(self):
        with pytest.raises(NonFiniteInputError):
            svd_dense(np.array([[1.0, np.nan]]))

    def test_singular_values_match_jacobi_on_batch(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            a = rng.standard_normal((rng.integers(2, 9), rng.integers(2, 9)))
            s = svd_dense(a).S
            lam = jacobi_eigenvalues(a.T @ a)
            k = min(a.shape)
            assert np.abs(np.sqrt(np.clip(lam[:k], 0, None)) - s[:k]).max() <= 1e-10


def _laplacian_1d(n):
    return sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n), format="csr")


class TestSparseSolve:
    def test_identity(self):
        b = np.array([1.0, -2.0, 3.0])
        x = sparse_solve(sp.identity(3, format="csr"), b, sym=True)
        assert np.array_equal(x, b)

    def test_constructed_rhs(self):
        a = _laplacian_1d(4)
        x_true = np.array([1.0, 2.0, 3.0, 4.0])
        x = sparse_solve(a, a @ x_true, sym=True)
        assert np.abs(x - x_true).max() <= 1e-12

    def test_residual_contract_on_random_spd(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = int(rng.integers(3, 40))
            raw = rng.standard_normal((n, n))
            a = sp.csr_matrix(raw @ raw.T + n * np.eye(n))
            b = rng.standard_normal(n)
            x = sparse_solve(a, b, sym=True)
            assert np.linalg.norm(a @ x - b) <= 1e-12 * np.linalg.norm(b)

    def test_residual_contract_on_random_diag_dominant(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            n = int(rng.integers(3, 40))
            raw = rng.standard_normal((n, n))
            a = sp.csr_matrix(raw + n * np.eye(n) * (1.0 + np.abs(raw).sum(axis=1).max()))
            b = rng.standard_normal(n)
            x = sparse_solve(a, b)
            assert np.linalg.norm(a @ x - b) <= 1e-12 * np.linalg.norm(b)

    def test_singular_matrix_raises(self):
        a = sp.csr_matrix(np.zeros((3, 3)))
        with pytest.raises(SolveFailureError):
            sparse_solve(a, np.ones(3))

    def test_example1_system_solve(self):
        from memflow import assemble, build_mesh

        system = assemble(build_mesh(8))
        dt = 0.125
        a1 = (system.M + dt / 2 * system.A).tocsr()
        rng = np.random.default_rng(5)
        b = rng.standard_normal(system.m)
        x = sparse_solve(a1, b, sym=True)
        assert np.linalg.norm(a1 @ x - b) <= 1e-12 * np.linalg.norm(b)


class TestSpectralRadius:
    def test_diagonal(self):
        a = sp.diags([1.0, 2.0, 5.0]).tocsr()
        assert abs(spectral_radius(a, tol=1e-12) - 5.0) <= 1e-10

    def test_tridiagonal_known_eigenvalues(self):
        a = _laplacian_1d(3)
        assert abs(spectral_radius(a, tol=1e-13) - (2.0 + np.sqrt(2.0))) <= 1e-8

    def test_p1_stiffness_against_dense_eig(self):
        from memflow import assemble, build_mesh

        system = assemble(build_mesh(16))
        lam = spectral_radius(system.A, tol=1e-12)
        dense = np.linalg.eigvalsh(system.A.toarray()).max()
        assert abs(lam - dense) <= 1e-6


class TestMatvecGemm:
    def test_identity_and_zero(self):
        x = np.array([1.0, 2.0, 3.0])
        assert np.array_equal(matvec(sp.identity(3, format="csr"), x), x)
        assert np.array_equal(matvec(sp.csr_matrix((3, 3)), x), np.zeros(3))

    def test_against_naive_oracle(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((3, 3))
        b = rng.standard_normal((3, 3))
        # BLAS may fuse multiplies; agreement with the triple loop is to ulps
        assert np.abs(gemm(a, b) - naive_matmul(a, b)).max() <= 1e-15

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            matvec(sp.identity(3, format="csr"), np.ones(4))
        with pytest.raises(ValueError):
            gemm(np.ones((2, 3)), np.ones((2, 3)))


class TestBanded:
    def test_band_round_trip_solve(self):
        a = _laplacian_1d(20) + sp.identity(20)
        bw = bandwidth_of(a)
        assert bw == 1
        fac = BandedCholeskyFactor(band_upper(a, bw))
        rng = np.random.default_rng(1)
        b = rng.standard_normal(20)
        x = fac.solve(b)
        assert np.linalg.norm(a @ x - b) <= 1e-12 * np.linalg.norm(b)

    def test_band_upper_rejects_out_of_band(self):
        a = _laplacian_1d(5)
        with pytest.raises(ValueError):
            band_upper(a, 0)
