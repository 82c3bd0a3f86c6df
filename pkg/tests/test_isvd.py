import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memflow import initialize, load_checkpoint
from memflow.isvd import REORTH_GUARD


def stream(columns, tol):
    state = initialize(columns[:, 0], tol)
    for j in range(1, columns.shape[1]):
        state.update(columns[:, j])
    return state


class TestInitialize:
    def test_three_four_five(self):
        state = initialize(np.array([3.0, 4.0]), tol=1e-12)
        assert np.allclose(state.sigma, [5.0], atol=0)
        assert np.allclose(state.Q[:, 0], [0.6, 0.8])
        assert state.R.tolist() == [[1.0]]
        assert state.q == 0 and state.ell == 1

    def test_unit_vector(self):
        e1 = np.zeros(5)
        e1[0] = 1.0
        state = initialize(e1, tol=1e-12)
        assert state.sigma[0] == 1.0
        assert np.array_equal(state.Q[:, 0], e1)

    def test_random_vector_exact(self):
        rng = np.random.default_rng(0)
        u = rng.standard_normal(100)
        state = initialize(u, tol=1e-12)
        assert abs(state.Q[:, 0] @ state.Q[:, 0] - 1.0) <= 1e-15
        assert np.linalg.norm(state.reconstruct_column(0) - u) <= 1e-14 * np.linalg.norm(u)

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            initialize(np.zeros(4), tol=1e-12)


class TestUpdate:
    def test_collinear_column_buffers(self):
        state = initialize(np.array([1.0, 0.0, 0.0]), tol=1e-12)
        state.update(np.array([2.0, 0.0, 0.0]))
        assert state.rank == 1
        assert state.q == 1 and len(state.W) == 1
        assert np.allclose(state.W[0], [2.0], atol=0)

    def test_orthogonal_column_grows_rank(self):
        state = initialize(np.array([1.0, 0.0, 0.0]), tol=1e-12)
        state.update(np.array([0.0, 1.0, 0.0]))
        assert state.rank == 2
        assert np.allclose(state.sigma, [1.0, 1.0])
        assert state.q == 0

    def test_rank3_stream_matches_batch(self):
        rng = np.random.default_rng(42)
        basis = rng.standard_normal((50, 3))
        cols = np.column_stack([basis, basis @ rng.standard_normal((3, 3))])
        state = stream(cols, tol=1e-10)
        assert state.rank == 3
        for j in range(6):
            assert np.linalg.norm(state.reconstruct_column(j) - cols[:, j]) <= 1e-9

    def test_dimension_mismatch(self):
        state = initialize(np.ones(4), tol=1e-12)
        with pytest.raises(ValueError):
            state.update(np.ones(5))

    def test_zero_midstream_column_takes_buffer_path(self):
        state = initialize(np.ones(4), tol=1e-12)
        state.update(np.zeros(4))
        assert state.q == 1 and state.rank == 1
        assert np.linalg.norm(state.reconstruct_column(1)) == 0.0

    def test_ell_counts_columns(self):
        rng = np.random.default_rng(1)
        cols = rng.standard_normal((10, 7))
        state = stream(cols, tol=1e-12)
        assert state.ell == 7
        assert state.history_matrix()[1].shape[1] == 7


class TestReconstruction:
    def test_after_init(self):
        u = np.array([1.0, 2.0, 2.0])
        state = initialize(u, tol=1e-12)
        assert np.linalg.norm(state.reconstruct_column(0) - u) <= 1e-14 * 3

    def test_buffered_collinear_column(self):
        u = np.array([1.0, 2.0, 2.0])
        state = initialize(u, tol=1e-12)
        state.update(2.5 * u)
        assert np.linalg.norm(state.reconstruct_column(1) - 2.5 * u) <= 1e-14 * 10

    def test_rank2_stream_close_to_originals(self):
        rng = np.random.default_rng(9)
        basis = rng.standard_normal((30, 2))
        cols = basis @ rng.standard_normal((2, 10))
        state = stream(cols, tol=1e-12)
        for j in range(10):
            assert np.linalg.norm(state.reconstruct_column(j) - cols[:, j]) <= 1e-11

    def test_index_range(self):
        state = initialize(np.ones(3), tol=1e-12)
        with pytest.raises(IndexError):
            state.reconstruct_column(1)
        with pytest.raises(IndexError):
            state.reconstruct_column(-1)


class TestHistoryMatrix:
    def test_rank1_after_init(self):
        state = initialize(np.array([3.0, 4.0]), tol=1e-12)
        _, x = state.history_matrix()
        assert np.allclose(x, [[5.0]], atol=0)

    def test_with_buffered_column(self):
        state = initialize(np.array([3.0, 4.0]), tol=1e-12)
        state.update(np.array([6.0, 8.0]))
        _, x = state.history_matrix()
        assert np.allclose(x, [[5.0, 10.0]])

    def test_columns_match_reconstruct(self):
        rng = np.random.default_rng(17)
        basis = rng.standard_normal((25, 3))
        cols = np.column_stack([basis @ rng.standard_normal((3, 12)), basis])
        state = stream(cols, tol=1e-10)
        q_mat, x = state.history_matrix()
        full = q_mat @ x
        # matmul and matvec BLAS kernels round differently; agreement is to ulps
        scale = max(1.0, np.abs(full).max())
        for j in range(state.ell):
            assert np.abs(full[:, j] - state.reconstruct_column(j)).max() <= 1e-14 * scale


class TestInterlacing:
    def test_interlacing_and_residual_bound_on_growth(self):
        rng = np.random.default_rng(23)
        cols = rng.standard_normal((12, 10))
        state = initialize(cols[:, 0], tol=1e-12)
        for j in range(1, 10):
            u = cols[:, j]
            sig_old = state.sigma.copy()
            d = state.Q.T @ u
            p = np.linalg.norm(u - state.Q @ d)
            k_old = state.rank
            state.update(u)
            assert state.rank == k_old + 1  # generic stream: growth, no truncation
            sig_new = state.sigma
            slack = 1e-12 * max(1.0, sig_new[0])
            assert sig_new[-1] <= p + slack
            assert sig_new[0] + slack >= sig_old[0]
            for i in range(k_old):
                assert sig_new[i + 1] <= sig_old[i] + slack
                assert sig_old[i] <= sig_new[i] + slack


class TestTruncationError:
    def test_dropping_smallest_singular_value_bounds_columns(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            a = rng.standard_normal((12, 8))
            u, s, vt = np.linalg.svd(a, full_matrices=False)
            b = u[:, :-1] @ np.diag(s[:-1]) @ vt[:-1, :]
            col_err = np.linalg.norm(a - b, axis=0).max()
            assert col_err <= s[-1] + 1e-13


class TestPreviousDataPreservation:
    def test_buffer_path_is_bit_identical(self):
        rng = np.random.default_rng(31)
        basis = rng.standard_normal((20, 2))
        state = stream(basis @ rng.standard_normal((2, 5)), tol=1e-10)
        before = [state.reconstruct_column(j).copy() for j in range(state.ell)]
        state.update(basis @ rng.standard_normal(2))  # in-span: buffer path
        assert state.q >= 1
        for j, old in enumerate(before):
            assert np.array_equal(state.reconstruct_column(j), old)

    def test_growth_path_preserves_to_rounding(self):
        rng = np.random.default_rng(37)
        basis = rng.standard_normal((20, 2))
        state = stream(basis @ rng.standard_normal((2, 5)), tol=1e-10)
        before = [state.reconstruct_column(j).copy() for j in range(state.ell)]
        state.update(rng.standard_normal(20))  # out of span: rank growth
        assert state.q == 0
        # exact in exact arithmetic; the factor rotation leaves rounding noise
        for j, old in enumerate(before):
            assert np.linalg.norm(state.reconstruct_column(j) - old) <= 1e-13 * (1 + np.linalg.norm(old))


class TestEndToEndBound:
    def test_noisy_low_rank_stream(self):
        rng = np.random.default_rng(101)
        m, r, n = 40, 4, 300
        tol = 1e-10
        basis = np.linalg.qr(rng.standard_normal((m, r)))[0]
        cols = basis @ rng.standard_normal((r, n)) + 1e-15 * rng.standard_normal((m, n))
        state = stream(cols, tol)
        tsv = state.stats.n_sv_truncations
        budget = (tsv + 1) * tol + 1e-12
        worst = max(
            np.linalg.norm(state.reconstruct_column(j) - cols[:, j]) for j in range(n)
        )
        assert worst <= budget

    def test_orthogonality_over_long_stream(self):
        rng = np.random.default_rng(55)
        m, r = 60, 5
        basis = rng.standard_normal((m, r))
        state = initialize(basis @ rng.standard_normal(r), tol=1e-10)
        for _ in range(1999):
            state.update(basis @ rng.standard_normal(r) + 1e-15 * rng.standard_normal(m))
        assert state.orthogonality_error() <= 1e-10


class TestSingularValues:
    def test_current_singular_values_include_buffer(self):
        rng = np.random.default_rng(77)
        basis = rng.standard_normal((30, 3))
        cols = np.column_stack([basis, basis @ rng.standard_normal((3, 9))])
        state = stream(cols, tol=1e-10)
        assert state.q > 0  # later columns buffered
        sv = state.current_singular_values()
        batch = np.linalg.svd(cols, compute_uv=False)
        assert np.abs(sv - batch[:3]).max() <= 1e-10 * max(1.0, batch[0])


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(13)
        basis = rng.standard_normal((15, 2))
        cols = np.column_stack([basis @ rng.standard_normal((2, 6)), rng.standard_normal((15, 1))])
        state = stream(cols, tol=1e-10)
        path = tmp_path / "state.bin"
        state.save_checkpoint(path)
        loaded = load_checkpoint(path, tol=1e-10)
        assert loaded.ell == state.ell and loaded.q == state.q
        for j in range(state.ell):
            assert np.array_equal(loaded.reconstruct_column(j), state.reconstruct_column(j))
        # the reloaded state keeps streaming
        extra = rng.standard_normal(15)
        loaded.update(extra)
        assert np.linalg.norm(loaded.reconstruct_column(loaded.ell - 1) - extra) <= 1e-9

    def test_truncated_payload_rejected(self, tmp_path):
        state = initialize(np.ones(4), tol=1e-12)
        path = tmp_path / "state.bin"
        state.save_checkpoint(path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(ValueError):
            load_checkpoint(path)


class TestGuard:
    def test_guard_constant_matches_contract(self):
        assert REORTH_GUARD == 1e-14

    def test_reorth_counter_monotone(self):
        rng = np.random.default_rng(3)
        cols = rng.standard_normal((25, 20))
        state = initialize(cols[:, 0], tol=1e-12)
        seen = 0
        for j in range(1, 20):
            state.update(cols[:, j])
            assert state.stats.n_reorth >= seen
            seen = state.stats.n_reorth


@settings(max_examples=25, deadline=None)
@given(
    m=st.integers(6, 30),
    r=st.integers(1, 4),
    n=st.integers(5, 40),
    seed=st.integers(0, 2**31 - 1),
)
def test_property_low_rank_streams(m, r, n, seed):
    """Reconstruction stays inside the (T_sv + 1) * tol budget and the left
    factor stays orthonormal, for arbitrary low-rank streams."""
    rng = np.random.default_rng(seed)
    tol = 1e-10
    basis = rng.standard_normal((m, r))
    cols = basis @ rng.standard_normal((r, n))
    norms = np.linalg.norm(cols, axis=0)
    if norms[0] == 0.0:  # first column must be nonzero
        cols[:, 0] = basis[:, 0]
    state = stream(cols, tol)
    assert state.orthogonality_error() <= 1e-10
    assert state.ell == n
    budget = (state.stats.n_sv_truncations + 1) * tol + 1e-11 * max(1.0, norms.max())
    for j in range(n):
        assert np.linalg.norm(state.reconstruct_column(j) - cols[:, j]) <= budget
