"""Time-stepping engines for the memory-kernel problems.

Three schemes, each in a dense-history and a compressed-history variant:

* Crank-Nicolson with midpoint memory quadrature (smooth kernels, grids may
  be quasi-uniform);
* BDF2 with second-order convolution quadrature and a backward-Euler first
  step (weakly singular kernels, uniform grids);
* backward Euler with L1 product weights (variable-order Caputo kernels,
  uniform grids).

The dense variant stores every past coefficient vector and pays O(m*n) per
step for the memory sum.  The compressed variant pushes each new solution
through the streaming SVD and evaluates the memory sum through the factors
``B @ Q @ (X @ w)`` at O(m*k + k*n) per step; the ``B @ Q`` product and the
``X = [diag(sigma) R^T | W]`` table are cached and refreshed whenever a
rank-changing update rotates the factors (tracked by an epoch counter).

Reported "history bytes" follow the accounting model (8 bytes per live
entry of the history structures), not allocator-level RSS.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import AssembledSystem, LoadAssembler, l2_error, project_initial
from .grids import TimeGrid
from .isvd import IsvdState
from .kernels import (
    SmoothKernel,
    VariableOrderKernel,
    WeaklySingularKernel,
    cq_weights,
    l1_weights,
    midpoint_memory_coeffs,
)
from .linalg import BandedCholeskyFactor, SparseFactor, band_upper, bandwidth_of
from .problems import ManufacturedProblem

TIMING_KEYS = ("assembly", "solves", "history_sum", "isvd_update")


@dataclass
class RunResult:
    """Outcome and telemetry of one solve."""

    final_u: np.ndarray
    history: str
    n_steps: int
    m: int
    timings: dict = field(default_factory=dict)
    peak_history_bytes: int = 0
    final_rank: int = 0
    n_sv_truncations: int = 0
    n_reorth: int = 0
    rank_trace: np.ndarray | None = None
    q_trace: np.ndarray | None = None
    tsv_trace: np.ndarray | None = None
    final_l2_error: float | None = None
    trajectory: np.ndarray | None = None
    isvd_state: IsvdState | None = None


def dense_history_bytes(m: int, n_columns: int) -> int:
    """Accounting-model size of a dense history block."""
    return 8 * m * n_columns


class DenseHistory:
    """Every past coefficient vector, one column per step."""

    kind = "dense"

    def __init__(self, b_mat, m: int, n_columns: int):
        self.b_mat = b_mat
        self.columns = np.zeros((m, n_columns))
        self.count = 0

    def push(self, u: np.ndarray) -> None:
        self.columns[:, self.count] = u
        self.count += 1

    def bweighted(self, w: np.ndarray) -> np.ndarray:
        """B @ sum_j w[j] * u_j over stored columns j < len(w)."""
        n = w.size
        if n == 0:
            return np.zeros(self.columns.shape[0])
        return self.b_mat @ (self.columns[:, :n] @ w)

    def live_bytes(self) -> int:
        return dense_history_bytes(self.columns.shape[0], self.count)

    @property
    def rank(self) -> int:
        return 0

    @property
    def pending(self) -> int:
        return 0

    @property
    def n_sv_truncations(self) -> int:
        return 0


class CompressedHistory:
    """History read through the streaming-SVD factors.

    Leading all-zero columns (a zero initial datum) are counted rather than
    stored, since the SVD is initialized by the first nonzero column; they
    reconstruct exactly and contribute nothing to any weighted sum.
    """

    kind = "isvd"

    def __init__(self, b_mat, m: int, tol: float):
        self.b_mat = b_mat
        self.m = m
        self.tol = tol
        self.state: IsvdState | None = None
        self.n_zero_lead = 0
        self.count = 0
        self._x = np.empty((0, 0))
        self._used = 0
        self._bq = np.empty((m, 0))
        self._epoch = -1

    def push(self, u: np.ndarray) -> None:
        if self.state is None:
            if np.linalg.norm(u) == 0.0:
                self.n_zero_lead += 1
                self.count += 1
                return
            self.state = IsvdState(u, self.tol)
            self._refresh()
            self.count += 1
            return
        self.state.update(u)
        self.count += 1
        if self.state.epoch != self._epoch:
            self._refresh()
        else:
            self._append_pending()

    def _refresh(self) -> None:
        st = self.state
        k = st.rank
        cap = max(16, 2 * st.ell)
        x = np.empty((k, cap))
        nf = st.ell - st.q
        x[:, :nf] = (st.R * st.sigma).T
        for i, wcol in enumerate(st.W):
            x[:, nf + i] = wcol
        self._x = x
        self._used = st.ell
        self._bq = self.b_mat @ st.Q
        self._epoch = st.epoch

    def _append_pending(self) -> None:
        st = self.state
        if self._used == self._x.shape[1]:
            grown = np.empty((self._x.shape[0], 2 * self._used))
            grown[:, : self._used] = self._x[:, : self._used]
            self._x = grown
        self._x[:, self._used] = st.W[-1]
        self._used += 1

    def bweighted(self, w: np.ndarray) -> np.ndarray:
        n = w.size
        if self.state is None or n <= self.n_zero_lead:
            return np.zeros(self.m)
        wz = w[self.n_zero_lead:]
        return self._bq @ (self._x[:, : wz.size] @ wz)

    def live_bytes(self) -> int:
        return 0 if self.state is None else self.state.live_bytes()

    @property
    def rank(self) -> int:
        return 0 if self.state is None else self.state.rank

    @property
    def pending(self) -> int:
        return 0 if self.state is None else self.state.q

    @property
    def n_sv_truncations(self) -> int:
        return 0 if self.state is None else self.state.stats.n_sv_truncations


class _Run:
    """Shared bookkeeping for one stepping loop."""

    def __init__(self, system: AssembledSystem, grid: TimeGrid, history, keep_trajectory: bool):
        self.system = system
        self.grid = grid
        self.history = history
        self.timings = {k: 0.0 for k in TIMING_KEYS}
        self.peak_bytes = 0
        n = grid.n_steps
        self.rank_trace = np.zeros(n + 1, dtype=np.int64)
        self.q_trace = np.zeros(n + 1, dtype=np.int64)
        self.tsv_trace = np.zeros(n + 1, dtype=np.int64)
        self.trajectory = np.zeros((system.m, n + 1)) if keep_trajectory else None
        self._t0 = time.perf_counter()

    def push(self, u: np.ndarray, step: int) -> None:
        t0 = time.perf_counter()
        self.history.push(u)
        self.timings["isvd_update"] += time.perf_counter() - t0
        self.peak_bytes = max(self.peak_bytes, self.history.live_bytes())
        self.rank_trace[step] = self.history.rank
        self.q_trace[step] = self.history.pending
        self.tsv_trace[step] = self.history.n_sv_truncations
        if self.trajectory is not None:
            self.trajectory[:, step] = u

    def finish(self, final_u: np.ndarray, problem: ManufacturedProblem, compute_error: bool) -> RunResult:
        self.timings["total"] = time.perf_counter() - self._t0
        err = None
        if compute_error and problem.exact_u is not None:
            err = l2_error(self.system.mesh, final_u, problem.exact_u, self.grid.t_final)
        isvd = self.history.state if isinstance(self.history, CompressedHistory) else None
        return RunResult(
            final_u=final_u,
            history=self.history.kind,
            n_steps=self.grid.n_steps,
            m=self.system.m,
            timings=self.timings,
            peak_history_bytes=self.peak_bytes,
            final_rank=self.history.rank,
            n_sv_truncations=self.history.n_sv_truncations,
            n_reorth=0 if isvd is None else isvd.stats.n_reorth,
            rank_trace=self.rank_trace if self.history.kind == "isvd" else None,
            q_trace=self.q_trace if self.history.kind == "isvd" else None,
            tsv_trace=self.tsv_trace if self.history.kind == "isvd" else None,
            final_l2_error=err,
            trajectory=self.trajectory,
            isvd_state=isvd,
        )


# ---------------------------------------------------------------------------
# Crank-Nicolson + midpoint memory rule (smooth kernels)
# ---------------------------------------------------------------------------

def _cn_loop(system, kernel, grid, problem, history, keep_trajectory, compute_error):
    if not isinstance(kernel, SmoothKernel):
        raise ValueError("the Crank-Nicolson stepper requires a smooth kernel")
    run = _Run(system, grid, history, keep_trajectory)
    mass, stiff, mem = system.M, system.A, system.B
    k0 = float(kernel(0.0))

    t0 = time.perf_counter()
    loads = LoadAssembler(system.mesh)
    u = project_initial(system.mesh, problem.u0, system)
    load_prev = loads.load(problem.source_f, 0.0)
    run.timings["assembly"] += time.perf_counter() - t0
    run.push(u, 0)

    factor_cache: dict[float, tuple[SparseFactor, sp.csr_matrix]] = {}

    for n in range(1, grid.n_steps + 1):
        dtn = float(grid.dt[n - 1])

        t0 = time.perf_counter()
        pair = factor_cache.get(dtn)
        if pair is None:
            shift = (0.5 * dtn) * stiff + (0.25 * dtn * dtn * k0) * mem
            a1 = (mass + shift).tocsc()
            a2 = sp.csr_matrix(mass - shift)
            pair = (SparseFactor(a1, sym=True), a2)
            factor_cache[dtn] = pair
        fac, a2 = pair
        run.timings["solves"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        coeffs = midpoint_memory_coeffs(kernel, grid, n)
        w = np.zeros(n)
        if n > 1:
            half = 0.5 * coeffs[: n - 1]
            w[1:n] += half
            w[: n - 1] += half
        hist = history.bweighted(w)
        run.timings["history_sum"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        load_cur = loads.load(problem.source_f, float(grid.nodes[n]))
        bn = 0.5 * (load_prev + load_cur)
        load_prev = load_cur
        run.timings["assembly"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        rhs = a2 @ u - dtn * hist + dtn * bn
        u = fac.solve(rhs)
        run.timings["solves"] += time.perf_counter() - t0
        run.push(u, n)

    return run.finish(u, problem, compute_error)


def cn_dense_solve(system, kernel, grid, problem, *, keep_trajectory=False, compute_error=True) -> RunResult:
    """Crank-Nicolson stepping with the full dense history."""
    history = DenseHistory(system.B, system.m, grid.n_steps + 1)
    return _cn_loop(system, kernel, grid, problem, history, keep_trajectory, compute_error)


def cn_isvd_solve(system, kernel, grid, problem, tol, *, keep_trajectory=False, compute_error=True) -> RunResult:
    """Crank-Nicolson stepping with SVD-compressed history."""
    history = CompressedHistory(system.B, system.m, tol)
    return _cn_loop(system, kernel, grid, problem, history, keep_trajectory, compute_error)


# ---------------------------------------------------------------------------
# BDF2 + convolution quadrature (weakly singular kernels)
# ---------------------------------------------------------------------------

def _bdf2_loop(system, kernel, grid, problem, history, varpi_mode, keep_trajectory, compute_error):
    if not isinstance(kernel, WeaklySingularKernel):
        raise ValueError("the BDF2-CQ stepper requires a weakly singular kernel")
    if not grid.is_uniform:
        raise ValueError("the BDF2-CQ stepper requires a uniform time grid")
    run = _Run(system, grid, history, keep_trajectory)
    mass, stiff, mem = system.M, system.A, system.B
    n_steps = grid.n_steps
    dt = float(grid.dt[0])
    dta = dt ** kernel.alpha

    t0 = time.perf_counter()
    weights = cq_weights(kernel.alpha, kernel.lam, grid, mode=varpi_mode)
    chi, varpi = weights.chi, weights.varpi
    loads = LoadAssembler(system.mesh)
    u0 = project_initial(system.mesh, problem.u0, system)
    b_u0 = mem @ u0
    run.timings["assembly"] += time.perf_counter() - t0
    run.push(u0, 0)

    t0 = time.perf_counter()
    fac1 = SparseFactor((mass / dt + stiff + (dta * chi[0]) * mem).tocsc(), sym=True)
    run.timings["solves"] += time.perf_counter() - t0

    t0 = time.perf_counter()
    b1 = loads.load(problem.source_f, float(grid.nodes[1]))
    run.timings["assembly"] += time.perf_counter() - t0

    t0 = time.perf_counter()
    rhs = mass @ u0 / dt - (dta * chi[1] + varpi[1]) * b_u0 + b1
    u_prev2, u_prev = u0, fac1.solve(rhs)
    run.timings["solves"] += time.perf_counter() - t0
    run.push(u_prev, 1)

    if n_steps >= 2:
        t0 = time.perf_counter()
        fac = SparseFactor((1.5 * mass / dt + stiff + (dta * chi[0]) * mem).tocsc(), sym=True)
        run.timings["solves"] += time.perf_counter() - t0
        for n in range(2, n_steps + 1):
            t0 = time.perf_counter()
            w = chi[1 : n + 1][::-1]  # weight chi[n-j] on column u_j
            hist = history.bweighted(w)
            run.timings["history_sum"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            bn = loads.load(problem.source_f, float(grid.nodes[n]))
            run.timings["assembly"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            rhs = mass @ (4.0 * u_prev - u_prev2) / (2.0 * dt) - dta * hist - varpi[n] * b_u0 + bn
            u_new = fac.solve(rhs)
            run.timings["solves"] += time.perf_counter() - t0
            u_prev2, u_prev = u_prev, u_new
            run.push(u_new, n)

    return run.finish(u_prev, problem, compute_error)


def bdf2cq_dense_solve(system, kernel, grid, problem, *, varpi_mode="exact-const",
                       keep_trajectory=False, compute_error=True) -> RunResult:
    """BDF2 with convolution quadrature, full dense history."""
    history = DenseHistory(system.B, system.m, grid.n_steps + 1)
    return _bdf2_loop(system, kernel, grid, problem, history, varpi_mode, keep_trajectory, compute_error)


def bdf2cq_isvd_solve(system, kernel, grid, problem, tol, *, varpi_mode="exact-const",
                      keep_trajectory=False, compute_error=True) -> RunResult:
    """BDF2 with convolution quadrature, SVD-compressed history."""
    history = CompressedHistory(system.B, system.m, tol)
    return _bdf2_loop(system, kernel, grid, problem, history, varpi_mode, keep_trajectory, compute_error)


# ---------------------------------------------------------------------------
# backward Euler + L1 weights (variable-order Caputo kernels)
# ---------------------------------------------------------------------------

def _is_symmetric(a) -> bool:
    d = abs(a - a.T)
    return d.nnz == 0 or d.max() <= 1e-14 * max(1.0, abs(a).max())


class _VoStepMatrix:
    """Per-step factorization of M/dt + A + beta_nn * B.

    The leading coefficient changes every step (the order is time
    dependent), so the matrix is refactorized each step.  When all three
    matrices are symmetric the solve runs over LAPACK's banded Cholesky,
    which is an order of magnitude cheaper than a fresh sparse LU here.
    """

    def __init__(self, mass, stiff, mem, dt: float):
        self.spd = _is_symmetric(stiff) and _is_symmetric(mem)
        if self.spd:
            bw = max(bandwidth_of(mass), bandwidth_of(stiff), bandwidth_of(mem))
            self._base = band_upper(mass, bw) / dt + band_upper(stiff, bw)
            self._mem_band = band_upper(mem, bw)
            self._work = np.empty_like(self._base)
        else:
            self._base_csr = mass / dt + stiff
            self._mem_csr = mem

    def solve(self, beta_nn: float, rhs: np.ndarray) -> np.ndarray:
        if self.spd:
            np.multiply(self._mem_band, beta_nn, out=self._work)
            self._work += self._base
            return BandedCholeskyFactor(self._work, overwrite_band=True).solve(rhs)
        return SparseFactor((self._base_csr + beta_nn * self._mem_csr).tocsc()).solve(rhs)


def _vo_loop(system, kernel, grid, problem, history, keep_trajectory, compute_error):
    if not isinstance(kernel, VariableOrderKernel):
        raise ValueError("the L1 stepper requires a variable-order kernel")
    if not grid.is_uniform:
        raise ValueError("the L1 stepper requires a uniform time grid")
    run = _Run(system, grid, history, keep_trajectory)
    mass = system.M
    dt = float(grid.dt[0])

    t0 = time.perf_counter()
    loads = LoadAssembler(system.mesh)
    u = project_initial(system.mesh, problem.u0, system)
    run.timings["assembly"] += time.perf_counter() - t0
    run.push(u, 0)

    t0 = time.perf_counter()
    step_matrix = _VoStepMatrix(mass, system.A, system.B, dt)
    run.timings["solves"] += time.perf_counter() - t0

    for n in range(1, grid.n_steps + 1):
        t0 = time.perf_counter()
        beta = l1_weights(kernel.alpha_fn, grid, n)  # beta[j-1] = beta_{n,j}
        w = np.zeros(n)
        w[1:] = beta[: n - 1]  # the L1 sum starts at j = 1; u0 carries no weight
        hist = history.bweighted(w)
        run.timings["history_sum"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        bn = loads.load(problem.source_f, float(grid.nodes[n]))
        run.timings["assembly"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        rhs = mass @ u / dt - hist + bn
        u = step_matrix.solve(float(beta[n - 1]), rhs)
        run.timings["solves"] += time.perf_counter() - t0
        run.push(u, n)

    return run.finish(u, problem, compute_error)


def vo_caputo_dense_solve(system, kernel, grid, problem, *, keep_trajectory=False, compute_error=True) -> RunResult:
    """Backward Euler with L1 weights, full dense history."""
    history = DenseHistory(system.B, system.m, grid.n_steps + 1)
    return _vo_loop(system, kernel, grid, problem, history, keep_trajectory, compute_error)


def vo_caputo_isvd_solve(system, kernel, grid, problem, tol, *, keep_trajectory=False, compute_error=True) -> RunResult:
    """Backward Euler with L1 weights, SVD-compressed history."""
    history = CompressedHistory(system.B, system.m, tol)
    return _vo_loop(system, kernel, grid, problem, history, keep_trajectory, compute_error)


SCHEME_SOLVERS = {
    ("cn", "dense"): cn_dense_solve,
    ("cn", "isvd"): cn_isvd_solve,
    ("bdf2cq", "dense"): bdf2cq_dense_solve,
    ("bdf2cq", "isvd"): bdf2cq_isvd_solve,
    ("vo-l1", "dense"): vo_caputo_dense_solve,
    ("vo-l1", "isvd"): vo_caputo_isvd_solve,
}
