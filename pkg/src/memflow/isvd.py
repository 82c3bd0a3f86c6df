"""Streaming truncated SVD of a growing column matrix.

The state keeps a rank-k factorization ``U_ell ~= Q @ diag(sigma) @ R.T``
of all columns ingested so far, plus a buffer ``W`` of projected columns
whose residual fell below the tolerance (so the factors did not need to
change).  A single tolerance drives both mechanisms that keep the rank
small:

* residual truncation: a new column whose out-of-subspace residual norm
  ``p`` is below ``tol`` is stored only through its projection ``Q.T @ u``;
* singular-value truncation: after a rank-growing update, the smallest new
  singular value is dropped when it falls below ``tol`` (only the smallest
  one can ever be below it, by interlacing).

Left rotations are accumulated in a small ``k x k`` matrix and applied to
the tall ``Q`` once per rank-changing update, so a buffer flush followed by
rank growth costs a single ``m x k`` rotation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .linalg import svd_dense

# Inner products of the residual direction with Q(:, 0) above this trigger
# one Gram-Schmidt correction pass; calibrated to sit at machine error.
REORTH_GUARD = 1e-14


@dataclass
class IsvdStats:
    """Counters accumulated over the life of one stream."""

    n_sv_truncations: int = 0
    n_reorth: int = 0
    rank_history: list[int] = field(default_factory=list)


class IsvdState:
    """Truncated-SVD factors of a column stream, updated one column at a time.

    Attributes
    ----------
    Q : (m, k) array with orthonormal columns
    sigma : (k,) singular values, descending
    R : (ell - q, k) array with orthonormal columns (right factor of the
        columns absorbed into the SVD)
    W : list of q pending projected columns, each of length k
    Q0 : (k, k) accumulated left rotation; identity between updates
    tol : truncation tolerance shared by both truncation mechanisms
    ell : number of columns ingested so far
    """

    def __init__(self, u1: np.ndarray, tol: float):
        u1 = np.asarray(u1, dtype=float).ravel()
        nrm = float(np.linalg.norm(u1))
        if not nrm > 0.0:
            raise ValueError("isvd: first column must be nonzero")
        if not tol > 0.0:
            raise ValueError("isvd: tol must be positive")
        self.Q = (u1 / nrm).reshape(-1, 1)
        self.sigma = np.array([nrm])
        self.R = np.array([[1.0]])
        self.W: list[np.ndarray] = []
        self.Q0 = np.eye(1)
        self.q = 0
        self.tol = float(tol)
        self.ell = 1
        self.epoch = 0
        self.stats = IsvdStats(rank_history=[1])

    # -- basic geometry -------------------------------------------------

    @property
    def m(self) -> int:
        return self.Q.shape[0]

    @property
    def rank(self) -> int:
        return self.sigma.size

    def orthogonality_error(self) -> float:
        """max |Q.T Q - I|, the drift the reorthogonalization guard limits."""
        k = self.rank
        return float(np.abs(self.Q.T @ self.Q - np.eye(k)).max())

    # -- update ----------------------------------------------------------

    def update(self, u: np.ndarray) -> None:
        """Ingest one more column.

        Residuals below ``tol`` append the projected column to the buffer;
        otherwise the buffer is flushed into the factors, the rank grows by
        one, and the smallest new singular value is dropped if it falls
        below ``tol``.
        """
        u = np.asarray(u, dtype=float).ravel()
        if u.shape[0] != self.m:
            raise ValueError(f"isvd: expected a column of length {self.m}, got {u.shape[0]}")
        d = self.Q.T @ u
        e = u - self.Q @ d
        p = float(np.linalg.norm(e))
        self.ell += 1
        if p < self.tol:
            self.W.append(d)
            self.q += 1
            self.stats.rank_history.append(self.rank)
            return

        k = self.rank
        if self.q > 0:
            # Flush the buffer: re-diagonalize [sigma | W] without touching Q.
            y = np.empty((k, k + self.q))
            y[:, :k] = np.diag(self.sigma)
            y[:, k:] = np.column_stack(self.W)
            qy, sy, ry = svd_dense(y, mode="thin")
            self.Q0 = self.Q0 @ qy
            self.sigma = sy
            self.R = np.vstack([self.R @ ry[:k, :], ry[k:, :]])
            d = qy.T @ d
            self.W = []
            self.q = 0

        ybar = np.zeros((k + 1, k + 1))
        ybar[:k, :k] = np.diag(self.sigma)
        ybar[:k, k] = d
        ybar[k, k] = p
        qy, sy, ry = svd_dense(ybar, mode="full")

        e /= p
        if abs(e @ self.Q[:, 0]) > REORTH_GUARD:
            e -= self.Q @ (self.Q.T @ e)
            e /= np.linalg.norm(e)
            self.stats.n_reorth += 1

        q0 = np.zeros((k + 1, k + 1))
        q0[:k, :k] = self.Q0
        q0[k, k] = 1.0
        self.Q0 = q0 @ qy
        rbig = np.zeros((self.R.shape[0] + 1, k + 1))
        rbig[:-1, :k] = self.R
        rbig[-1, k] = 1.0
        qe = np.column_stack([self.Q, e])

        if sy[k] >= self.tol:
            self.Q = qe @ self.Q0
            self.sigma = sy
            self.R = rbig @ ry
            self.Q0 = np.eye(k + 1)
        else:
            self.Q = qe @ self.Q0[:, :k]
            self.sigma = sy[:k]
            self.R = rbig @ ry[:, :k]
            self.Q0 = np.eye(k)
            self.stats.n_sv_truncations += 1

        self.W = []
        self.q = 0
        self.epoch += 1
        self.stats.rank_history.append(self.rank)

    # -- reading the compressed history -----------------------------------

    def history_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(Q, X)`` with ``X = [diag(sigma) @ R.T | W]`` of shape (k, ell).

        Column ``j`` of ``Q @ X`` is the compressed version of ingested
        column ``j``; buffered columns come after the factored ones.
        """
        k = self.rank
        x = np.empty((k, self.ell))
        nf = self.ell - self.q
        x[:, :nf] = (self.R * self.sigma).T
        if self.q:
            x[:, nf:] = np.column_stack(self.W)
        return self.Q, x

    def reconstruct_column(self, j: int) -> np.ndarray:
        """Compressed column ``j`` (0-based, in ingestion order)."""
        if not 0 <= j < self.ell:
            raise IndexError(f"column {j} out of range [0, {self.ell})")
        nf = self.ell - self.q
        if j < nf:
            return self.Q @ (self.R[j, :] * self.sigma)
        return self.Q @ self.W[j - nf]

    def current_singular_values(self) -> np.ndarray:
        """Singular values of the full ingested matrix, buffer included.

        ``[diag(sigma) | W]`` has the same Gram matrix as ``X``, so its
        singular values are those of ``Q @ X``.
        """
        if self.q == 0:
            return self.sigma.copy()
        y = np.column_stack([np.diag(self.sigma), np.column_stack(self.W)])
        return svd_dense(y, mode="thin").S

    def live_bytes(self) -> int:
        """Accounting-model size of the live factors (8 bytes per entry):
        Q (m*k) + sigma (k) + R ((ell-q)*k) + Q0 (k^2) + W (q*k)."""
        k = self.rank
        return 8 * (self.m * k + k + (self.ell - self.q) * k + k * k + self.q * k)

    # -- checkpoint io -----------------------------------------------------

    def save_checkpoint(self, path) -> None:
        """Write the factors as a flat binary file.

        Layout: header ``(m, k, ell, q)`` as little-endian uint64, then
        row-major float64 blocks for Q, sigma, R and the q buffered columns.
        """
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4Q", self.m, self.rank, self.ell, self.q))
            fh.write(np.ascontiguousarray(self.Q).tobytes())
            fh.write(np.ascontiguousarray(self.sigma).tobytes())
            fh.write(np.ascontiguousarray(self.R).tobytes())
            for w in self.W:
                fh.write(np.ascontiguousarray(w).tobytes())


def load_checkpoint(path, tol: float = 1e-12) -> IsvdState:
    """Rebuild a state from :meth:`IsvdState.save_checkpoint` output.

    ``tol`` is not stored in the file and must be supplied again if the
    stream is to be continued.
    """
    with open(path, "rb") as fh:
        m, k, ell, q = struct.unpack("<4Q", fh.read(32))
        data = np.frombuffer(fh.read(), dtype="<f8")
    nf = ell - q
    want = m * k + k + nf * k + q * k
    if data.size != want:
        raise ValueError(f"checkpoint payload has {data.size} floats, expected {want}")
    state = IsvdState.__new__(IsvdState)
    pos = 0
    state.Q = data[pos:pos + m * k].reshape(m, k).copy()
    pos += m * k
    state.sigma = data[pos:pos + k].copy()
    pos += k
    state.R = data[pos:pos + nf * k].reshape(nf, k).copy()
    pos += nf * k
    state.W = [data[pos + i * k:pos + (i + 1) * k].copy() for i in range(q)]
    state.Q0 = np.eye(k)
    state.q = q
    state.tol = float(tol)
    state.ell = ell
    state.epoch = 0
    state.stats = IsvdStats(rank_history=[k])
    return state


def initialize(u1: np.ndarray, tol: float) -> IsvdState:
    """Start a stream from its first (nonzero) column."""
    return IsvdState(u1, tol)
