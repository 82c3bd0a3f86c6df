"""Dense and sparse linear algebra primitives shared by all solver modules.

Thin, contract-checked wrappers around LAPACK (via numpy) and SuperLU /
banded Cholesky (via scipy).  Everything operates on 64-bit floats; the
history-compression tolerances used elsewhere (1e-12 and below) are
meaningless in single precision.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded
from scipy.sparse.linalg import splu


class NonFiniteInputError(ValueError):
    """Input contains NaN or infinity."""


class SolveFailureError(RuntimeError):
    """A linear solve failed its residual contract or broke down."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class PowerIterationError(RuntimeError):
    """Power iteration did not reach the requested tolerance."""

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


class SvdTriple(NamedTuple):
    """Factors of A = U @ diag(S) @ V.T with orthonormal U, V columns."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray


def svd_dense(a: np.ndarray, mode: str = "thin") -> SvdTriple:
    """Singular value decomposition of a small dense matrix.

    Parameters
    ----------
    a : (m, n) array
    mode : "thin" or "full"
        "full" returns square U and V; "thin" returns the economy factors.

    Returns
    -------
    SvdTriple with S sorted descending.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteInputError("svd_dense: input has non-finite entries")
    if mode not in ("thin", "full"):
        raise ValueError(f"mode must be 'thin' or 'full', got {mode!r}")
    u, s, vh = np.linalg.svd(a, full_matrices=(mode == "full"))
    return SvdTriple(u, s, vh.T)


def matvec(a, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product with an explicit dimension check."""
    x = np.asarray(x, dtype=float)
    if a.shape[1] != x.shape[0]:
        raise ValueError(f"matvec: shapes {a.shape} and {x.shape} do not align")
    return a @ x


def gemm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense matrix-matrix product with an explicit dimension check."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"gemm: shapes {a.shape} and {b.shape} do not align")
    return a @ b


class SparseFactor:
    """Cached LU factorization of a sparse square matrix.

    ``solve`` does not re-verify the residual (it sits in hot loops); use
    :func:`sparse_solve` when the 1e-12 residual contract should be checked.
    """

    def __init__(self, a, sym: bool = False):
        a = sp.csc_matrix(a)
        if a.shape[0] != a.shape[1]:
            raise ValueError(f"matrix must be square, got {a.shape}")
        options = {"SymmetricMode": True} if sym else {}
        try:
            self._lu = splu(a, options=options)
        except RuntimeError as exc:  # singular factor
            raise SolveFailureError(f"sparse factorization failed: {exc}") from exc
        self.shape = a.shape

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(b)


def sparse_solve(a, b: np.ndarray, sym: bool = False, residual_tol: float = 1e-12) -> np.ndarray:
    """Direct sparse solve of ``a @ x = b`` with a residual guarantee.

    Raises
    ------
    SolveFailureError
        If the relative residual ``|a x - b| / |b|`` exceeds ``residual_tol``.
    """
    b = np.asarray(b, dtype=float)
    x = SparseFactor(a, sym=sym).solve(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    res = np.linalg.norm(a @ x - b) / bnorm
    if not (res <= residual_tol):
        raise SolveFailureError(
            f"sparse_solve: achieved relative residual {res:.3e} > {residual_tol:.1e}",
            residual=res,
        )
    return x


def bandwidth_of(a) -> int:
    """Largest |i - j| over the stored nonzeros of a sparse matrix."""
    c = sp.coo_matrix(a)
    if c.nnz == 0:
        return 0
    return int(np.max(np.abs(c.row - c.col)))


def band_upper(a, bandwidth: int) -> np.ndarray:
    """Upper-band storage (LAPACK layout) of a symmetric sparse matrix.

    Row ``bandwidth - (j - i)`` of the result holds diagonal ``j - i``;
    only entries with ``j >= i`` are read.
    """
    c = sp.coo_matrix(a)
    m = c.shape[0]
    ab = np.zeros((bandwidth + 1, m))
    mask = c.col >= c.row
    offs = c.col[mask] - c.row[mask]
    if offs.size and offs.max() > bandwidth:
        raise ValueError("matrix has entries outside the declared bandwidth")
    ab[bandwidth - offs, c.col[mask]] = c.data[mask]
    return ab


class BandedCholeskyFactor:
    """Cholesky factor of an SPD matrix given in upper-band storage.

    Skips scipy's per-call finiteness scans; callers sit in hot loops and
    construct the bands from already-validated matrices.
    """

    def __init__(self, band: np.ndarray, overwrite_band: bool = False):
        try:
            self._cb = cholesky_banded(band, lower=False, check_finite=False,
                                       overwrite_ab=overwrite_band)
        except np.linalg.LinAlgError as exc:
            raise SolveFailureError(f"banded Cholesky failed: {exc}") from exc

    def solve(self, b: np.ndarray) -> np.ndarray:
        return cho_solve_banded((self._cb, False), b, check_finite=False)


def spectral_radius(a, tol: float = 1e-10, max_iter: int = 100_000) -> float:
    """Dominant eigenvalue of a symmetric sparse matrix by power iteration.

    Iterates until the relative change of the Rayleigh quotient between
    consecutive iterates drops below ``tol``.
    """
    m = a.shape[0]
    rng = np.random.default_rng(0)
    x = rng.standard_normal(m)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = a @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        lam_new = float(x @ (a @ x))
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            return abs(lam_new)
        lam = lam_new
    raise PowerIterationError(
        f"power iteration did not converge to rel. change {tol:.1e} "
        f"within {max_iter} iterations (estimate {lam:.6e})",
        estimate=abs(lam),
    )
