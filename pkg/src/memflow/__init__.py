"""Finite element solvers for diffusion with memory, with streaming
SVD-compressed history storage.

The history of a memory-kernel time stepper normally costs O(m*n) storage
and O(m*n^2) work over n steps.  When the solution trajectory is close to
low rank, compressing it on the fly with an incremental truncated SVD cuts
this to O((m+n)*r) storage and O(m*n*r + r*n^2) work while reproducing the
dense-history solution to near machine precision.
"""

from .fem import (
    AssembledSystem,
    LoadAssembler,
    Mesh2D,
    OperatorCoeffs,
    assemble,
    assemble_load,
    assemble_raw,
    bar_load,
    build_mesh,
    l2_error,
    project_initial,
)
from .grids import TimeGrid
from .isvd import IsvdState, IsvdStats, initialize, load_checkpoint
from .kernels import (
    CqWeights,
    KernelSpec,
    SmoothKernel,
    VariableOrderKernel,
    WeaklySingularKernel,
    cq_weights,
    kernel_K0,
    l1_weights,
    midpoint_memory_coeffs,
    sigma_coeff,
    sigma_coeffs,
)
from .linalg import (
    BandedCholeskyFactor,
    NonFiniteInputError,
    PowerIterationError,
    SolveFailureError,
    SparseFactor,
    SvdTriple,
    band_upper,
    bandwidth_of,
    gemm,
    matvec,
    sparse_solve,
    spectral_radius,
    svd_dense,
)
from .problems import (
    REFERENCE_ERRORS,
    ManufacturedProblem,
    by_name,
    default_n_steps,
    smooth_log_problem,
    variable_order_problem,
    weakly_singular_problem,
    zero_problem,
)
from .solver import (
    SCHEME_SOLVERS,
    CompressedHistory,
    DenseHistory,
    RunResult,
    bdf2cq_dense_solve,
    bdf2cq_isvd_solve,
    cn_dense_solve,
    cn_isvd_solve,
    dense_history_bytes,
    vo_caputo_dense_solve,
    vo_caputo_isvd_solve,
)

__version__ = "0.1.0"
