"""Memory kernels and the quadrature weights that discretize them.

Three kernel families are supported:

* smooth kernels ``K(t)`` (e.g. ``log(1 + t)``) integrated with the
  midpoint rule inside the Crank-Nicolson stepper;
* exponentially weighted weakly singular kernels
  ``K(t) = exp(-lam*t) * t**(alpha-1) / Gamma(alpha)`` handled by a
  second-order convolution quadrature with starting correction;
* variable-order Caputo kernels ``(t-s)**(-alpha(t)) / Gamma(1-alpha(t))``
  handled by first-order product (L1) weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import gammainc

from .grids import TimeGrid


@dataclass(frozen=True)
class SmoothKernel:
    """A kernel given directly as a callable of elapsed time."""

    fn: Callable[[np.ndarray], np.ndarray]
    label: str = "smooth"

    def __call__(self, t):
        return self.fn(t)


@dataclass(frozen=True)
class WeaklySingularKernel:
    """K(t) = exp(-lam*t) * t**(alpha-1) / Gamma(alpha), 0 < alpha < 1."""

    alpha: float
    lam: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.lam < 0.0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-self.lam * t) * t ** (self.alpha - 1.0) / gamma_fn(self.alpha)


@dataclass(frozen=True)
class VariableOrderKernel:
    """Caputo-type kernel whose order alpha(t) in (0, 1) varies with time."""

    alpha_fn: Callable[[np.ndarray], np.ndarray]
    label: str = "variable-order"


KernelSpec = Union[SmoothKernel, WeaklySingularKernel, VariableOrderKernel]


# ---------------------------------------------------------------------------
# convolution quadrature for the weakly singular kernel
# ---------------------------------------------------------------------------

def sigma_coeff(alpha: float, s: int) -> float:
    """Gamma(alpha+s) / (Gamma(alpha) * s!), as an overflow-safe product.

    Evaluated as prod_{j=1..s} (alpha + j - 1) / j; the factors tend to one,
    so the running product stays finite for any s.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if s < 0:
        raise ValueError("s must be >= 0")
    out = 1.0
    for i in range(s):
        out *= (alpha + i) / (i + 1)
    return out


def sigma_coeffs(alpha: float, n: int) -> np.ndarray:
    """Vector [sigma_0, ..., sigma_n] of the binomial-type coefficients."""
    out = np.empty(n + 1)
    out[0] = 1.0
    if n:
        i = np.arange(n, dtype=float)
        out[1:] = np.cumprod((alpha + i) / (i + 1.0))
    return out


@dataclass(frozen=True)
class CqWeights:
    """Second-order convolution-quadrature weights on a uniform grid.

    The rule for ``int_0^{t_n} K(t_n - s) phi(s) ds`` reads

        dt**alpha * sum_{p=0..n} chi[p] * phi(t_{n-p})  +  varpi[n] * phi(0).

    ``chi`` carries the exponential tempering; ``varpi`` is the starting
    correction.  In mode ``"exact-const"`` (default) varpi is defined so the
    rule is exact for constant phi; mode ``"paper-printed"`` is an
    alternative closed-form correction kept for A/B comparison, which is
    not exact on constants.
    """

    chi: np.ndarray
    varpi: np.ndarray
    dt: float
    alpha: float
    lam: float
    mode: str = "exact-const"

    def quadrature(self, phi_values: np.ndarray, n: int) -> float:
        """Apply the rule at t_n given phi sampled at t_0..t_n (at least)."""
        if n >= self.chi.size:
            raise IndexError(f"n={n} beyond the weight table (N={self.chi.size - 1})")
        w = self.chi[: n + 1][::-1]
        return float(self.dt ** self.alpha * (w @ phi_values[: n + 1]) + self.varpi[n] * phi_values[0])


def kernel_integral_weaksing(alpha: float, lam: float, t) -> np.ndarray:
    """int_0^t exp(-lam*s) s**(alpha-1) / Gamma(alpha) ds (elementwise)."""
    t = np.asarray(t, dtype=float)
    if lam == 0.0:
        return t ** alpha / gamma_fn(alpha + 1.0)
    return lam ** (-alpha) * gammainc(alpha, lam * t)


def cq_weights(alpha: float, lam: float, grid: TimeGrid, mode: str = "exact-const") -> CqWeights:
    """Build the chi / varpi weight tables for one uniform time grid.

    The chi table is the discrete convolution
    ``chi0[n] = (3/2)**(-alpha) * sum_s 3**(-s) sigma_s sigma_{n-s}``
    tempered by ``exp(-lam * t_n)``; cost O(N^2), which is fine at desk
    scale (FFT evaluation is an explicit non-goal).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if lam < 0.0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    if not grid.is_uniform:
        raise ValueError("convolution quadrature requires a uniform time grid")
    if mode not in ("exact-const", "paper-printed"):
        raise ValueError(f"unknown varpi mode {mode!r}")
    n = grid.n_steps
    dt = float(grid.dt[0])
    t = grid.nodes
    sig = sigma_coeffs(alpha, n)
    damped = sig * 3.0 ** (-np.arange(n + 1, dtype=float))
    chi0 = (1.5 ** (-alpha)) * np.convolve(damped, sig)[: n + 1]
    expfac = np.exp(-lam * t)
    chi = expfac * chi0
    partial = dt ** alpha * np.cumsum(chi)
    if mode == "exact-const":
        varpi = kernel_integral_weaksing(alpha, lam, t) - partial
    else:
        # exp(-lam t_n) [t_n^alpha / chi0[n] - dt^alpha sum_{p<=n} chi0[p]];
        # the tempering factors inside the sum collapse to exp(-lam t_n).
        varpi = expfac * (t ** alpha / chi0 - dt ** alpha * np.cumsum(chi0))
    return CqWeights(chi=chi, varpi=varpi, dt=dt, alpha=alpha, lam=lam, mode=mode)


# ---------------------------------------------------------------------------
# midpoint-rule coefficients for smooth kernels
# ---------------------------------------------------------------------------

def midpoint_memory_coeffs(kernel: SmoothKernel, grid: TimeGrid, n: int) -> np.ndarray:
    """Coefficients of the time-averaged solution values in the memory sum.

    Entry ``j-1`` multiplies the midpoint average at step j:
    ``K(tb_n - tb_j) * dt_j`` for j < n, and ``(dt_n / 2) * K(0)`` for the
    current step.
    """
    if n < 1 or n > grid.n_steps:
        raise ValueError(f"need 1 <= n <= {grid.n_steps}, got {n}")
    tb = grid.midpoints
    out = np.empty(n)
    if n > 1:
        out[: n - 1] = np.asarray(kernel(tb[n - 1] - tb[: n - 1]), dtype=float) * grid.dt[: n - 1]
    out[n - 1] = 0.5 * grid.dt[n - 1] * float(kernel(0.0))
    return out


# ---------------------------------------------------------------------------
# L1 weights for the variable-order Caputo kernel
# ---------------------------------------------------------------------------

def l1_weights(alpha_fn: Callable, grid: TimeGrid, n: int) -> np.ndarray:
    """Product-integration weights (beta_{n,1}, ..., beta_{n,n}).

    beta_{n,j} = [(t_n - t_{j-1})**(1-a_n) - (t_n - t_j)**(1-a_n)] / Gamma(2-a_n)
    with a_n = alpha_fn(t_n).
    """
    if n < 1 or n > grid.n_steps:
        raise ValueError(f"need 1 <= n <= {grid.n_steps}, got {n}")
    t = grid.nodes
    a_n = float(alpha_fn(t[n]))
    if not 0.0 < a_n < 1.0:
        raise ValueError(f"alpha(t_{n}) = {a_n} outside (0, 1)")
    e = 1.0 - a_n
    return ((t[n] - t[:n]) ** e - (t[n] - t[1 : n + 1]) ** e) / gamma_fn(2.0 - a_n)


# ---------------------------------------------------------------------------
# kernel mass K0 = int_0^T K(t) dt (stability diagnostic)
# ---------------------------------------------------------------------------

def kernel_K0(kernel: KernelSpec, t_final: float) -> float:
    """Integral of the kernel over (0, T], analytic where available.

    For the variable-order kernel the order is frozen at T (the value the
    stepper uses for its final row of weights), which admits a closed form.
    """
    if isinstance(kernel, WeaklySingularKernel):
        return float(kernel_integral_weaksing(kernel.alpha, kernel.lam, t_final))
    if isinstance(kernel, VariableOrderKernel):
        a = float(kernel.alpha_fn(t_final))
        return float(t_final ** (1.0 - a) / gamma_fn(2.0 - a))
    from scipy.integrate import quad

    val, err = quad(kernel.fn, 0.0, t_final, epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(val)
