"""Manufactured benchmark problems on the unit square with T = 1.

Each problem pairs an exact solution (vanishing on the boundary) with the
source term that makes it solve

    u_t - Laplace(u) + int_0^t K(t-s) * (-Laplace(u))(s) ds = f,  u(0) = u0,

for its kernel family.  The reference error tables record the L2 errors the
bundled convergence ladder is expected to reproduce (used by ``--check``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gamma as gamma_fn

from .kernels import KernelSpec, SmoothKernel, VariableOrderKernel, WeaklySingularKernel


@dataclass(frozen=True)
class ManufacturedProblem:
    label: str
    kernel: KernelSpec
    source_f: Callable          # f(x, y, t)
    u0: Callable                # u0(x, y)
    exact_u: Callable | None    # u(x, y, t), None for problems without one
    t_final: float = 1.0
    scheme: str = "cn"          # default stepper: cn | bdf2cq | vo-l1


def _bubble(x, y):
    return x * (1.0 - x) * y * (1.0 - y)


def _bubble_gap(x, y):
    # -Laplace of the bubble, halved: x(1-x) + y(1-y)
    return x * (1.0 - x) + y * (1.0 - y)


def smooth_log_problem() -> ManufacturedProblem:
    """u = x(1-x)y(1-y) t with kernel K(t) = log(1 + t).

    The memory convolution of the linear-in-time part has the closed form
    kappa(t) = (1+t)^2/2 * log(1+t) - 3t^2/4 - t/2 (so kappa'' = K).
    """

    def kappa(t):
        return 0.5 * (1.0 + t) ** 2 * np.log1p(t) - 0.75 * t * t - 0.5 * t

    def source(x, y, t):
        return _bubble(x, y) + 2.0 * (t + kappa(t)) * _bubble_gap(x, y)

    def exact(x, y, t):
        return _bubble(x, y) * t

    return ManufacturedProblem(
        label="example1",
        kernel=SmoothKernel(np.log1p, label="log1p"),
        source_f=source,
        u0=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
        exact_u=exact,
        scheme="cn",
    )


def weakly_singular_problem(alpha: float = 0.8, lam: float = 0.2) -> ManufacturedProblem:
    """u = -t^(2+a)/Gamma(3+a) e^(-lam t) sin(pi x) sin(pi y), Abel-type kernel.

    The source follows from the Beta-function identity for the convolution
    of t^(2+a) with the tempered power kernel; note the Gamma(3+2a)
    denominator on the convolution term.
    """
    kernel = WeaklySingularKernel(alpha=alpha, lam=lam)
    g3a = gamma_fn(3.0 + alpha)
    g2a = gamma_fn(2.0 + alpha)
    g32a = gamma_fn(3.0 + 2.0 * alpha)
    pi2 = np.pi ** 2

    def phi(x, y):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    def exact(x, y, t):
        return -(t ** (2.0 + alpha)) / g3a * np.exp(-lam * t) * phi(x, y)

    def source(x, y, t):
        c = (
            lam * t ** (2.0 + alpha) / g3a
            - t ** (1.0 + alpha) / g2a
            - 2.0 * pi2 * t ** (2.0 * alpha + 2.0) / g32a
            - 2.0 * pi2 * t ** (alpha + 2.0) / g3a
        ) * np.exp(-lam * t)
        return c * phi(x, y)

    return ManufacturedProblem(
        label="example2",
        kernel=kernel,
        source_f=source,
        u0=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
        exact_u=exact,
        scheme="bdf2cq",
    )


def variable_order_problem() -> ManufacturedProblem:
    """u = x(1-x)y(1-y) t with Caputo order alpha(t) = 1/2 + sin(5t)/4."""

    def alpha_fn(t):
        return 0.5 + 0.25 * np.sin(5.0 * t)

    def source(x, y, t):
        a = alpha_fn(t)
        return _bubble(x, y) + (2.0 * t + 2.0 * t ** (2.0 - a) / gamma_fn(3.0 - a)) * _bubble_gap(x, y)

    def exact(x, y, t):
        return _bubble(x, y) * t

    return ManufacturedProblem(
        label="example3",
        kernel=VariableOrderKernel(alpha_fn),
        source_f=source,
        u0=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
        exact_u=exact,
        scheme="vo-l1",
    )


def zero_problem(kernel: KernelSpec, scheme: str) -> ManufacturedProblem:
    """Homogeneous data: the exact trajectory is identically zero."""
    zero2 = lambda x, y: np.zeros_like(np.asarray(x, dtype=float))
    return ManufacturedProblem(
        label="custom",
        kernel=kernel,
        source_f=lambda x, y, t: zero2(x, y),
        u0=zero2,
        exact_u=lambda x, y, t: zero2(x, y),
        scheme=scheme,
    )


def by_name(name: str, alpha: float = 0.8, lam: float = 0.2) -> ManufacturedProblem:
    if name == "example1":
        return smooth_log_problem()
    if name == "example2":
        return weakly_singular_problem(alpha=alpha, lam=lam)
    if name == "example3":
        return variable_order_problem()
    raise ValueError(f"unknown problem {name!r}")


# Expected final-time L2 errors for the standard ladder (dt = 1/n_div for the
# first two problems, dt = 1/4000 for the variable-order one), keyed by n_div.
REFERENCE_ERRORS: dict[str, dict[int, float]] = {
    "example1": {
        8: 1.38e-3, 16: 3.50e-4, 32: 8.79e-5, 64: 2.20e-5,
        128: 5.50e-6, 256: 1.37e-6, 512: 3.44e-7, 1024: 8.59e-8,
    },
    "example2": {
        8: 4.00e-3, 16: 1.00e-3, 32: 2.61e-4, 64: 6.55e-5,
        128: 1.64e-5, 256: 4.10e-6, 512: 1.03e-6, 1024: 2.57e-7,
    },
    "example3": {
        4: 5.37e-3, 8: 1.42e-3, 16: 3.61e-4, 32: 9.22e-5,
        64: 2.47e-5, 128: 7.82e-6, 256: 3.69e-6,
    },
}


def default_n_steps(problem_label: str, n_div: int, t_final: float = 1.0) -> int:
    """Convergence-ladder step count: N = n_div except for the
    variable-order problem, which fixes dt = 1/4000."""
    if problem_label == "example3":
        return max(1, round(4000 * t_final))
    return n_div
