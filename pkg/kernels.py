"""
Kernel Registry for the Rosenblatt Density Estimator
Symmetric density kernels, their derivatives and L2 norms, and a numerical
checker for the smoothness conditions (symmetry/monotonicity, tail decay,
bounded derivative) the asymptotic theory needs
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator

from numerics import DomainError, QuadratureResult, quadrature_1d

logger = logging.getLogger(__name__)

SQRT_2PI = math.sqrt(2.0 * math.pi)

# Infinite-support kernels are integrated on [-R, R]; the Gaussian mass
# beyond R = 40 is below double precision
INFINITE_SUPPORT_INTEGRATION_RADIUS = 40.0


class UnknownKernelError(ValueError):
    """Kernel name not present in the registry"""


@dataclass(frozen=True)
class ConditionC:
    """Verdicts for the three kernel conditions"""
    c1: bool
    c2: bool
    c3: bool

    def as_tuple(self) -> Tuple[bool, bool, bool]:
        return (self.c1, self.c2, self.c3)


@dataclass(frozen=True)
class Kernel:
    """
    A symmetric probability density used as smoothing kernel

    deriv_sup_norm is None when K' is unbounded (K has a jump);
    breakpoints lists the known non-smooth points.
    """
    name: str
    eval: Callable
    deriv: Callable
    l2_norm_sq: Optional[float]
    sup_norm: float
    deriv_sup_norm: Optional[float]
    support_radius: float
    condition_c: ConditionC
    breakpoints: Tuple[float, ...] = field(default_factory=tuple)

    def __call__(self, u):
        return self.eval(u)

    @property
    def has_bounded_derivative(self) -> bool:
        return self.deriv_sup_norm is not None and self.condition_c.c3

    @property
    def integration_radius(self) -> float:
        if math.isinf(self.support_radius):
            return INFINITE_SUPPORT_INTEGRATION_RADIUS
        return self.support_radius


def _gaussian(u):
    return np.exp(-0.5 * np.square(u)) / SQRT_2PI


def _gaussian_deriv(u):
    return -np.asarray(u, dtype=float) * _gaussian(u)


def _epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - np.square(u)), 0.0)


def _epanechnikov_deriv(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) < 1.0, -1.5 * u, 0.0)


def _uniform(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 0.5, 1.0, 0.0)


def _uniform_deriv(u):
    return np.zeros_like(np.asarray(u, dtype=float))


def gaussian_kernel() -> Kernel:
    """Standard normal kernel, the default; satisfies every condition"""
    return Kernel(
        name="gaussian",
        eval=_gaussian,
        deriv=_gaussian_deriv,
        l2_norm_sq=1.0 / (2.0 * math.sqrt(math.pi)),
        sup_norm=1.0 / SQRT_2PI,
        deriv_sup_norm=math.exp(-0.5) / SQRT_2PI,
        support_radius=math.inf,
        condition_c=ConditionC(True, True, True),
    )


def epanechnikov_kernel() -> Kernel:
    """3/4 (1 - u^2) on [-1, 1]; K' jumps at the support edge"""
    return Kernel(
        name="epanechnikov",
        eval=_epanechnikov,
        deriv=_epanechnikov_deriv,
        l2_norm_sq=0.6,
        sup_norm=0.75,
        deriv_sup_norm=1.5,
        support_radius=1.0,
        condition_c=ConditionC(True, True, False),
        breakpoints=(-1.0, 1.0),
    )


def uniform_kernel() -> Kernel:
    """Indicator of [-1/2, 1/2]; K itself jumps, so K' is unbounded"""
    return Kernel(
        name="uniform",
        eval=_uniform,
        deriv=_uniform_deriv,
        l2_norm_sq=1.0,
        sup_norm=1.0,
        deriv_sup_norm=None,
        support_radius=0.5,
        condition_c=ConditionC(True, True, False),
        breakpoints=(-0.5, 0.5),
    )


KERNEL_REGISTRY: Dict[str, Callable[[], Kernel]] = {
    "gaussian": gaussian_kernel,
    "epanechnikov": epanechnikov_kernel,
    "uniform": uniform_kernel,
}


def get_kernel(name: str) -> Kernel:
    """
    Look up a built-in kernel by name

    Args:
        name: "gaussian" | "epanechnikov" | "uniform"

    Returns:
        Kernel instance
    """
    try:
        return KERNEL_REGISTRY[name]()
    except KeyError:
        raise UnknownKernelError(
            f"Unknown kernel {name!r}; choose one of {sorted(KERNEL_REGISTRY)}"
        ) from None


def eval_kernel(kernel: Kernel, u):
    return kernel.eval(u)


def kernel_integral(kernel: Kernel, power: int = 1) -> QuadratureResult:
    """Adaptive quadrature of K^power over the kernel's support"""
    radius = kernel.integration_radius
    return quadrature_1d(lambda t: float(kernel.eval(t)) ** power, -radius, radius,
                         points=kernel.breakpoints + (0.0,))


def kernel_l2_norm(kernel: Kernel, use_quadrature: bool = False) -> float:
    """
    Squared L2 norm of the kernel, ∫K²(u)du

    Args:
        kernel: Kernel
        use_quadrature: Ignore the cached closed form and integrate

    Returns:
        ∫K²

    Raises:
        QuadratureError: the adaptive rule did not converge
    """
    if not use_quadrature and kernel.l2_norm_sq is not None:
        return kernel.l2_norm_sq
    return kernel_integral(kernel, power=2).value


def tabulated_kernel(name: str, knots: Sequence[float], values: Sequence[float]) -> Kernel:
    """
    Build a kernel from a table on [0, R], extended symmetrically

    The table is interpolated with a shape-preserving cubic (PCHIP), set to
    zero beyond the last knot and renormalised to integrate to one. The
    condition flags come from verify_condition_c, not from the caller.

    Args:
        name: Identifier for outputs
        knots: Strictly increasing abscissae starting at 0
        values: Nonnegative kernel values at the knots

    Returns:
        Kernel
    """
    knots_arr = np.asarray(knots, dtype=float)
    values_arr = np.asarray(values, dtype=float)
    if knots_arr.ndim != 1 or knots_arr.size < 3 or knots_arr.size != values_arr.size:
        raise DomainError("kernel table needs at least 3 matching knots and values")
    if knots_arr[0] != 0.0 or np.any(np.diff(knots_arr) <= 0):
        raise DomainError("kernel table knots must start at 0 and increase strictly")
    if np.any(values_arr < 0):
        raise DomainError("kernel table values must be nonnegative")

    radius = float(knots_arr[-1])
    spline = PchipInterpolator(knots_arr, values_arr, extrapolate=False)
    slope = spline.derivative()

    def raw(u):
        a = np.abs(np.asarray(u, dtype=float))
        return np.where(a <= radius, np.nan_to_num(spline(np.minimum(a, radius))), 0.0)

    mass = 2.0 * quadrature_1d(lambda t: float(raw(t)), 0.0, radius).value
    if abs(mass - 1.0) > 1e-8:
        logger.info(f"📐 Renormalising kernel table {name!r} (raw mass {mass:.10f})")

    def density(u):
        return raw(u) / mass

    def derivative(u):
        u = np.asarray(u, dtype=float)
        a = np.abs(u)
        inside = np.nan_to_num(slope(np.minimum(a, radius))) / mass
        return np.where(a < radius, np.sign(u) * inside, 0.0)

    fine = np.linspace(0.0, radius, 20_001)
    provisional = Kernel(
        name=name,
        eval=density,
        deriv=derivative,
        l2_norm_sq=None,
        sup_norm=float(np.max(density(fine))),
        deriv_sup_norm=float(np.max(np.abs(derivative(fine)))),
        support_radius=radius,
        condition_c=ConditionC(False, False, False),
        breakpoints=(-radius, 0.0, radius),
    )
    l2 = kernel_integral(provisional, power=2).value
    report = verify_condition_c(replace(provisional, l2_norm_sq=l2))
    kernel = replace(provisional, l2_norm_sq=l2, condition_c=report.verdict)
    logger.info(f"✅ Built table kernel {name!r}: condition C = {kernel.condition_c.as_tuple()}")
    return kernel


@dataclass(frozen=True)
class GridSpec:
    """Sampling plan for the numerical condition checks"""
    half_width: float = 50.0
    n_points: int = 10_001
    tail_probes: Tuple[float, ...] = (1e2, 1e3, 1e4, 1e5, 1e6)
    kink_tolerance: float = 0.05
    fd_step: float = 1e-5
    fd_tolerance: float = 1e-6

    def grid(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n_points)


@dataclass
class ConditionCReport:
    """Per-condition verdicts with the first violating point of each failure"""
    kernel_name: str
    c1: bool
    c2: bool
    c3: bool
    first_violation: Dict[str, Optional[float]] = field(default_factory=dict)
    reasons: Dict[str, str] = field(default_factory=dict)
    integral: Optional[float] = None

    @property
    def verdict(self) -> ConditionC:
        return ConditionC(self.c1, self.c2, self.c3)

    def as_tuple(self) -> Tuple[bool, bool, bool]:
        return (self.c1, self.c2, self.c3)


def _first_point(points: np.ndarray, mask: np.ndarray) -> Optional[float]:
    hits = np.flatnonzero(mask)
    return float(points[hits[0]]) if hits.size else None


def verify_condition_c(kernel: Kernel, grid_spec: GridSpec = GridSpec()) -> ConditionCReport:
    """
    Check the three kernel conditions numerically on a sampling grid

    C1: unit mass, K(u) = K(-u), K nonincreasing on (0, inf) (nonincreasing
        is accepted for "decreasing").
    C2: u²K(u) < 1e-6 at tail probes beyond 10·(1 + effective radius).
    C3: a bounded derivative is declared; |K'| respects it; K moves by no
        more than ‖K'‖∞·h between grid neighbours; one-sided slopes do not
        jump; the declared derivative matches central differences.

    Args:
        kernel: Kernel under test
        grid_spec: Sampling plan, at least [-50, 50] with 10^4 points

    Returns:
        ConditionCReport
    """
    if grid_spec.half_width < 50.0 or grid_spec.n_points < 10_000:
        raise DomainError("grid_spec must cover [-50, 50] with at least 10^4 points")

    report = ConditionCReport(kernel_name=kernel.name, c1=True, c2=True, c3=True)
    u = grid_spec.grid()
    k_vals = np.asarray(kernel.eval(u), dtype=float)
    spacing = float(u[1] - u[0])

    # C1
    report.integral = kernel_integral(kernel).value
    mirrored = np.asarray(kernel.eval(-u), dtype=float)
    positive = u > 0
    k_pos = k_vals[positive]
    increasing = np.concatenate([[False], np.diff(k_pos) > 1e-15])
    c1_checks = [
        ("unit mass", abs(report.integral - 1.0) > 1e-8, None),
        ("negative values", None, k_vals < 0),
        ("asymmetry", None, np.abs(k_vals - mirrored) > 1e-14),
        ("increase on (0, inf)", None, np.zeros_like(u, dtype=bool) if not k_pos.size
         else np.isin(u, u[positive][increasing])),
    ]
    for reason, scalar_fail, mask in c1_checks:
        if scalar_fail or (mask is not None and mask.any()):
            report.c1 = False
            report.reasons["C1"] = reason
            report.first_violation["C1"] = None if mask is None else _first_point(u, mask)
            break

    # C2
    if math.isinf(kernel.support_radius):
        small = np.flatnonzero((u >= 0) & (k_vals <= 1e-3 * float(kernel.eval(0.0))))
        proxy = float(u[small[0]]) if small.size else grid_spec.half_width
    else:
        proxy = kernel.support_radius
    threshold = 10.0 * (1.0 + proxy)
    probes = np.array(sorted({threshold, *[p for p in grid_spec.tail_probes if p >= threshold]}))
    probes = np.concatenate([probes, -probes])
    tail = np.square(probes) * np.asarray(kernel.eval(probes), dtype=float)
    if np.any(tail >= 1e-6):
        report.c2 = False
        report.reasons["C2"] = f"u²K(u) >= 1e-6 beyond u = {threshold:g}"
        report.first_violation["C2"] = _first_point(probes, tail >= 1e-6)

    # C3
    c3_failures = []
    steps = np.diff(k_vals)
    slopes = steps / spacing
    slope_jumps = np.abs(np.diff(slopes))
    kink_mask = np.concatenate([[False], slope_jumps > grid_spec.kink_tolerance, [False]])
    if kink_mask.any():
        c3_failures.append(("K or K' jumps", _first_point(u, kink_mask)))
    if kernel.deriv_sup_norm is None:
        c3_failures.append(("derivative unbounded", _first_point(u, kink_mask)))
    else:
        bound = kernel.deriv_sup_norm
        d_vals = np.asarray(kernel.deriv(u), dtype=float)
        over = np.abs(d_vals) > bound * (1.0 + 1e-12)
        if over.any():
            c3_failures.append(("|K'| exceeds declared bound", _first_point(u, over)))
        lipschitz = np.concatenate([np.abs(steps) > bound * spacing * (1.0 + 1e-9) + 1e-15, [False]])
        if lipschitz.any():
            c3_failures.append(("K moves faster than ‖K'‖∞ allows", _first_point(u, lipschitz)))
        h = grid_spec.fd_step
        away = np.ones_like(u, dtype=bool)
        for bp in kernel.breakpoints:
            away &= np.abs(u - bp) > 10.0 * h
        central = (np.asarray(kernel.eval(u + h)) - np.asarray(kernel.eval(u - h))) / (2.0 * h)
        disagree = away & (np.abs(central - d_vals) > grid_spec.fd_tolerance)
        if disagree.any():
            c3_failures.append(("declared K' disagrees with finite differences",
                                _first_point(u, disagree)))
    if c3_failures:
        report.c3 = False
        located = [point for _, point in c3_failures if point is not None]
        report.first_violation["C3"] = min(located) if located else None
        report.reasons["C3"] = "; ".join(reason for reason, _ in c3_failures)

    if report.as_tuple() == (True, True, True):
        logger.info(f"✅ Kernel {kernel.name!r} satisfies C1-C3 on the sampling grid")
    else:
        logger.info(f"⚠️ Kernel {kernel.name!r} condition C verdict {report.as_tuple()}: {report.reasons}")
    return report
