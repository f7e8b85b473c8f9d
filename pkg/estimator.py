"""
Rosenblatt Kernel Density Estimator
Point evaluation along a chain path, the exact expectation oracle, the
second-order bias term, the self-normalised statistic, bandwidth regime
algebra and the covariance bounds used by the asymptotic argument
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from kernels import Kernel, kernel_l2_norm
from numerics import DomainError, quadrature_1d

logger = logging.getLogger(__name__)

# Elements per K((x - X)/b) block; summation order is fixed by these blocks
PATH_CHUNK = 1 << 20

VIOLATION_THEOREM = "nb_n^4 -> infinity"
VIOLATION_COROLLARY = "nb_n^5 -> 0"
VIOLATION_SHRINK = "b_n -> 0"


class BandwidthRegimeError(ValueError):
    """Bandwidth schedule violates an asymptotic hypothesis"""

    def __init__(self, violations: List[str], beta: float):
        super().__init__(f"bandwidth exponent beta={beta} violates: {', '.join(violations)}")
        self.violations = violations


class RegimeMode(Enum):
    """Which asymptotic statement the schedule must serve"""
    THEOREM1 = "theorem1"
    COROLLARY = "corollary"


class CenteringMode(Enum):
    """What the statistic subtracts from f̂_n(x_j)"""
    EXACT_EXPECTATION = "exact_expectation"
    TRUE_DENSITY = "true_density"
    ZERO = "zero"


@dataclass(frozen=True)
class BandwidthSchedule:
    """b_n = c·n^(-beta)"""
    c: float
    beta: float

    def __post_init__(self):
        if self.c <= 0:
            raise DomainError(f"bandwidth constant c must be positive, got {self.c}")

    def bandwidth(self, n: int) -> float:
        if n < 1:
            raise DomainError(f"sample size must be positive, got {n}")
        return self.c * float(n) ** (-self.beta)


@dataclass
class RegimeVerdict:
    """Exponent algebra for n·b_n^4, n·b_n^5 and b_n"""
    passed: bool
    mode: RegimeMode
    violations: List[str]
    exponents: Dict[str, str]


def bandwidth_regime_check(schedule: BandwidthSchedule, mode=RegimeMode.THEOREM1) -> RegimeVerdict:
    """
    Decide the bandwidth hypotheses from the exponent alone

    With b_n = c·n^-β: b_n → 0 iff β > 0, n·b_n^4 → ∞ iff β < 1/4 and
    n·b_n^5 → 0 iff β > 1/5. β is converted exactly from its decimal
    representation, so the boundaries 1/4 and 1/5 are rejected.

    Args:
        schedule: Bandwidth schedule
        mode: RegimeMode or its string value

    Returns:
        RegimeVerdict listing the violated hypotheses
    """
    mode = RegimeMode(mode)
    beta = Fraction(repr(float(schedule.beta)))
    violations = []
    if beta <= 0:
        violations.append(VIOLATION_SHRINK)
    if 1 - 4 * beta <= 0:
        violations.append(VIOLATION_THEOREM)
    if mode is RegimeMode.COROLLARY and 1 - 5 * beta >= 0:
        violations.append(VIOLATION_COROLLARY)
    exponents = {"b_n": str(-beta), "n*b_n^4": str(1 - 4 * beta), "n*b_n^5": str(1 - 5 * beta)}
    return RegimeVerdict(passed=not violations, mode=mode, violations=violations, exponents=exponents)


def require_bandwidth_regime(schedule: BandwidthSchedule, mode=RegimeMode.THEOREM1) -> RegimeVerdict:
    verdict = bandwidth_regime_check(schedule, mode)
    if not verdict.passed:
        logger.error(f"❌ Bandwidth regime {verdict.mode.value} rejected: {verdict.violations}")
        raise BandwidthRegimeError(verdict.violations, schedule.beta)
    return verdict


@dataclass
class DensityEstimate:
    """f̂_n at a vector of points"""
    points: np.ndarray
    values: np.ndarray
    n: int
    bandwidth: float
    kernel: str


def kde_evaluate(path: Sequence[float], kernel: Kernel, bandwidth: float,
                 points: Sequence[float]) -> DensityEstimate:
    """
    f̂_n(x) = (1/(n·b)) Σ_k K((x - X_k)/b) at every point

    Each point's sum runs over fixed-size path blocks with numpy's pairwise
    reduction inside a block, so the result does not depend on how many
    points are evaluated together.

    Args:
        path: Observations X_1..X_n
        kernel: Smoothing kernel
        bandwidth: b > 0
        points: Evaluation points

    Returns:
        DensityEstimate
    """
    x = np.asarray(path, dtype=float)
    if x.size == 0:
        raise DomainError("kde_evaluate needs a nonempty path")
    if bandwidth <= 0:
        raise DomainError(f"bandwidth must be positive, got {bandwidth}")
    grid = np.atleast_1d(np.asarray(points, dtype=float))
    values = np.empty(grid.size)
    for j, point in enumerate(grid):
        total = 0.0
        for start in range(0, x.size, PATH_CHUNK):
            block = x[start:start + PATH_CHUNK]
            total += float(np.sum(kernel.eval((point - block) / bandwidth)))
        values[j] = total / (x.size * bandwidth)
    return DensityEstimate(points=grid, values=values, n=int(x.size), bandwidth=float(bandwidth),
                           kernel=kernel.name)


def _shifted_breakpoints(kernel: Kernel, bandwidth: float, point: float,
                         density_breakpoints: Sequence[float]):
    return tuple(kernel.breakpoints) + (0.0,) + tuple((bp - point) / bandwidth for bp in density_breakpoints)


def kernel_moment_integral(density: Callable, kernel: Kernel, bandwidth: float, point: float,
                           power: int = 1, density_breakpoints: Sequence[float] = ()) -> float:
    """∫ K^power(u) f(x + b·u) du over the kernel's support"""
    radius = kernel.integration_radius
    return quadrature_1d(
        lambda u: float(kernel.eval(u)) ** power * float(density(point + bandwidth * u)),
        -radius, radius, points=_shifted_breakpoints(kernel, bandwidth, point, density_breakpoints),
    ).value


def expected_kde(density: Callable, kernel: Kernel, bandwidth: float, point: float,
                 density_breakpoints: Sequence[float] = ()) -> float:
    """
    E f̂_n(x) = ∫ K(u) f(x + b·u) du, independent of n

    Args:
        density: Marginal density f in closed form
        kernel: Smoothing kernel
        bandwidth: b > 0
        point: x
        density_breakpoints: Points where f is not smooth

    Returns:
        Exact expectation up to quadrature tolerance

    Raises:
        QuadratureError: quadrature did not converge
    """
    if bandwidth <= 0:
        raise DomainError(f"bandwidth must be positive, got {bandwidth}")
    return kernel_moment_integral(density, kernel, bandwidth, point, 1, density_breakpoints)


def bias_second_order(f_second_derivative: float, bandwidth: float) -> float:
    return 0.5 * bandwidth * bandwidth * f_second_derivative


@dataclass
class StudentizedStat:
    """Self-normalised statistic per point; NaN where f̂_n(x_j) = 0"""
    values: np.ndarray
    valid: np.ndarray
    centering_mode: CenteringMode
    reasons: Dict[int, str] = field(default_factory=dict)


def studentized_statistic(estimate: DensityEstimate, centering: Sequence[float], kernel: Kernel,
                          centering_mode=CenteringMode.EXACT_EXPECTATION) -> StudentizedStat:
    """
    √(n·b)(f̂_n(x_j) - centering_j) / (f̂_n(x_j) ∫K²)^½

    Coordinates with f̂_n(x_j) = 0 are flagged invalid instead of raising.
    """
    centering = np.asarray(centering, dtype=float)
    if centering.shape != estimate.values.shape:
        raise DomainError("centering must have one entry per evaluation point")
    l2 = kernel_l2_norm(kernel)
    valid = estimate.values > 0
    values = np.full(estimate.values.shape, np.nan)
    scale = math.sqrt(estimate.n * estimate.bandwidth)
    values[valid] = scale * (estimate.values[valid] - centering[valid]) / np.sqrt(estimate.values[valid] * l2)
    reasons = {int(j): "density estimate is zero" for j in np.flatnonzero(~valid)}
    return StudentizedStat(values=values, valid=valid, centering_mode=CenteringMode(centering_mode),
                           reasons=reasons)


def bochner_variance(density: Callable, kernel: Kernel, bandwidth: float, point: float,
                     density_breakpoints: Sequence[float] = ()) -> float:
    """
    var(K((x - X_0)/b))/b, which tends to f(x)∫K² as b → 0

    Equals ∫K²(u)f(x+bu)du - b(∫K(u)f(x+bu)du)².
    """
    second = kernel_moment_integral(density, kernel, bandwidth, point, 2, density_breakpoints)
    first = kernel_moment_integral(density, kernel, bandwidth, point, 1, density_breakpoints)
    return second - bandwidth * first * first


def local_constant(kernel: Kernel, bandwidth: float, m: float, c_m: float) -> float:
    """C(x_j, x_p) = C_M + 2‖K‖∞K(M/b)/b² + K²(M/b)/b²"""
    k_tail = float(kernel.eval(m / bandwidth))
    return c_m + (2.0 * kernel.sup_norm * k_tail + k_tail * k_tail) / bandwidth ** 2


@dataclass
class CovarianceBounds:
    """Two bounds on (1/b)|cov(K((x_j - X_0)/b), K((x_p - X_k)/b))| and their minimum"""
    local_density: float
    newman: float

    @property
    def combined(self) -> float:
        return min(self.local_density, self.newman)


def kernel_covariance_bounds(kernel: Kernel, bandwidth: float, eta_k: float,
                             c_local: float) -> CovarianceBounds:
    """
    b·C from the local joint-density bound and ‖K'‖²∞ η_k / b³ from the
    Hoeffding representation

    Raises:
        DomainError: kernel derivative is unbounded
    """
    if kernel.deriv_sup_norm is None:
        raise DomainError(f"kernel {kernel.name!r} has no bounded derivative")
    return CovarianceBounds(local_density=bandwidth * c_local,
                            newman=kernel.deriv_sup_norm ** 2 * eta_k / bandwidth ** 3)


def kernel_alpha_covariance_bound(kernel: Kernel, bandwidth: float, alpha_k: float) -> float:
    """(4/b)‖K‖²∞ α_k, the mixing-coefficient route"""
    return 4.0 * kernel.sup_norm ** 2 * alpha_k / bandwidth


def centering_vector(mode, density: Optional[Callable], kernel: Kernel, bandwidth: float,
                     points: Sequence[float]) -> np.ndarray:
    """Centering per point for the given mode"""
    mode = CenteringMode(mode)
    points = np.atleast_1d(np.asarray(points, dtype=float))
    if mode is CenteringMode.ZERO:
        return np.zeros(points.size)
    if density is None:
        raise DomainError(f"centering mode {mode.value} needs a marginal density")
    if mode is CenteringMode.TRUE_DENSITY:
        return np.asarray([float(density(x)) for x in points])
    return np.asarray([expected_kde(density, kernel, bandwidth, float(x)) for x in points])


@dataclass
class BiasSweep:
    """Exact bias against its second-order term over decreasing bandwidths"""
    bandwidths: np.ndarray
    expected: np.ndarray
    bias: np.ndarray
    oracle: np.ndarray
    loglog_slope: float

    @property
    def ratio(self) -> np.ndarray:
        return self.bias / self.oracle

    def ratio_monotone(self) -> bool:
        distance = np.abs(self.ratio - 1.0)
        return bool(np.all(np.diff(distance) <= 0))


def bias_sweep(density: Callable, f_second_derivative: float, kernel: Kernel, point: float,
               bandwidths: Sequence[float], density_breakpoints: Sequence[float] = ()) -> BiasSweep:
    """
    E f̂_n(x) - f(x) by quadrature for each bandwidth, with the fitted
    log-log slope of |bias| against b

    Args:
        density: Marginal density
        f_second_derivative: f''(x)
        kernel: Smoothing kernel
        point: x
        bandwidths: Decreasing bandwidths

    Returns:
        BiasSweep
    """
    b = np.asarray(bandwidths, dtype=float)
    if b.size < 2 or np.any(b <= 0):
        raise DomainError("bias sweep needs at least two positive bandwidths")
    expected = np.array([expected_kde(density, kernel, float(h), point, density_breakpoints) for h in b])
    bias = expected - float(density(point))
    oracle = np.array([bias_second_order(f_second_derivative, float(h)) for h in b])
    slope = float(np.polyfit(np.log(b), np.log(np.abs(bias)), 1)[0])
    logger.info(f"📐 Bias sweep at x={point}: log-log slope {slope:.4f}")
    return BiasSweep(bandwidths=b, expected=expected, bias=bias, oracle=oracle, loglog_slope=slope)


def numerical_second_derivative(func: Callable, x: float, step: float = 1e-4) -> float:
    return float((func(x + step) - 2.0 * func(x) + func(x - step)) / (step * step))
