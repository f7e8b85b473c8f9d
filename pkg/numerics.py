"""
Numerical Substrate
Normal and bivariate-normal distribution functions, adaptive quadrature,
the Kolmogorov-Smirnov distance and the seeded random stream contract
"""

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Tuple

import numpy as np
import scipy.integrate
import scipy.special
import scipy.stats
from numpy.polynomial.legendre import leggauss

from config import SETTINGS

logger = logging.getLogger(__name__)

Box = Tuple[Tuple[float, float], Tuple[float, float]]

UINT64_MAX = 2**64 - 1

# 20-point Gauss-Legendre rule on [-1, 1]; the negative half drives the
# near-degenerate branch of the bivariate normal computation
_GL_NODES, _GL_WEIGHTS = leggauss(20)
_GL_HALF_NODES = _GL_NODES[_GL_NODES < 0]
_GL_HALF_WEIGHTS = _GL_WEIGHTS[_GL_NODES < 0]

TWO_PI = 2.0 * np.pi


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation"""


@dataclass(frozen=True)
class QuadratureResult:
    """Outcome of a numerical integration"""
    value: float
    abs_error_estimate: float
    evaluations: int


class QuadratureError(RuntimeError):
    """Integration did not reach the requested tolerance within its cap"""

    def __init__(self, message: str, partial: QuadratureResult):
        super().__init__(f"{message} (value={partial.value:.6g}, "
                         f"achieved abs error={partial.abs_error_estimate:.3g}, "
                         f"evaluations={partial.evaluations})")
        self.partial = partial


@dataclass(frozen=True)
class RngStream:
    """
    Deterministic random stream identified by (root_seed, stream_id)

    Substreams come from numpy's SeedSequence spawn keys feeding PCG64, so
    every replicate index maps to its own independent generator no matter
    which worker runs it.
    """
    root_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.root_seed) <= UINT64_MAX:
            raise DomainError(f"root_seed must be an unsigned 64-bit integer, got {self.root_seed}")
        if int(self.stream_id) < 0:
            raise DomainError(f"stream_id must be nonnegative, got {self.stream_id}")

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(entropy=int(self.root_seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(sequence))

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.root_seed, stream_id)


def draw_stream(stream: RngStream, n: int) -> np.ndarray:
    """
    Draw n uniforms on [0, 1) from a stream; replays identically

    Args:
        stream: Stream identity
        n: Number of draws (n >= 0)

    Returns:
        Array of n uniforms
    """
    if n < 0:
        raise DomainError(f"n must be nonnegative, got {n}")
    return stream.generator().random(int(n))


def normal_cdf(x):
    """Standard normal CDF, accurate to machine precision over the real line"""
    return scipy.special.ndtr(x)


def normal_pdf(x):
    return np.exp(-0.5 * np.square(x)) / np.sqrt(TWO_PI)


def bivariate_normal_pdf(x, y, rho: float):
    """Density of the standard bivariate normal with correlation rho"""
    if abs(rho) >= 1:
        raise DomainError(f"|rho| must be < 1, got {rho}")
    one_minus = 1.0 - rho * rho
    quad_form = (np.square(x) - 2.0 * rho * np.multiply(x, y) + np.square(y)) / one_minus
    return np.exp(-0.5 * quad_form) / (TWO_PI * np.sqrt(one_minus))


def bivariate_normal_cdf(x, y, rho):
    """
    P(Z1 <= x, Z2 <= y) for a standard bivariate normal with correlation rho

    Vectorised form of Genz's BVNU algorithm: a Gauss-Legendre quadrature of
    the one-dimensional integral in arcsin(rho) for |rho| < 0.925 and the
    Drezner-Wesolowsky asymptotic expansion near |rho| = 1. Absolute error is
    below 1e-14 across the domain.

    Args:
        x: Upper limit(s) for the first coordinate
        y: Upper limit(s) for the second coordinate
        rho: Correlation(s), each strictly inside (-1, 1)

    Returns:
        Probability (array, or float for scalar input)
    """
    scalar_input = np.ndim(x) == 0 and np.ndim(y) == 0 and np.ndim(rho) == 0
    x_arr, y_arr, r_arr = np.broadcast_arrays(
        np.atleast_1d(np.asarray(x, dtype=float)),
        np.atleast_1d(np.asarray(y, dtype=float)),
        np.atleast_1d(np.asarray(rho, dtype=float)),
    )
    if np.any(np.abs(r_arr) >= 1.0):
        raise DomainError("bivariate_normal_cdf requires |rho| < 1")

    out = np.empty(x_arr.shape, dtype=float)
    finite = np.isfinite(x_arr) & np.isfinite(y_arr)

    lower_x = x_arr == -np.inf
    lower_y = y_arr == -np.inf
    out[lower_x | lower_y] = 0.0
    upper_x = (x_arr == np.inf) & ~lower_y
    upper_y = (y_arr == np.inf) & ~lower_x
    out[upper_x] = normal_cdf(y_arr[upper_x])
    out[upper_y] = normal_cdf(x_arr[upper_y])

    with np.errstate(all="ignore"):
        moderate = finite & (np.abs(r_arr) < 0.925)
        if np.any(moderate):
            out[moderate] = _bvn_moderate(-x_arr[moderate], -y_arr[moderate], r_arr[moderate])
        strong = finite & ~moderate
        if np.any(strong):
            out[strong] = _bvn_strong(-x_arr[strong], -y_arr[strong], r_arr[strong])

    if scalar_input:
        return float(out[0])
    return out


def _bvn_moderate(h: np.ndarray, k: np.ndarray, r: np.ndarray) -> np.ndarray:
    hk = (h * k)[:, None]
    hs = ((h * h + k * k) / 2.0)[:, None]
    asr = np.arcsin(r)
    sn = np.sin(asr[:, None] * (_GL_NODES[None, :] + 1.0) / 2.0)
    terms = _GL_WEIGHTS[None, :] * np.exp((sn * hk - hs) / (1.0 - sn * sn))
    return terms.sum(axis=1) * asr / (2.0 * TWO_PI) + normal_cdf(-h) * normal_cdf(-k)


def _bvn_strong(h: np.ndarray, k: np.ndarray, r: np.ndarray) -> np.ndarray:
    k = np.where(r < 0, -k, k)
    hk = h * k
    a_sq = (1.0 - r) * (1.0 + r)
    a = np.sqrt(a_sq)
    b_sq = (h - k) ** 2
    c = (4.0 - hk) / 8.0
    d = (12.0 - hk) / 16.0
    bvn = a * np.exp(-(b_sq / a_sq + hk) / 2.0) * (
        1.0 - c * (b_sq - a_sq) * (1.0 - d * b_sq / 5.0) / 3.0 + c * d * a_sq * a_sq / 5.0
    )
    b = np.sqrt(b_sq)
    correction = (
        np.exp(-hk / 2.0) * np.sqrt(TWO_PI) * normal_cdf(-b / a) * b
        * (1.0 - c * b_sq * (1.0 - d * b_sq / 5.0) / 3.0)
    )
    bvn = bvn - np.where(hk > -160.0, correction, 0.0)

    half_a = (a / 2.0)[:, None]
    nodes = _GL_HALF_NODES[None, :]
    weights = _GL_HALF_WEIGHTS[None, :]
    hk_c, b_sq_c, c_c, d_c = hk[:, None], b_sq[:, None], c[:, None], d[:, None]

    xs = (half_a * (nodes + 1.0)) ** 2
    rs = np.sqrt(1.0 - xs)
    first = half_a * weights * (
        np.exp(-b_sq_c / (2.0 * xs) - hk_c / (1.0 + rs)) / rs
        - np.exp(-(b_sq_c / xs + hk_c) / 2.0) * (1.0 + c_c * xs * (1.0 + d_c * xs))
    )
    xs = a_sq[:, None] * (1.0 - nodes) ** 2 / 4.0
    rs = np.sqrt(1.0 - xs)
    second = half_a * weights * np.exp(-(b_sq_c / xs + hk_c) / 2.0) * (
        np.exp(-hk_c * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs - (1.0 + c_c * xs * (1.0 + d_c * xs))
    )
    bvn = -(bvn + first.sum(axis=1) + second.sum(axis=1)) / TWO_PI

    positive = bvn + normal_cdf(-np.maximum(h, k))
    negative = -bvn + np.maximum(0.0, normal_cdf(-h) - normal_cdf(-k))
    return np.where(r > 0, positive, negative)


def quadrature_1d(f: Callable[[float], float], a: float, b: float,
                  epsabs: Optional[float] = None, epsrel: Optional[float] = None,
                  limit: Optional[int] = None,
                  points: Optional[Iterable[float]] = None) -> QuadratureResult:
    """
    Adaptive Gauss-Kronrod integration of a scalar function on [a, b]

    Args:
        f: Integrand
        a, b: Finite integration limits
        epsabs: Absolute tolerance (default from settings)
        epsrel: Relative tolerance (default from settings)
        limit: Cap on adaptive subintervals (default from settings)
        points: Known breakpoints inside (a, b)

    Returns:
        QuadratureResult

    Raises:
        QuadratureError: the tolerance was not met within the interval cap
    """
    epsabs = SETTINGS.quad_epsabs if epsabs is None else epsabs
    epsrel = SETTINGS.quad_epsrel if epsrel is None else epsrel
    limit = SETTINGS.quad_limit if limit is None else limit
    inner_points = None
    if points is not None:
        inner_points = sorted({float(p) for p in points if a < p < b}) or None

    outcome = scipy.integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit,
                                   points=inner_points, full_output=1)
    value, abserr, info = outcome[0], outcome[1], outcome[2]
    result = QuadratureResult(value=float(value), abs_error_estimate=float(abserr),
                              evaluations=int(info["neval"]))
    if len(outcome) > 3 and abserr > max(epsabs, epsrel * abs(value)):
        raise QuadratureError(f"1-D quadrature on [{a}, {b}] did not converge: {outcome[3]}", result)
    return result


def quadrature_2d(f: Callable[[np.ndarray, np.ndarray], np.ndarray], box: Box,
                  tol: float = 1e-10, rtol: float = 0.0,
                  max_subdivisions: Optional[int] = None) -> QuadratureResult:
    """
    Adaptive cubature of f(u, v) over a rectangle

    f must be vectorised: it receives two equal-length arrays and returns an
    array of values. The product Gauss-Kronrod 21-point rule integrates
    polynomials of degree <= 3 exactly, so those converge on the first pass.

    Args:
        f: Vectorised integrand
        box: ((u_low, u_high), (v_low, v_high))
        tol: Absolute tolerance
        rtol: Relative tolerance
        max_subdivisions: Region-splitting cap (default from settings)

    Returns:
        QuadratureResult

    Raises:
        QuadratureError: the cap was reached first; carries the partial result
    """
    (u_low, u_high), (v_low, v_high) = box
    cap = SETTINGS.cubature_max_subdivisions if max_subdivisions is None else max_subdivisions
    evaluations = 0

    def integrand(x: np.ndarray) -> np.ndarray:
        nonlocal evaluations
        evaluations += x.shape[0]
        return np.asarray(f(x[:, 0], x[:, 1]), dtype=float)

    outcome = scipy.integrate.cubature(integrand, [u_low, v_low], [u_high, v_high],
                                       rule="gk21", atol=tol, rtol=rtol, max_subdivisions=cap)
    result = QuadratureResult(value=float(outcome.estimate),
                              abs_error_estimate=float(abs(outcome.error)),
                              evaluations=evaluations)
    if outcome.status != "converged":
        raise QuadratureError(f"2-D cubature over {box} exceeded {cap} subdivisions", result)
    logger.debug(f"📐 cubature over {box}: {result.value:.12g} ± {result.abs_error_estimate:.2g} "
                 f"({evaluations} evaluations)")
    return result


def ks_statistic(sample: Sequence[float], cdf: Callable = normal_cdf) -> float:
    """
    Kolmogorov-Smirnov distance between a sample's empirical CDF and cdf

    Args:
        sample: Sorted (ascending) observations
        cdf: Continuous reference CDF, vectorised

    Returns:
        sup |F_n - F|, exact for a step function against a continuous CDF
    """
    values = np.asarray(sample, dtype=float)
    if values.size == 0:
        raise DomainError("ks_statistic needs a nonempty sample")
    if np.any(np.diff(values) < 0):
        raise DomainError("ks_statistic expects a sample sorted ascending")
    return float(scipy.stats.kstest(values, cdf).statistic)
