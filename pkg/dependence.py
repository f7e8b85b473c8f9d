"""
Dependence Coefficients
Exact H_k, η_k, ᾱ_k and α_k for the oracle chains, decay and summability
checkers, the Hoeffding covariance identity and Rio-type covariance bounds
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.optimize
import scipy.special

from chains import (
    Ar1Chain,
    FiniteReversibleChain,
    hermite_coefficients,
    joint_law,
)
from numerics import (
    DomainError,
    QuadratureResult,
    bivariate_normal_cdf,
    normal_cdf,
    quadrature_2d,
)

logger = logging.getLogger(__name__)

# AR(1) integrals over the plane are truncated to [-L, L]²; the dropped mass of
# |H_k| is at most 8·Φ̄(L) for any lag
TRUNCATION_HALF_WIDTH = 8.0
ALPHA_BAR_GRID_HALF_WIDTH = 5.0
ALPHA_BAR_GRID_POINTS = 400
BRUTE_FORCE_MAX_STATES = 6

PROVENANCE_EXACT = "exact"
PROVENANCE_EMPIRICAL = "empirical"


def gaussian_tail_bound(half_width: float = TRUNCATION_HALF_WIDTH) -> float:
    """Bound on ∫∫ |H_k| outside [-L, L]² for a standard normal marginal"""
    return 8.0 * float(normal_cdf(-half_width))


def _finite_survival_tables(chain: FiniteReversibleChain, lag: int):
    joint = joint_law(chain, lag)
    size = chain.n_states
    joint_survival = np.zeros((size + 1, size + 1))
    joint_survival[:size, :size] = joint[::-1, ::-1].cumsum(axis=0).cumsum(axis=1)[::-1, ::-1]
    marginal_survival = np.concatenate([np.cumsum(chain.stationary[::-1])[::-1], [0.0]])
    return joint_survival, marginal_survival


def finite_h_cells(chain: FiniteReversibleChain, lag: int) -> np.ndarray:
    """
    H_k on the (S-1)×(S-1) grid cells [x_a, x_{a+1}) × [x_b, x_{b+1})

    Outside [x_1, x_S)² the function vanishes.
    """
    joint_survival, marginal_survival = _finite_survival_tables(chain, lag)
    size = chain.n_states
    inner = slice(1, size)
    return joint_survival[inner, inner] - np.outer(marginal_survival[inner], marginal_survival[inner])


def h_k_function(chain, lag: int) -> Callable:
    """
    H_k(u, v) = P(X_0 > u, X_k > v) - P(X_0 > u)P(X_k > v) as a vectorised map

    Args:
        chain: Finite chain or AR(1)
        lag: Positive lag

    Returns:
        Callable H(u, v) broadcasting over array arguments
    """
    if lag < 1:
        raise DomainError(f"lag must be positive, got {lag}")
    if isinstance(chain, FiniteReversibleChain):
        joint_survival, marginal_survival = _finite_survival_tables(chain, lag)
        values = chain.values

        def finite_h(u, v):
            i = np.searchsorted(values, np.asarray(u, dtype=float), side="right")
            j = np.searchsorted(values, np.asarray(v, dtype=float), side="right")
            return joint_survival[i, j] - marginal_survival[i] * marginal_survival[j]

        return finite_h
    if isinstance(chain, Ar1Chain):
        r = chain.rho ** lag

        def gaussian_h(u, v):
            u = np.asarray(u, dtype=float)
            v = np.asarray(v, dtype=float)
            return bivariate_normal_cdf(-u, -v, r) - normal_cdf(-u) * normal_cdf(-v)

        return gaussian_h
    raise DomainError(f"no exact H_k for chain kind {type(chain).__name__}")


def eta_quadrature(chain, lag: int, tol: float = 1e-9) -> QuadratureResult:
    """
    η_k = ∫∫ |H_k| with its error estimate

    Finite chains sum exactly over grid cells; AR(1) integrates over
    [-8, 8]² and adds the tail bound to the error estimate.

    Raises:
        QuadratureError: cubature cap exceeded
    """
    if isinstance(chain, FiniteReversibleChain):
        if lag < 1:
            raise DomainError(f"lag must be positive, got {lag}")
        widths = np.diff(chain.values)
        cells = finite_h_cells(chain, lag)
        value = float(np.sum(np.abs(cells) * np.outer(widths, widths)))
        return QuadratureResult(value=value, abs_error_estimate=0.0, evaluations=cells.size)
    if isinstance(chain, Ar1Chain):
        h = h_k_function(chain, lag)
        if chain.rho == 0.0:
            return QuadratureResult(value=0.0, abs_error_estimate=0.0, evaluations=0)
        box = ((-TRUNCATION_HALF_WIDTH, TRUNCATION_HALF_WIDTH),
               (-TRUNCATION_HALF_WIDTH, TRUNCATION_HALF_WIDTH))
        inner = quadrature_2d(lambda u, v: np.abs(h(u, v)), box, tol=tol)
        return QuadratureResult(value=inner.value,
                                abs_error_estimate=inner.abs_error_estimate + gaussian_tail_bound(),
                                evaluations=inner.evaluations)
    raise DomainError(f"no exact η_k for chain kind {type(chain).__name__}")


def eta_coefficient(chain, lag: int) -> float:
    return eta_quadrature(chain, lag).value


def alpha_bar_coefficient(chain, lag: int) -> float:
    """
    ᾱ_k = 2 sup |H_k(x, y)|

    Finite chains take the exact maximum over grid cells; AR(1) searches a
    400×400 grid on [-5, 5]² and polishes the best point with Nelder-Mead.
    """
    if lag < 1:
        raise DomainError(f"lag must be positive, got {lag}")
    if isinstance(chain, FiniteReversibleChain):
        cells = finite_h_cells(chain, lag)
        return 2.0 * float(np.max(np.abs(cells))) if cells.size else 0.0
    if isinstance(chain, Ar1Chain):
        if chain.rho == 0.0:
            return 0.0
        h = h_k_function(chain, lag)
        axis = np.linspace(-ALPHA_BAR_GRID_HALF_WIDTH, ALPHA_BAR_GRID_HALF_WIDTH, ALPHA_BAR_GRID_POINTS)
        uu, vv = np.meshgrid(axis, axis, indexing="ij")
        surface = np.abs(h(uu, vv))
        best = np.unravel_index(np.argmax(surface), surface.shape)
        start = np.array([axis[best[0]], axis[best[1]]])
        polished = scipy.optimize.minimize(lambda p: -abs(float(h(p[0], p[1]))), start,
                                           method="Nelder-Mead",
                                           options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 2000})
        return 2.0 * max(float(surface[best]), -float(polished.fun))
    raise DomainError(f"no exact ᾱ_k for chain kind {type(chain).__name__}")


def alpha_coefficient_bruteforce(chain: FiniteReversibleChain, lag: int) -> float:
    """
    α_k = sup over state subsets A, B of |P(X_0∈A, X_k∈B) - π(A)π(B)|

    Enumerates all 2^S × 2^S subset pairs, so S is capped at 6.
    """
    if chain.n_states > BRUTE_FORCE_MAX_STATES:
        raise DomainError(f"brute-force α_k is limited to {BRUTE_FORCE_MAX_STATES} states")
    subsets = np.array(list(itertools.product((0.0, 1.0), repeat=chain.n_states)))
    joint = subsets @ joint_law(chain, lag) @ subsets.T
    marginal = subsets @ chain.stationary
    return float(np.max(np.abs(joint - np.outer(marginal, marginal))))


@dataclass
class HoeffdingCheck:
    """Both sides of cov(f(X_0), g(X_k)) = ∫∫ f'(u)g'(v)H_k(u, v) du dv"""
    lhs: float
    rhs: float

    @property
    def difference(self) -> float:
        return abs(self.lhs - self.rhs)


def _numerical_derivative(func: Callable, step: float = 1e-5) -> Callable:
    return lambda x: (func(x + step) - func(x - step)) / (2.0 * step)


def hoeffding_covariance_identity(f: Callable, g: Callable, chain, lag: int,
                                  f_prime: Optional[Callable] = None,
                                  g_prime: Optional[Callable] = None,
                                  tol: float = 1e-9) -> HoeffdingCheck:
    """
    Direct covariance against the H_k integral representation

    Finite chains: lhs from the joint law, rhs as the exact cell sum
    Σ H_ab Δf_a Δg_b. AR(1): lhs from the Hermite expansions of f and g,
    rhs by cubature of f'g'H_k over [-8, 8]².

    Args:
        f, g: Vectorised functions with bounded derivatives
        chain: Finite chain or AR(1)
        lag: Positive lag
        f_prime, g_prime: Derivatives (AR(1) only); central differences if omitted
        tol: Cubature tolerance

    Returns:
        HoeffdingCheck(lhs, rhs)
    """
    if lag < 1:
        raise DomainError(f"lag must be positive, got {lag}")
    if isinstance(chain, FiniteReversibleChain):
        f_vals = np.asarray(f(chain.values), dtype=float) * np.ones(chain.n_states)
        g_vals = np.asarray(g(chain.values), dtype=float) * np.ones(chain.n_states)
        joint = joint_law(chain, lag)
        lhs = float(f_vals @ joint @ g_vals - chain.expectation(f_vals) * chain.expectation(g_vals))
        rhs = float(np.diff(f_vals) @ finite_h_cells(chain, lag) @ np.diff(g_vals))
        return HoeffdingCheck(lhs=lhs, rhs=rhs)
    if isinstance(chain, Ar1Chain):
        r = chain.rho ** lag
        f_coef = hermite_coefficients(f)
        g_coef = hermite_coefficients(g)
        orders = np.arange(1, f_coef.size)
        lhs = float(np.sum(r ** orders * f_coef[1:] * g_coef[1:]))
        f_prime = f_prime or _numerical_derivative(f)
        g_prime = g_prime or _numerical_derivative(g)
        h = h_k_function(chain, lag)
        box = ((-TRUNCATION_HALF_WIDTH, TRUNCATION_HALF_WIDTH),
               (-TRUNCATION_HALF_WIDTH, TRUNCATION_HALF_WIDTH))
        rhs = quadrature_2d(lambda u, v: f_prime(u) * g_prime(v) * h(u, v), box, tol=tol).value
        return HoeffdingCheck(lhs=lhs, rhs=rhs)
    raise DomainError(f"no exact Hoeffding identity for chain kind {type(chain).__name__}")


@dataclass(frozen=True)
class SlowlyVaryingSpec:
    """A slowly varying function l used in the η decay condition"""
    name: str
    eval: Callable[[float], float]

    def __call__(self, x):
        return self.eval(x)


SLOWLY_VARYING_MENU: Dict[str, SlowlyVaryingSpec] = {
    "log": SlowlyVaryingSpec("log", lambda x: np.log(np.asarray(x, dtype=float) + math.e)),
    "iterated_log": SlowlyVaryingSpec(
        "iterated_log", lambda x: np.log(np.log(np.asarray(x, dtype=float) + math.exp(math.e)))
    ),
    "ramp": SlowlyVaryingSpec("ramp", lambda x: 1.0 + np.log1p(np.log1p(np.asarray(x, dtype=float)))),
}


def get_slowly_varying(name: str) -> SlowlyVaryingSpec:
    try:
        return SLOWLY_VARYING_MENU[name]
    except KeyError:
        raise DomainError(f"Unknown slowly varying function {name!r}; choose from {sorted(SLOWLY_VARYING_MENU)}") from None


def slowly_varying_ratios(spec: SlowlyVaryingSpec, xs: Sequence[float] = (1e3, 1e6, 1e9),
                          ks: Sequence[float] = (2.0, 10.0)) -> Dict[float, Dict[float, float]]:
    """l(kx)/l(x) on the sample grid, keyed by k then x"""
    return {k: {x: float(spec(k * x) / spec(x)) for x in xs} for k in ks}


def check_slowly_varying(spec: SlowlyVaryingSpec) -> bool:
    """
    Sampled slow-variation check

    Ratios l(kx)/l(x) must move toward 1 along x ∈ {1e3, 1e6, 1e9} and lie
    in [0.8, 1.25] from x = 1e6 on; l must increase on a log grid.
    """
    grid = np.logspace(0, 9, 200)
    if np.any(np.diff(spec(grid)) <= 0):
        return False
    for by_x in slowly_varying_ratios(spec).values():
        distances = [abs(ratio - 1.0) for ratio in by_x.values()]
        if any(later > earlier for earlier, later in zip(distances, distances[1:])):
            return False
        if any(not 0.8 <= ratio <= 1.25 for x, ratio in by_x.items() if x >= 1e6):
            return False
    return True


@dataclass
class DependenceProfile:
    """Per-lag dependence coefficients; alpha is NaN where not computed"""
    lags: np.ndarray
    eta: np.ndarray
    alpha_bar: np.ndarray
    alpha: np.ndarray
    provenance: List[str]
    warning: Optional[str] = None

    def __post_init__(self):
        self.lags = np.asarray(self.lags, dtype=int)
        self.eta = np.asarray(self.eta, dtype=float)
        self.alpha_bar = np.asarray(self.alpha_bar, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        if np.any(np.diff(self.lags) <= 0):
            raise DomainError("profile lags must be increasing")

    @property
    def has_alpha(self) -> bool:
        return bool(self.alpha.size) and not np.all(np.isnan(self.alpha))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"lag": self.lags, "eta": self.eta, "alpha_bar": self.alpha_bar,
                             "alpha": self.alpha, "provenance": self.provenance})


def dependence_profile(chain, lags: Sequence[int]) -> DependenceProfile:
    """
    Exact coefficients for every lag

    α_k is brute-forced for finite chains with at most six states and left
    NaN otherwise.
    """
    lags = [int(k) for k in lags]
    with_alpha = isinstance(chain, FiniteReversibleChain) and chain.n_states <= BRUTE_FORCE_MAX_STATES
    eta, alpha_bar, alpha = [], [], []
    for lag in lags:
        eta.append(eta_coefficient(chain, lag))
        alpha_bar.append(alpha_bar_coefficient(chain, lag))
        alpha.append(alpha_coefficient_bruteforce(chain, lag) if with_alpha else math.nan)
        logger.debug(f"🧮 lag {lag}: η={eta[-1]:.6g} ᾱ={alpha_bar[-1]:.6g} α={alpha[-1]:.6g}")
    logger.info(f"✅ Exact dependence profile over {len(lags)} lags for {chain.name!r}")
    return DependenceProfile(lags=lags, eta=eta, alpha_bar=alpha_bar, alpha=alpha,
                             provenance=[PROVENANCE_EXACT] * len(lags))


def empirical_dependence_profile(path: Sequence[float], lags: Sequence[int],
                                 grid: Optional[Sequence[float]] = None) -> DependenceProfile:
    """
    Plug-in η_k and ᾱ_k from one simulated path

    Joint and marginal survival functions are replaced by empirical
    frequencies on a rectangular grid. The plug-in bias is unquantified, so
    the profile carries a warning and never enters acceptance checks.

    Args:
        path: Observations
        lags: Increasing positive lags, each shorter than the path
        grid: Evaluation grid (default: 41 empirical quantiles)

    Returns:
        DependenceProfile with provenance "empirical"
    """
    x = np.asarray(path, dtype=float)
    if grid is None:
        grid = np.quantile(x, np.linspace(0.01, 0.99, 41))
    grid = np.unique(np.asarray(grid, dtype=float))
    if grid.size < 2:
        raise DomainError("empirical profile needs at least two distinct grid points")
    widths = np.diff(grid)
    cell_area = np.outer(widths, widths)
    eta, alpha_bar = [], []
    for lag in lags:
        if not 1 <= lag < x.size:
            raise DomainError(f"lag {lag} is outside [1, {x.size - 1}]")
        head = (x[:-lag, None] > grid[None, :]).astype(float)
        tail = (x[lag:, None] > grid[None, :]).astype(float)
        pairs = head.shape[0]
        h = head.T @ tail / pairs - np.outer(head.mean(axis=0), tail.mean(axis=0))
        eta.append(float(np.sum(np.abs(h[:-1, :-1]) * cell_area)))
        alpha_bar.append(2.0 * float(np.max(np.abs(h))))
    message = "empirical plug-in estimates; bias unquantified, diagnostic only"
    logger.warning(f"⚠️ {message}")
    return DependenceProfile(lags=list(lags), eta=eta, alpha_bar=alpha_bar,
                             alpha=[math.nan] * len(lags),
                             provenance=[PROVENANCE_EMPIRICAL] * len(lags), warning=message)


@dataclass
class DecayVerdict:
    """Pointwise check of η_k <= 1/(k⁴ l(k))"""
    passed: bool
    first_violation: Optional[int]
    passes_from_lag: Optional[int]
    bounds: np.ndarray
    pointwise: np.ndarray


def eta_decay_bound(lags, spec: SlowlyVaryingSpec) -> np.ndarray:
    k = np.asarray(lags, dtype=float)
    return 1.0 / (k ** 4 * spec(k))


def check_eta_decay_condition(profile: DependenceProfile, spec: SlowlyVaryingSpec) -> DecayVerdict:
    """
    η_k <= 1/(k⁴ l(k)) at every lag of the profile

    Returns the first violating lag and, for an "eventually" reading, the
    smallest lag from which every later checked lag passes.
    """
    if profile.lags.size == 0:
        raise DomainError("profile has no lags")
    bounds = eta_decay_bound(profile.lags, spec)
    pointwise = profile.eta <= bounds
    failures = np.flatnonzero(~pointwise)
    first = int(profile.lags[failures[0]]) if failures.size else None
    if not failures.size:
        passes_from = int(profile.lags[0])
    elif failures[-1] + 1 < profile.lags.size:
        passes_from = int(profile.lags[failures[-1] + 1])
    else:
        passes_from = None
    return DecayVerdict(passed=first is None, first_violation=first, passes_from_lag=passes_from,
                        bounds=bounds, pointwise=pointwise)


SUMMABLE = "summable"
NOT_SUMMABLE = "not summable"
INCONCLUSIVE = "inconclusive"


@dataclass
class SummabilityVerdict:
    """Partial sum Σ k α_k and the fitted-tail verdict"""
    verdict: str
    partial_sum: float
    model: Optional[str] = None
    geometric_rate: Optional[float] = None
    polynomial_exponent: Optional[float] = None
    residuals: Dict[str, float] = field(default_factory=dict)


def _fit(design: np.ndarray, target: np.ndarray):
    coefficients, residual, rank, _ = np.linalg.lstsq(
        np.column_stack([np.ones_like(design), design]), target, rcond=None
    )
    if rank < 2 or not np.all(np.isfinite(coefficients)):
        return None, math.inf
    fitted = coefficients[0] + coefficients[1] * design
    return coefficients, float(np.sum((target - fitted) ** 2))


def check_alpha_summability(profile: DependenceProfile, tail_model: str = "auto") -> SummabilityVerdict:
    """
    Σ k α_k over the profile plus an extrapolated tail verdict

    A geometric fit with rate < 1 is summable; a polynomial fit α_k ~ k^-p
    is summable only for p > 2. "auto" keeps the better-fitting model.

    Args:
        profile: Profile with α entries
        tail_model: "geometric" | "polynomial" | "auto"

    Returns:
        SummabilityVerdict; "inconclusive" when the fit is degenerate
    """
    if tail_model not in ("geometric", "polynomial", "auto"):
        raise DomainError(f"unknown tail model {tail_model!r}")
    if not profile.has_alpha:
        raise DomainError("profile carries no α_k entries")
    present = ~np.isnan(profile.alpha)
    lags = profile.lags[present].astype(float)
    alpha = profile.alpha[present]
    partial = float(np.sum(lags * alpha))
    if np.all(alpha <= 0.0):
        return SummabilityVerdict(verdict=SUMMABLE, partial_sum=partial, model="zero")

    positive = alpha > 0
    if positive.sum() < 3:
        return SummabilityVerdict(verdict=INCONCLUSIVE, partial_sum=partial)
    log_alpha = np.log(alpha[positive])
    k = lags[positive]
    fits = {}
    if tail_model in ("geometric", "auto"):
        fits["geometric"] = _fit(k, log_alpha)
    if tail_model in ("polynomial", "auto"):
        fits["polynomial"] = _fit(np.log(k), log_alpha)
    usable = {name: fit for name, fit in fits.items() if fit[0] is not None}
    if not usable:
        return SummabilityVerdict(verdict=INCONCLUSIVE, partial_sum=partial)

    model = min(usable, key=lambda name: usable[name][1])
    slope = float(usable[model][0][1])
    verdict = SummabilityVerdict(verdict=INCONCLUSIVE, partial_sum=partial, model=model,
                                 residuals={name: fit[1] for name, fit in usable.items()})
    if model == "geometric":
        verdict.geometric_rate = math.exp(slope)
        verdict.verdict = SUMMABLE if verdict.geometric_rate < 1.0 else NOT_SUMMABLE
    else:
        verdict.polynomial_exponent = -slope
        verdict.verdict = SUMMABLE if verdict.polynomial_exponent > 2.0 + 1e-9 else NOT_SUMMABLE
    return verdict


def marginal_moment_norm(chain, p: float) -> float:
    """‖X_0‖_p = (E|X_0|^p)^(1/p), exact for finite chains and AR(1)"""
    if p <= 0:
        raise DomainError(f"p must be positive, got {p}")
    if isinstance(chain, FiniteReversibleChain):
        return float(chain.expectation(np.abs(chain.values) ** p) ** (1.0 / p))
    if isinstance(chain, Ar1Chain):
        moment = 2.0 ** (p / 2.0) * scipy.special.gamma((p + 1.0) / 2.0) / math.sqrt(math.pi)
        return float(moment ** (1.0 / p))
    raise DomainError(f"no exact moments for chain kind {type(chain).__name__}")


def rio_moment_bound(alpha_bar: float, delta: float, moment_norm: float) -> float:
    """η_k <= 2 ᾱ_k^(δ/(2+δ)) ‖X_0‖²_(2+δ)"""
    if delta <= 0:
        raise DomainError(f"delta must be positive, got {delta}")
    return 2.0 * alpha_bar ** (delta / (2.0 + delta)) * moment_norm ** 2


def rio_bounded_bound(alpha_bar: float) -> float:
    """η_k <= 2 ᾱ_k when ‖X_0‖∞ <= 1"""
    return 2.0 * alpha_bar


def marginal_covariance(chain, lag: int) -> float:
    """cov(X_0, X_k) of the identity embedding"""
    if isinstance(chain, Ar1Chain):
        return float(chain.rho ** lag)
    if isinstance(chain, FiniteReversibleChain):
        centered = chain.values - chain.expectation(chain.values)
        return float(centered @ joint_law(chain, lag) @ centered)
    raise DomainError(f"no exact covariance for chain kind {type(chain).__name__}")


def lehmann_gap(chain, lag: int) -> float:
    """|η_k - cov(X_0, X_k)|, zero under positive dependence"""
    return abs(eta_coefficient(chain, lag) - marginal_covariance(chain, lag))

