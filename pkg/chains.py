"""
Reversible Markov Chain Oracles
Construction, spectral analysis, exact covariances, conditional expectations
and stationary simulation of finite reversible chains, the Gaussian AR(1)
chain and a random-walk Metropolis chain
"""

import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.signal
from numpy.polynomial.hermite_e import hermegauss

from numerics import (
    DomainError,
    RngStream,
    bivariate_normal_pdf,
    normal_cdf,
    normal_pdf,
)

logger = logging.getLogger(__name__)

REVERSIBILITY_TOLERANCE = 1e-9
ROW_SUM_TOLERANCE = 1e-12
CENTERING_TOLERANCE = 1e-10
EIGENVALUE_CLIP_TOLERANCE = 1e-10


class NotReversibleError(ValueError):
    """Detailed balance fails beyond tolerance"""

    def __init__(self, max_violation: float):
        super().__init__(f"chain is not reversible: max |π_i P_ij - π_j P_ji| = {max_violation:.3e}")
        self.max_violation = max_violation


class ReducibleChainError(ValueError):
    """Stationary law is not unique or not strictly positive"""


class InvalidTransitionError(ValueError):
    """Transition matrix is not a valid stochastic matrix for the given states"""


class NotCenteredError(ValueError):
    """Function is not centered under the stationary law"""

    def __init__(self, mean: float):
        super().__init__(f"function is not centered: stationary mean = {mean:.3e}")
        self.mean = mean


class EigensolverError(RuntimeError):
    """Symmetric eigendecomposition failed"""


class TargetSupportError(ValueError):
    """Metropolis target has zero density at the starting state"""


@dataclass(frozen=True, eq=False)
class FiniteReversibleChain:
    """Finite-state reversible chain embedded at increasing real values"""
    values: np.ndarray
    transition: np.ndarray
    stationary: np.ndarray
    name: str = "finite"

    @property
    def n_states(self) -> int:
        return int(self.values.size)

    def expectation(self, g_values: np.ndarray) -> float:
        return float(self.stationary @ g_values)

    def survival(self, u):
        """P(X_0 > u)"""
        u = np.asarray(u, dtype=float)
        tail = np.concatenate([np.cumsum(self.stationary[::-1])[::-1], [0.0]])
        return tail[np.searchsorted(self.values, u, side="right")]


@dataclass(frozen=True)
class Ar1Chain:
    """X_{k+1} = ρX_k + √(1-ρ²)ε_{k+1}, standard normal marginal"""
    rho: float
    name: str = "ar1"

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise DomainError(f"AR(1) needs |rho| < 1, got {self.rho}")

    @property
    def innovation_sd(self) -> float:
        return math.sqrt(1.0 - self.rho * self.rho)

    def marginal_density(self, x):
        return normal_pdf(x)

    def marginal_cdf(self, x):
        return normal_cdf(x)

    def survival(self, u):
        return normal_cdf(-np.asarray(u, dtype=float))

    def density_second_derivative(self, x):
        x = np.asarray(x, dtype=float)
        return (np.square(x) - 1.0) * normal_pdf(x)


def _std_normal_log_density(x: float) -> float:
    return -0.5 * x * x


# name -> (unnormalised log density, mode, normalised density)
METROPOLIS_TARGETS: Dict[str, Tuple[Callable[[float], float], float, Callable]] = {
    "std_normal": (_std_normal_log_density, 0.0, normal_pdf),
}


@dataclass(frozen=True)
class MetropolisChain:
    """
    Random-walk Metropolis chain, reversible with respect to its target

    Stationarity is approximate: the path starts at initial_state and is
    kept after burn_in steps.
    """
    log_density: Callable[[float], float]
    proposal_sd: float
    burn_in: int = 10_000
    initial_state: float = 0.0
    target_name: str = "custom"
    density: Optional[Callable] = None
    name: str = "metropolis"

    def __post_init__(self):
        if self.proposal_sd <= 0:
            raise DomainError(f"proposal_sd must be positive, got {self.proposal_sd}")
        if self.burn_in < 0:
            raise DomainError(f"burn_in must be nonnegative, got {self.burn_in}")

    def marginal_density(self, x):
        if self.density is None:
            raise DomainError(f"target {self.target_name!r} has no normalised density")
        return self.density(x)


ChainSpec = Union[FiniteReversibleChain, Ar1Chain, MetropolisChain]


def metropolis_chain(target: str = "std_normal", proposal_sd: float = 2.4,
                     burn_in: int = 10_000, initial_state: Optional[float] = None) -> MetropolisChain:
    """Metropolis chain for a named target, started at the target's mode"""
    try:
        log_density, mode, density = METROPOLIS_TARGETS[target]
    except KeyError:
        raise DomainError(f"Unknown Metropolis target {target!r}; known: {sorted(METROPOLIS_TARGETS)}") from None
    return MetropolisChain(
        log_density=log_density,
        proposal_sd=float(proposal_sd),
        burn_in=int(burn_in),
        initial_state=mode if initial_state is None else float(initial_state),
        target_name=target,
        density=density,
    )


def build_finite_chain(values: Sequence[float], transition: Sequence[Sequence[float]],
                       stationary: Optional[Sequence[float]] = None,
                       tolerance: float = REVERSIBILITY_TOLERANCE,
                       name: str = "finite") -> FiniteReversibleChain:
    """
    Validate a finite chain and compute its stationary law

    Args:
        values: Strictly increasing state embedding
        transition: Row-stochastic S×S matrix
        stationary: Known stationary law; when given it is checked instead of
            computed, which admits reducible chains such as P = I
        tolerance: Largest accepted detailed-balance violation
        name: Identifier carried into reports

    Returns:
        FiniteReversibleChain

    Raises:
        InvalidTransitionError: shape, sign, row-sum or stationarity problems
        ReducibleChainError: stationary law not unique or not positive
        NotReversibleError: detailed balance violated beyond tolerance
    """
    values_arr = np.asarray(values, dtype=float)
    p = np.asarray(transition, dtype=float)
    size = values_arr.size
    if values_arr.ndim != 1 or size < 1:
        raise DomainError("values must be a nonempty vector")
    if np.any(np.diff(values_arr) <= 0):
        raise DomainError("state values must be strictly increasing")
    if p.shape != (size, size):
        raise InvalidTransitionError(f"transition must be {size}x{size}, got {p.shape}")
    if np.any(p < 0):
        raise InvalidTransitionError("transition has negative entries")
    row_error = np.max(np.abs(p.sum(axis=1) - 1.0))
    if row_error > ROW_SUM_TOLERANCE:
        raise InvalidTransitionError(f"transition rows must sum to 1 (max deviation {row_error:.3e})")

    if stationary is None:
        kernel = scipy.linalg.null_space(p.T - np.eye(size), rcond=1e-12)
        if kernel.shape[1] != 1:
            raise ReducibleChainError(
                f"stationary law is not unique (invariant subspace of dimension {kernel.shape[1]})"
            )
        pi = kernel[:, 0] / kernel[:, 0].sum()
    else:
        pi = np.asarray(stationary, dtype=float)
        if pi.shape != (size,):
            raise InvalidTransitionError(f"stationary law must have {size} entries")
        pi = pi / pi.sum()
        drift = np.max(np.abs(pi @ p - pi))
        if drift > ROW_SUM_TOLERANCE:
            raise InvalidTransitionError(f"supplied law is not stationary (max |πP - π| = {drift:.3e})")
    if np.any(pi <= 0):
        raise ReducibleChainError("stationary law has non-positive entries (transient states)")

    flow = pi[:, None] * p
    violation = float(np.max(np.abs(flow - flow.T)))
    if violation > tolerance:
        logger.info(f"❌ Chain {name!r} rejected: detailed balance off by {violation:.3e}")
        raise NotReversibleError(violation)

    logger.debug(f"✅ Built {size}-state reversible chain {name!r} (balance error {violation:.1e})")
    return FiniteReversibleChain(values=values_arr, transition=p, stationary=pi, name=name)


def independent_finite_chain(values: Sequence[float], probabilities: Sequence[float],
                             name: str = "independent") -> FiniteReversibleChain:
    """I.i.d. sampling as a chain: every row of P equals the marginal law"""
    pi = np.asarray(probabilities, dtype=float)
    pi = pi / pi.sum()
    return build_finite_chain(values, np.tile(pi, (pi.size, 1)), stationary=pi, name=name)


def two_state_chain(p: float, q: float, values: Sequence[float] = (-1.0, 1.0),
                    name: Optional[str] = None) -> FiniteReversibleChain:
    """Two-state chain with P(0→1) = p, P(1→0) = q; second eigenvalue 1 - p - q"""
    transition = [[1.0 - p, p], [q, 1.0 - q]]
    return build_finite_chain(values, transition, name=name or f"two_state(p={p},q={q})")


def random_reversible_chain(n_states: int, stream: RngStream) -> FiniteReversibleChain:
    """
    Draw a reversible chain from symmetric positive weights

    P_ij = W_ij / Σ_j W_ij is reversible with π_i ∝ Σ_j W_ij for any symmetric W.

    Args:
        n_states: Between 2 and 50
        stream: Random stream; the draw is a function of it alone

    Returns:
        FiniteReversibleChain with values increasing in [-3, 3]
    """
    if not 2 <= n_states <= 50:
        raise DomainError(f"n_states must be in [2, 50], got {n_states}")
    rng = stream.generator()
    weights = rng.uniform(0.05, 1.0, size=(n_states, n_states))
    weights = 0.5 * (weights + weights.T)
    row_mass = weights.sum(axis=1)
    transition = weights / row_mass[:, None]
    values = np.sort(rng.uniform(-3.0, 3.0, size=n_states))
    while np.any(np.diff(values) <= 0):
        values = np.sort(rng.uniform(-3.0, 3.0, size=n_states))
    return build_finite_chain(values, transition, stationary=row_mass / row_mass.sum(),
                              name=f"random(S={n_states},seed={stream.root_seed},id={stream.stream_id})")


@dataclass
class SpectralDecomposition:
    """
    Eigen-structure of a reversible transition operator

    basis[:, i] is the π-orthonormal eigenfunction of eigenvalues[i];
    eigenvalues are sorted in decreasing order.
    """
    eigenvalues: np.ndarray
    basis: np.ndarray
    stationary: np.ndarray
    clipped: List[Tuple[int, float]] = field(default_factory=list)

    def coefficients(self, g_values: np.ndarray) -> np.ndarray:
        """c_i = ⟨g, φ_i⟩_π for every basis function"""
        return self.basis.T @ (self.stationary * g_values)

    def reconstruct(self) -> np.ndarray:
        """P rebuilt as Σ λ_i φ_i φ_i^T diag(π)"""
        return (self.basis * self.eigenvalues) @ self.basis.T @ np.diag(self.stationary)


@dataclass(frozen=True)
class SpectralMeasure:
    """Atoms λ_i with masses c_i² of the spectral measure of a centered function"""
    atoms: np.ndarray
    masses: np.ndarray

    def moment(self, power: int) -> float:
        """∫ s^power ν(ds), the covariance at lag = power"""
        if power == 0:
            return float(self.masses.sum())
        return float(np.sum(self.masses * self.atoms ** power))

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())


def spectral_decompose(chain: FiniteReversibleChain) -> SpectralDecomposition:
    """
    Diagonalise P through its symmetrisation D^½ P D^-½

    Args:
        chain: Valid finite chain

    Returns:
        SpectralDecomposition; eigenvalues outside [-1, 1] by more than 1e-10
        are clipped and listed in .clipped

    Raises:
        EigensolverError: LAPACK did not converge
    """
    sqrt_pi = np.sqrt(chain.stationary)
    symmetric = sqrt_pi[:, None] * chain.transition / sqrt_pi[None, :]
    symmetric = 0.5 * (symmetric + symmetric.T)
    try:
        eigenvalues, vectors = scipy.linalg.eigh(symmetric)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"eigendecomposition of {chain.name!r} failed: {exc}") from exc
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues, vectors = eigenvalues[order], vectors[:, order]

    outside = np.flatnonzero(np.abs(eigenvalues) > 1.0 + EIGENVALUE_CLIP_TOLERANCE)
    clipped = [(int(i), float(eigenvalues[i])) for i in outside]
    if clipped:
        logger.warning(f"⚠️ Clipping eigenvalues of {chain.name!r} into [-1, 1]: {clipped}")
    eigenvalues = np.clip(eigenvalues, -1.0, 1.0)
    return SpectralDecomposition(eigenvalues=eigenvalues, basis=vectors / sqrt_pi[:, None],
                                 stationary=chain.stationary, clipped=clipped)


def state_function(chain: FiniteReversibleChain, g) -> np.ndarray:
    """Values of g on the states; g is None (identity), a callable, or a vector"""
    if g is None:
        return chain.values.copy()
    if callable(g):
        return np.asarray(g(chain.values), dtype=float).reshape(chain.n_states)
    g_values = np.asarray(g, dtype=float)
    if g_values.shape != (chain.n_states,):
        raise DomainError(f"g must have {chain.n_states} entries, got shape {g_values.shape}")
    return g_values


def _require_centered(mean: float, scale: float = 1.0) -> None:
    if abs(mean) > CENTERING_TOLERANCE * max(1.0, scale):
        raise NotCenteredError(mean)


def hermite_coefficients(g: Callable, n_terms: int = 40, n_nodes: int = 150) -> np.ndarray:
    """
    Normalised Hermite coefficients E[g(Z) He_m(Z)] / √(m!) for m = 0..n_terms

    Under the AR(1) chain, cov(g(X_0), g(X_k)) = Σ_{m≥1} ρ^{mk} c_m².
    """
    nodes, weights = hermegauss(n_nodes)
    weights = weights / math.sqrt(2.0 * math.pi)
    g_nodes = np.asarray(g(nodes), dtype=float)
    coefficients = np.empty(n_terms + 1)
    previous, current = np.zeros_like(nodes), np.ones_like(nodes)
    for m in range(n_terms + 1):
        coefficients[m] = float(np.sum(weights * g_nodes * current))
        previous, current = current, (nodes * current - math.sqrt(m) * previous) / math.sqrt(m + 1)
    return coefficients


def spectral_measure(chain: Union[FiniteReversibleChain, Ar1Chain], g=None,
                     n_terms: int = 40) -> SpectralMeasure:
    """
    Spectral measure ν of a centered function g

    Finite chains give atoms at the eigenvalues with masses c_i²; the AR(1)
    chain gives atoms ρ^m with masses from the Hermite expansion of g.

    Raises:
        NotCenteredError: g has nonzero stationary mean
    """
    if isinstance(chain, FiniteReversibleChain):
        g_values = state_function(chain, g)
        _require_centered(chain.expectation(g_values), float(np.max(np.abs(g_values))))
        decomposition = spectral_decompose(chain)
        coefficients = decomposition.coefficients(g_values)
        return SpectralMeasure(atoms=decomposition.eigenvalues, masses=coefficients ** 2)
    if isinstance(chain, Ar1Chain):
        if g is None:
            return SpectralMeasure(atoms=np.array([chain.rho]), masses=np.array([1.0]))
        coefficients = hermite_coefficients(g, n_terms=n_terms)
        _require_centered(coefficients[0])
        orders = np.arange(1, n_terms + 1)
        return SpectralMeasure(atoms=chain.rho ** orders, masses=coefficients[1:] ** 2)
    raise DomainError(f"no exact spectral measure for chain kind {type(chain).__name__}")


def exact_lag_covariance(chain: Union[FiniteReversibleChain, Ar1Chain], g=None, lag: int = 0) -> float:
    """
    cov(g(X_0), g(X_lag)) from the spectral representation

    Args:
        chain: Finite chain or AR(1)
        g: Centered function (None means the identity)
        lag: Nonnegative lag

    Returns:
        Σ λ_i^lag c_i²; ρ^lag for the AR(1) identity

    Raises:
        NotCenteredError: g has nonzero stationary mean
    """
    if lag < 0:
        raise DomainError(f"lag must be nonnegative, got {lag}")
    if isinstance(chain, Ar1Chain) and g is None:
        return float(chain.rho ** lag)
    return spectral_measure(chain, g).moment(int(lag))


def direct_lag_covariance(chain: FiniteReversibleChain, g=None, lag: int = 0) -> float:
    """⟨g, P^lag g⟩_π by matrix power"""
    g_values = state_function(chain, g)
    _require_centered(chain.expectation(g_values), float(np.max(np.abs(g_values))))
    propagated = np.linalg.matrix_power(chain.transition, int(lag)) @ g_values
    return chain.expectation(g_values * propagated)


def conditional_expectation(chain: FiniteReversibleChain, g=None, steps: int = 1) -> np.ndarray:
    """
    E(g(X_steps) | X_0 = state) for every state, i.e. P^steps g

    Args:
        chain: Finite chain
        g: Function on states (None means the identity)
        steps: Number of transitions; 0 returns g

    Returns:
        Vector indexed like chain.values
    """
    if steps < 0:
        raise DomainError(f"steps must be nonnegative, got {steps}")
    return np.linalg.matrix_power(chain.transition, int(steps)) @ state_function(chain, g)


def joint_law(chain: FiniteReversibleChain, lag: int) -> np.ndarray:
    """Matrix of P(X_0 = x_a, X_lag = x_b), diag(π) P^lag"""
    return chain.stationary[:, None] * np.linalg.matrix_power(chain.transition, int(lag))


def lag2_joint_density(chain: Ar1Chain, x, y):
    """Density of (X_0, X_2): bivariate standard normal with correlation ρ²"""
    return bivariate_normal_pdf(x, y, chain.rho ** 2)


def local_joint_density_bound(chain: Ar1Chain, x_i: float, x_j: float, m: float) -> float:
    """
    sup over |a| <= M of the lag-2 joint density at (x_i + a, x_j + a)

    The quadratic form in a is convex with minimiser -(x_i + x_j)/2, so the
    maximum sits at that point clipped into [-M, M].
    """
    if m <= 0:
        raise DomainError(f"M must be positive, got {m}")
    a_star = float(np.clip(-(x_i + x_j) / 2.0, -m, m))
    return float(lag2_joint_density(chain, x_i + a_star, x_j + a_star))


def _simulate_finite(chain: FiniteReversibleChain, n: int, rng: np.random.Generator) -> np.ndarray:
    uniforms = rng.random(n)
    last = chain.n_states - 1
    start_cdf = np.cumsum(chain.stationary).tolist()
    row_cdfs = [row.tolist() for row in np.cumsum(chain.transition, axis=1)]
    states = np.empty(n, dtype=np.int64)
    state = min(bisect.bisect_right(start_cdf, uniforms[0]), last)
    states[0] = state
    for i, u in enumerate(uniforms[1:].tolist(), start=1):
        state = min(bisect.bisect_right(row_cdfs[state], u), last)
        states[i] = state
    return chain.values[states]


def _simulate_ar1(chain: Ar1Chain, n: int, rng: np.random.Generator) -> np.ndarray:
    normals = rng.standard_normal(n)
    start = normals[0]
    if n == 1:
        return np.array([start])
    shocks = chain.innovation_sd * normals[1:]
    rest, _ = scipy.signal.lfilter([1.0], [1.0, -chain.rho], shocks, zi=[chain.rho * start])
    return np.concatenate([[start], rest])


def metropolis_run(chain: MetropolisChain, n: int, stream: RngStream) -> Tuple[np.ndarray, float]:
    """
    Run the Metropolis chain; returns the kept path and the acceptance rate

    Raises:
        TargetSupportError: log target is -inf at the initial state
    """
    log_target = chain.log_density
    state = float(chain.initial_state)
    current = log_target(state)
    if not math.isfinite(current):
        raise TargetSupportError(f"target density is zero at the initial state {state}")
    rng = stream.generator()
    total = chain.burn_in + n - 1
    steps = (chain.proposal_sd * rng.standard_normal(total)).tolist()
    log_uniforms = np.log(rng.random(total)).tolist()

    path = np.empty(n)
    accepted = 0
    kept = 0
    if chain.burn_in == 0:
        path[0] = state
        kept = 1
    for i in range(total):
        proposal = state + steps[i]
        candidate = log_target(proposal)
        if log_uniforms[i] < candidate - current:
            state, current = proposal, candidate
            accepted += 1
        if i + 1 >= chain.burn_in:
            path[kept] = state
            kept += 1
    rate = accepted / total if total else 0.0
    logger.debug(f"🎲 Metropolis {chain.target_name!r}: acceptance rate {rate:.3f}")
    return path, rate


def simulate_path(chain: ChainSpec, n: int, stream: RngStream) -> np.ndarray:
    """
    Stationary path of length n, deterministic given the stream

    Finite chains start from π by inverse CDF, AR(1) from N(0, 1);
    Metropolis keeps the states after its burn-in.

    Args:
        chain: Any chain kind
        n: Path length (n >= 1)
        stream: Random stream

    Returns:
        Array of n states
    """
    if n < 1:
        raise DomainError(f"path length must be at least 1, got {n}")
    if isinstance(chain, FiniteReversibleChain):
        return _simulate_finite(chain, int(n), stream.generator())
    if isinstance(chain, Ar1Chain):
        return _simulate_ar1(chain, int(n), stream.generator())
    if isinstance(chain, MetropolisChain):
        return metropolis_run(chain, int(n), stream)[0]
    raise DomainError(f"cannot simulate chain kind {type(chain).__name__}")


def chain_from_spec(spec: Dict) -> ChainSpec:
    """
    Build a chain from its config dictionary

    Args:
        spec: {"kind": "finite", "values": [...], "transition": [[...]]},
            {"kind": "ar1", "rho": r} or
            {"kind": "metropolis", "target": "std_normal", "proposal_sd": s, "burn_in": b}

    Returns:
        Chain instance
    """
    kind = spec.get("kind")
    if kind == "finite":
        return build_finite_chain(spec["values"], spec["transition"], name=spec.get("name", "finite"))
    if kind == "ar1":
        return Ar1Chain(rho=float(spec["rho"]))
    if kind == "metropolis":
        return metropolis_chain(target=spec.get("target", "std_normal"),
                                proposal_sd=spec.get("proposal_sd", 2.4),
                                burn_in=spec.get("burn_in", 10_000),
                                initial_state=spec.get("initial_state"))
    raise DomainError(f"Unknown chain kind {kind!r}; expected finite, ar1 or metropolis")


def describe_chain(chain: ChainSpec) -> Dict:
    """JSON-friendly echo of a chain"""
    if isinstance(chain, FiniteReversibleChain):
        return {"kind": "finite", "name": chain.name, "values": chain.values.tolist(),
                "transition": chain.transition.tolist(), "stationary": chain.stationary.tolist()}
    if isinstance(chain, Ar1Chain):
        return {"kind": "ar1", "rho": chain.rho}
    return {"kind": "metropolis", "target": chain.target_name, "proposal_sd": chain.proposal_sd,
            "burn_in": chain.burn_in, "initial_state": chain.initial_state}
