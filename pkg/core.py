"""
Core types and oracle contracts
===============================

Shared building blocks for every solver and problem in this repository:

- SubgradientResult / StochasticSample value types
- Oracle (deterministic) and StochasticOracle (sampled) wrappers
- Projection sets (Ball, Box, Whole)
- ProblemConstants / ProblemInstance
- RngStream, a seeded generator with index-derived sub-streams
- The exception hierarchy used across the package
- Property checks (projection, subgradients, weak convexity, bounds)
  used by the test-suite and by `ssg.py selftest`

Kink convention: at non-differentiable points oracles return the
subgradient obtained with np.sign (|.| gives 0 at 0, hinge gives 0 at
the kink). Max-type oracles break ties by the lowest index.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

FloatArray = np.ndarray


# ============================================================================
# Errors
# ============================================================================

class SSGError(RuntimeError):
    """Base class for every error raised by this package."""


class ContractViolation(SSGError, ValueError):
    """A caller broke a precondition (dimension, sign, range)."""


class OracleError(SSGError):
    """An oracle returned a non-finite value or subgradient."""

    def __init__(self, message: str, oracle: str = "", location: Optional[FloatArray] = None,
                 iteration: Optional[int] = None):
        self.oracle = oracle
        self.location = None if location is None else np.array(location, copy=True)
        self.iteration = iteration
        detail = message
        if oracle:
            detail = f"[{oracle}] {detail}"
        if iteration is not None:
            detail = f"{detail} (iteration {iteration})"
        super().__init__(detail)


class NonFiniteIterateError(SSGError):
    def __init__(self, iteration: int, step: float):
        self.iteration = iteration
        self.step = step
        super().__init__(f"Non-finite iterate at iteration {iteration} (stepsize {step!r})")


class RegimeError(SSGError, ValueError):
    """Parameters fall outside the regime a formula or construction requires."""


class InvalidSlaterError(RegimeError):
    """The supplied Slater value g(x_feas) is not strictly negative."""


class NoFeasibleIterateError(SSGError):
    def __init__(self, message: str, min_g: float = float("nan"), outer_index: Optional[int] = None):
        self.min_g = min_g
        self.outer_index = outer_index
        detail = f"{message} (min g seen: {min_g:.6g})"
        if outer_index is not None:
            detail = f"{detail} at outer iteration {outer_index}"
        super().__init__(detail)


class ParseError(SSGError, ValueError):
    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class EmptyGroupError(SSGError, ValueError):
    """A group predicate selected no rows."""


class SchemaError(SSGError, ValueError):
    def __init__(self, column: str, message: str):
        self.column = column
        super().__init__(f"column '{column}': {message}")


class ConfigError(SSGError, ValueError):
    """Experiment configuration is incomplete or inconsistent."""


# ============================================================================
# Value types
# ============================================================================

@dataclass(frozen=True)
class SubgradientResult:
    value: float
    subgradient: FloatArray


@dataclass(frozen=True)
class StochasticSample:
    value_sample: float
    subgradient_sample: FloatArray


def as_vector(x, dimension: Optional[int] = None) -> FloatArray:
    """Coerce to a 1-D float64 array and check the dimension."""
    vec = np.asarray(x, dtype=np.float64).reshape(-1)
    if dimension is not None and vec.shape[0] != dimension:
        raise ContractViolation(f"Expected a vector of dimension {dimension}, got {vec.shape[0]}")
    return vec


# ============================================================================
# Oracles
# ============================================================================

OracleFunction = Callable[[FloatArray], Tuple[float, FloatArray]]


@dataclass(frozen=True)
class Oracle:
    """
    Deterministic first-order oracle for one function.

    `func` maps x to (value, subgradient). `M` is the declared bound on
    subgradient norms over X, `rho` the declared weak-convexity constant.
    """

    func: OracleFunction = field(repr=False)
    name: str = "oracle"
    M: Optional[float] = None
    rho: float = 0.0

    def evaluate(self, x: FloatArray) -> SubgradientResult:
        value, subgradient = self.func(x)
        value = float(value)
        subgradient = np.asarray(subgradient, dtype=np.float64)
        if not np.isfinite(value) or not np.all(np.isfinite(subgradient)):
            raise OracleError("non-finite output", oracle=self.name, location=x)
        return SubgradientResult(value, subgradient)

    def value(self, x: FloatArray) -> float:
        return self.evaluate(x).value


Sampler = Callable[[FloatArray, np.random.Generator], object]


@dataclass(frozen=True)
class StochasticOracle:
    """
    Sampled oracle around a deterministic base.

    `value_sampler(x, gen)` returns an unbiased sample of the value,
    `subgradient_sampler(x, gen)` an unbiased subgradient sample. When a
    sampler is missing the base oracle answers exactly, so a stochastic
    oracle without samplers reproduces deterministic runs.
    """

    base: Oracle
    value_sampler: Optional[Sampler] = field(default=None, repr=False)
    subgradient_sampler: Optional[Sampler] = field(default=None, repr=False)
    sigma: float = 0.0

    @property
    def name(self) -> str:
        return self.base.name

    @property
    def M(self) -> Optional[float]:
        return self.base.M

    @property
    def rho(self) -> float:
        return self.base.rho

    def evaluate(self, x: FloatArray) -> SubgradientResult:
        return self.base.evaluate(x)

    def value(self, x: FloatArray) -> float:
        return self.base.value(x)

    def sample_value(self, x: FloatArray, rng: "RngStream") -> float:
        if self.value_sampler is None:
            return self.base.value(x)
        value = float(self.value_sampler(x, rng.generator))
        if not np.isfinite(value):
            raise OracleError("non-finite value sample", oracle=self.name, location=x)
        return value

    def sample_subgradient(self, x: FloatArray, rng: "RngStream") -> FloatArray:
        if self.subgradient_sampler is None:
            return self.base.evaluate(x).subgradient
        sample = np.asarray(self.subgradient_sampler(x, rng.generator), dtype=np.float64)
        if not np.all(np.isfinite(sample)):
            raise OracleError("non-finite subgradient sample", oracle=self.name, location=x)
        return sample

    def sample(self, x: FloatArray, rng: "RngStream") -> StochasticSample:
        return StochasticSample(self.sample_value(x, rng), self.sample_subgradient(x, rng))

    @classmethod
    def gaussian(cls, base: Oracle, value_sigma: float = 0.0,
                 subgradient_sigma: float = 0.0) -> "StochasticOracle":
        """Additive zero-mean Gaussian noise on values and/or subgradients."""
        if value_sigma < 0 or subgradient_sigma < 0:
            raise ContractViolation("Noise levels must be nonnegative")

        value_sampler = None
        subgradient_sampler = None
        if value_sigma > 0:
            def value_sampler(x, gen):
                return base.value(x) + value_sigma * gen.standard_normal()
        if subgradient_sigma > 0:
            def subgradient_sampler(x, gen):
                zeta = base.evaluate(x).subgradient
                return zeta + subgradient_sigma * gen.standard_normal(zeta.shape)
        return cls(base, value_sampler, subgradient_sampler, sigma=max(value_sigma, subgradient_sigma))


AnyOracle = Union[Oracle, StochasticOracle]


def deterministic(oracle: AnyOracle) -> Oracle:
    """The exact oracle behind a possibly stochastic one."""
    return oracle.base if isinstance(oracle, StochasticOracle) else oracle


def stochastic(oracle: AnyOracle) -> StochasticOracle:
    return oracle if isinstance(oracle, StochasticOracle) else StochasticOracle(oracle)


# ============================================================================
# Projection sets
# ============================================================================

@dataclass(frozen=True)
class Ball:
    radius: float
    center: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if not self.radius > 0:
            raise ContractViolation(f"Ball radius must be positive, got {self.radius}")

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def __call__(self, x: FloatArray) -> FloatArray:
        c = 0.0 if self.center is None else np.asarray(self.center, dtype=np.float64)
        offset = x - c
        norm = np.linalg.norm(offset)
        if norm <= self.radius:
            return np.array(x, dtype=np.float64, copy=True)
        return c + offset * (self.radius / norm)


@dataclass(frozen=True)
class Box:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ContractViolation(f"Empty box [{self.lower}, {self.upper}]")

    def diameter_in(self, dimension: int) -> float:
        return float((self.upper - self.lower) * np.sqrt(dimension))

    def __call__(self, x: FloatArray) -> FloatArray:
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True)
class Whole:
    """X = R^d."""

    diameter = None

    def __call__(self, x: FloatArray) -> FloatArray:
        return np.array(x, dtype=np.float64, copy=True)


# ============================================================================
# Problem instances
# ============================================================================

@dataclass(frozen=True)
class ProblemConstants:
    M: float
    rho: float = 0.0
    D: Optional[float] = None
    rho_bar: Optional[float] = None
    theta: Optional[float] = None
    sigma: Optional[float] = None
    g_feas_value: Optional[float] = None
    x_feas: Optional[FloatArray] = None
    mu: Optional[float] = None
    nu: Optional[float] = None
    f_lower: Optional[float] = None
    # Weak convexity of g alone; 0 means g is convex.
    constraint_rho: float = 0.0


@dataclass(frozen=True)
class ProblemInstance:
    """min f(x) s.t. g(x) <= 0, x in X."""

    dimension: int
    objective: AnyOracle
    constraint: AnyOracle
    projection: Callable[[FloatArray], FloatArray]
    constants: ProblemConstants
    name: str = "problem"
    distance_to_feasible: Optional[Callable[[FloatArray], float]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ContractViolation(f"Dimension must be positive, got {self.dimension}")
        if self.constants.rho < 0:
            raise RegimeError(f"rho must be nonnegative, got {self.constants.rho}")
        if not self.constants.M > 0:
            raise RegimeError(f"M must be positive, got {self.constants.M}")
        x_feas = self.constants.x_feas
        if x_feas is not None:
            g_feas = deterministic(self.constraint).value(as_vector(x_feas, self.dimension))
            if not g_feas < 0:
                raise InvalidSlaterError(f"{self.name}: g(x_feas) = {g_feas:.6g} is not negative")

    @property
    def is_stochastic(self) -> bool:
        return isinstance(self.objective, StochasticOracle) or isinstance(self.constraint, StochasticOracle)


def project(problem: ProblemInstance, x) -> FloatArray:
    vec = as_vector(x, problem.dimension)
    if not np.all(np.isfinite(vec)):
        raise ContractViolation("Cannot project a non-finite point")
    return np.asarray(problem.projection(vec), dtype=np.float64)


def eval_objective(problem: ProblemInstance, x) -> SubgradientResult:
    return deterministic(problem.objective).evaluate(as_vector(x, problem.dimension))


def eval_constraint(problem: ProblemInstance, x) -> SubgradientResult:
    return deterministic(problem.constraint).evaluate(as_vector(x, problem.dimension))


# ============================================================================
# Random streams
# ============================================================================

class RngStream:
    """
    Seeded PCG64 generator. `child(i)` derives an independent sub-stream
    from (seed, key + (i,)), so the same seed and key always reproduce
    the same draws.
    """

    def __init__(self, seed: int, key: Tuple[int, ...] = ()):
        if seed < 0 or seed >= 2 ** 64:
            raise ContractViolation(f"Seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(sequence))
        self.draws = 0

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.key + (int(index),))

    def record(self) -> Dict[str, object]:
        return {"seed": self.seed, "key": list(self.key)}

    def standard_normal(self, size=None):
        self.draws += 1
        return self.generator.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        self.draws += 1
        return self.generator.uniform(low, high, size)

    def choice(self, a, p=None, size=None):
        self.draws += 1
        return self.generator.choice(a, p=p, size=size)

    def permutation(self, n: int) -> np.ndarray:
        self.draws += 1
        return self.generator.permutation(n)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, key={self.key})"


# ============================================================================
# Property checks
# ============================================================================

@dataclass(frozen=True)
class PropertyCheck:
    name: str
    passed: bool
    worst: float
    samples: int
    detail: str = ""


PointSampler = Callable[[RngStream], FloatArray]


def check_projection(projection: Callable[[FloatArray], FloatArray], sample_point: PointSampler,
                     rng: RngStream, pairs: int = 10_000, tol: float = 1e-12,
                     name: str = "projection") -> PropertyCheck:
    """Non-expansiveness against points of X and idempotence."""
    worst = 0.0
    for _ in range(pairs):
        x = sample_point(rng)
        y = projection(sample_point(rng))
        px = projection(x)
        excess = np.linalg.norm(px - y) - np.linalg.norm(x - y)
        drift = np.linalg.norm(projection(px) - px)
        worst = max(worst, excess, drift)
    return PropertyCheck(name, worst <= tol, worst, pairs, "max(expansion, idempotence drift)")


def check_subgradients(oracle: Oracle, sample_point: PointSampler, rng: RngStream,
                       points: int = 1000, h: float = 1e-6, rtol: float = 1e-4,
                       kink_distance: Optional[Callable[[FloatArray], float]] = None,
                       kink_margin: float = 1e-3) -> PropertyCheck:
    """
    Central finite differences against reported subgradients, skipping
    points closer than `kink_margin` to a kink.
    """
    worst = 0.0
    checked = 0
    attempts = 0
    while checked < points and attempts < 20 * points:
        attempts += 1
        x = sample_point(rng)
        if kink_distance is not None and kink_distance(x) < kink_margin:
            continue
        zeta = oracle.evaluate(x).subgradient
        fd = np.empty_like(x)
        for i in range(x.shape[0]):
            e = np.zeros_like(x)
            e[i] = h
            fd[i] = (oracle.value(x + e) - oracle.value(x - e)) / (2 * h)
        err = np.linalg.norm(fd - zeta) / max(1.0, np.linalg.norm(zeta))
        worst = max(worst, err)
        checked += 1
    passed = worst <= rtol and checked == points
    return PropertyCheck(f"subgradient[{oracle.name}]", passed, worst, checked,
                         f"{attempts - checked} samples skipped near kinks")


def check_weak_convexity(value: Callable[[FloatArray], float], rho: float,
                         sample_point: PointSampler, rng: RngStream, pairs: int = 10_000,
                         tol: float = 1e-9, name: str = "weak convexity") -> PropertyCheck:
    """Midpoint convexity of h + (rho/2)||.||^2."""

    def shifted(z):
        return value(z) + 0.5 * rho * float(z @ z)

    worst = -np.inf
    for _ in range(pairs):
        a = sample_point(rng)
        b = sample_point(rng)
        gap = shifted(0.5 * (a + b)) - 0.5 * (shifted(a) + shifted(b))
        worst = max(worst, gap)
    return PropertyCheck(name, worst <= tol, float(worst), pairs, f"rho={rho}")


def check_subgradient_bound(oracle: Oracle, sample_point: PointSampler, rng: RngStream,
                            points: int = 1000, tol: float = 1e-9) -> PropertyCheck:
    if oracle.M is None:
        return PropertyCheck(f"bound[{oracle.name}]", False, float("inf"), 0, "no declared M")
    worst = 0.0
    for _ in range(points):
        worst = max(worst, float(np.linalg.norm(oracle.evaluate(sample_point(rng)).subgradient)))
    return PropertyCheck(f"bound[{oracle.name}]", worst <= oracle.M + tol, worst, points,
                         f"declared M={oracle.M:.6g}")


def summarize_checks(checks: List[PropertyCheck]) -> bool:
    for check in checks:
        level = logging.INFO if check.passed else logging.WARNING
        logger.log(level, "%s: %s (worst %.3g over %d samples; %s)", check.name,
                   "pass" if check.passed else "FAIL", check.worst, check.samples, check.detail)
    return all(check.passed for check in checks)
