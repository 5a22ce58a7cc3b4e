"""
Problem instances and oracle building blocks
============================================

Fairness-constrained linear classification:
    hinge_erm_oracle / erm_pretrain     hinge-loss ERM and its pretraining run
    roc_fairness_oracle / theta_grid    sigmoid ROC-gap measure over a threshold grid
    sigmoid_gaps                        per-threshold group gaps behind both fairness oracles
    dp_oracle                           sigmoid demographic-parity gap
    scad / scad_oracle                  SCAD sparsity penalty (2-weakly convex)
    dp_problem / roc_problem            the two assembled experiment problems
    lipschitz_constants                 alpha / beta constants of the fairness terms

Composition and synthetic instances:
    max_constraint, equality_reduction, pinv_norm
    synthetic_two_ball, calibrate_nu, l1_ball_problem, scad_constraint_problem

Features are scipy.sparse CSR matrices with one example per row.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.special import expit

from core import (
    Ball,
    Box,
    ContractViolation,
    InvalidSlaterError,
    Oracle,
    ProblemConstants,
    ProblemInstance,
    RegimeError,
    RngStream,
    StochasticOracle,
    SubgradientResult,
    Whole,
    as_vector,
)
from schedules import TheoryWarning

logger = logging.getLogger(__name__)


# ============================================================================
# Data containers
# ============================================================================

def _as_csr(matrix, n_features: Optional[int] = None) -> sparse.csr_matrix:
    if matrix is None:
        return sparse.csr_matrix((0, n_features or 0), dtype=np.float64)
    return sparse.csr_matrix(matrix, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class LinearClassifierData:
    """Constraint set D = {(a_i, b_i)} plus feature-only groups D_p and D_u."""

    features: sparse.csr_matrix
    labels: np.ndarray
    group_p: Optional[sparse.csr_matrix] = None
    group_u: Optional[sparse.csr_matrix] = None

    def __post_init__(self):
        features = _as_csr(self.features)
        labels = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        if features.shape[0] != labels.shape[0]:
            raise ContractViolation(f"{features.shape[0]} feature rows but {labels.shape[0]} labels")
        if labels.size and not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ContractViolation("Labels must be -1 or +1")
        d = features.shape[1]
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        for name in ("group_p", "group_u"):
            group = _as_csr(getattr(self, name), d)
            if group.shape[1] != d:
                raise ContractViolation(f"{name} has {group.shape[1]} features, expected {d}")
            object.__setattr__(self, name, group)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class ThetaGrid:
    thresholds: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        values = np.asarray(self.thresholds, dtype=np.float64).reshape(-1)
        if values.size == 0:
            raise ContractViolation("Threshold grid is empty")
        if values.size > 1 and not np.all(np.diff(values) > 0):
            raise ContractViolation("Threshold grid must be strictly increasing")
        object.__setattr__(self, "thresholds", values)

    def __len__(self):
        return self.thresholds.size


def _require_rows(matrix: sparse.csr_matrix, label: str):
    if matrix.shape[0] == 0:
        raise ContractViolation(f"{label} is empty")


def _row_norms(matrix: sparse.csr_matrix) -> np.ndarray:
    return np.sqrt(np.asarray(matrix.multiply(matrix).sum(axis=1)).reshape(-1))


# ============================================================================
# Hinge-loss ERM
# ============================================================================

def hinge_erm_oracle(data: LinearClassifierData) -> Oracle:
    """L(x) = mean (1 - b_i x'a_i)_+ ; examples with margin exactly 1 are inactive."""
    _require_rows(data.features, "Constraint set D")
    signed = sparse.csr_matrix(sparse.diags(data.labels) @ data.features)
    n = data.n

    def hinge(x):
        margins = signed @ x
        active = margins < 1.0
        value = np.maximum(1.0 - margins, 0.0).mean()
        return value, -(signed.T @ active.astype(np.float64)) / n

    return Oracle(hinge, name="hinge_erm", M=float(_row_norms(data.features).mean()), rho=0.0)


def erm_pretrain(data: LinearClassifierData, iters: int, eta: float, rng: RngStream,
                 batch_size: Optional[int] = None) -> Tuple[float, np.ndarray]:
    """
    Unconstrained subgradient method on L with steps eta/sqrt(t+1).
    Returns the best full-data loss seen and the point attaining it.
    Mini-batches are drawn from `rng` when batch_size is given.
    """
    oracle = hinge_erm_oracle(data)
    signed = sparse.csr_matrix(sparse.diags(data.labels) @ data.features)
    x = np.zeros(data.dimension)
    best_value, best_x = oracle.value(x), x.copy()

    for t in range(iters):
        if batch_size is None or batch_size >= data.n:
            zeta = oracle.evaluate(x).subgradient
        else:
            rows = signed[rng.choice(data.n, size=batch_size)]
            active = (rows @ x) < 1.0
            zeta = -(rows.T @ active.astype(np.float64)) / batch_size
        x = x - eta / math.sqrt(t + 1.0) * zeta
        value = oracle.value(x)
        if value < best_value:
            best_value, best_x = value, x.copy()

    logger.info("ERM pretraining: L*=%.6g after %d iterations", best_value, iters)
    return best_value, best_x


# ============================================================================
# Fairness measures
# ============================================================================

def lipschitz_constants(data: LinearClassifierData) -> Tuple[float, float]:
    """alpha = sum over groups of mean||a||/4, beta = sum of mean||a||^2/4."""
    _require_rows(data.group_p, "Group D_p")
    _require_rows(data.group_u, "Group D_u")
    norms_p = _row_norms(data.group_p)
    norms_u = _row_norms(data.group_u)
    alpha = norms_p.sum() / (4 * norms_p.size) + norms_u.sum() / (4 * norms_u.size)
    beta = (norms_p ** 2).sum() / (4 * norms_p.size) + (norms_u ** 2).sum() / (4 * norms_u.size)
    return float(alpha), float(beta)


def _group_sigmoids(data: LinearClassifierData, thresholds: np.ndarray, x) -> Tuple[np.ndarray, np.ndarray]:
    sig_p = expit((data.group_p @ x)[:, None] - thresholds[None, :])
    sig_u = expit((data.group_u @ x)[:, None] - thresholds[None, :])
    return sig_p, sig_u


def sigmoid_gaps(data: LinearClassifierData, thresholds: np.ndarray, x) -> np.ndarray:
    """mean_p sigma(x'a - th) - mean_u sigma(x'a - th) for every threshold."""
    sig_p, sig_u = _group_sigmoids(data, np.asarray(thresholds, dtype=np.float64), x)
    return sig_p.mean(axis=0) - sig_u.mean(axis=0)


def _sigmoid_gap_oracle(data: LinearClassifierData, thresholds: np.ndarray, name: str) -> Oracle:
    """max over thresholds of |mean_p sigma(x'a - th) - mean_u sigma(x'a - th)|."""
    _require_rows(data.group_p, "Group D_p")
    _require_rows(data.group_u, "Group D_u")
    P, U = data.group_p, data.group_u
    n_p, n_u = P.shape[0], U.shape[0]
    alpha, beta = lipschitz_constants(data)

    def gap(x):
        sig_p, sig_u = _group_sigmoids(data, thresholds, x)
        diff = sig_p.mean(axis=0) - sig_u.mean(axis=0)
        k = int(np.argmax(np.abs(diff)))
        weight_p = sig_p[:, k] * (1.0 - sig_p[:, k])
        weight_u = sig_u[:, k] * (1.0 - sig_u[:, k])
        direction = np.sign(diff[k])
        return abs(diff[k]), direction * (P.T @ weight_p / n_p - U.T @ weight_u / n_u)

    return Oracle(gap, name=name, M=alpha, rho=beta)


def theta_grid(data: LinearClassifierData, x_erm, size: int = 400) -> ThetaGrid:
    """Equally spaced thresholds over the ERM score range, widened by half its width on each side."""
    _require_rows(data.features, "Constraint set D")
    scores = data.features @ as_vector(x_erm, data.dimension)
    low, high = float(scores.min()), float(scores.max())
    if high == low:
        warnings.warn(f"All ERM scores equal {low:.6g}; using a single threshold", TheoryWarning, stacklevel=2)
        return ThetaGrid(np.array([low]))
    span = high - low
    return ThetaGrid(np.linspace(low - 0.5 * span, high + 0.5 * span, size))


def roc_fairness_oracle(data: LinearClassifierData, grid: ThetaGrid) -> Oracle:
    return _sigmoid_gap_oracle(data, grid.thresholds, name="roc_fairness")


def dp_oracle(data: LinearClassifierData) -> Oracle:
    return _sigmoid_gap_oracle(data, np.zeros(1), name="demographic_parity")


# ============================================================================
# SCAD
# ============================================================================

def scad(x) -> SubgradientResult:
    """
    Separable SCAD penalty: 2|z| up to 1, -z^2 + 4|z| - 1 up to 2, then 3.
    Continuous, bounded by 3, and z -> s(z) + z^2 is convex.
    """
    x = np.asarray(x, dtype=np.float64)
    a = np.abs(x)
    values = np.where(a <= 1.0, 2.0 * a, np.where(a <= 2.0, -a ** 2 + 4.0 * a - 1.0, 3.0))
    slopes = np.where(a <= 1.0, 2.0, np.where(a <= 2.0, 4.0 - 2.0 * a, 0.0))
    return SubgradientResult(float(values.sum()), np.sign(x) * slopes)


def scad_oracle(dimension: int) -> Oracle:
    def penalty(x):
        result = scad(x)
        return result.value, result.subgradient

    return Oracle(penalty, name="scad", M=2.0 * math.sqrt(dimension), rho=2.0)


def scad_slater_theta(kappa: float, q_lower: float, rho_bar: float) -> float:
    """Uniform Slater slack for g = SCAD - kappa with kappa strictly between multiples of 3."""
    k = math.floor(kappa / 3.0)
    if kappa <= 0 or kappa == 3.0 * k:
        raise RegimeError(f"kappa={kappa} must be positive and not a multiple of 3")
    return min((kappa - 3.0 * k) / 2.0, q_lower ** 2 / (2.0 + rho_bar), q_lower ** 3 / 2.0)


def scad_eps_bar_sq(kappa: float, q_lower: float, rho_bar: float) -> float:
    k = math.floor(kappa / 3.0)
    if kappa <= 0 or kappa == 3.0 * k:
        raise RegimeError(f"kappa={kappa} must be positive and not a multiple of 3")
    return min((3.0 * (k + 1) - kappa) / 2.0, q_lower ** 2 / (2.0 + rho_bar), q_lower ** 3 / 2.0)


# ============================================================================
# Elementary oracles
# ============================================================================

def linear_oracle(weights) -> Oracle:
    w = np.asarray(weights, dtype=np.float64)
    return Oracle(lambda x: (float(w @ x), w), name="linear", M=float(np.linalg.norm(w)), rho=0.0)


def l1_oracle(center) -> Oracle:
    """||x - center||_1 with sign(0) = 0 at kinks."""
    c = np.asarray(center, dtype=np.float64)
    return Oracle(lambda x: (float(np.abs(x - c).sum()), np.sign(x - c)),
                  name="l1", M=math.sqrt(c.size), rho=0.0)


def squared_norm_oracle(level: float = 1.0, M: Optional[float] = None) -> Oracle:
    """||x||^2 - level."""
    return Oracle(lambda x: (float(x @ x) - level, 2.0 * x), name="squared_norm", M=M, rho=0.0)


def shifted_oracle(oracle: Oracle, offset: float, name: Optional[str] = None) -> Oracle:
    """oracle(x) - offset."""

    def shifted(x):
        result = oracle.evaluate(x)
        return result.value - offset, result.subgradient

    return Oracle(shifted, name=name or oracle.name, M=oracle.M, rho=oracle.rho)


def sum_oracle(first: Oracle, second: Oracle, weight: float = 1.0, name: str = "sum") -> Oracle:
    """first + weight * second."""

    def combined(x):
        a = first.evaluate(x)
        b = second.evaluate(x)
        return a.value + weight * b.value, a.subgradient + weight * b.subgradient

    M = None if first.M is None or second.M is None else first.M + weight * second.M
    return Oracle(combined, name=name, M=M, rho=first.rho + weight * second.rho)


# ============================================================================
# Constraint composition
# ============================================================================

def max_constraint(components: Sequence[Oracle]) -> Oracle:
    """Pointwise max; the lowest-index maximizer supplies the subgradient."""
    components = list(components)
    if not components:
        raise ContractViolation("max_constraint needs at least one component")

    def pointwise_max(x):
        results = [c.evaluate(x) for c in components]
        k = int(np.argmax([r.value for r in results]))
        return results[k].value, results[k].subgradient

    bounds = [c.M for c in components]
    M = None if any(b is None for b in bounds) else max(bounds)
    return Oracle(pointwise_max, name="max(" + ",".join(c.name for c in components) + ")",
                  M=M, rho=max(c.rho for c in components))


def pinv_norm(A) -> float:
    """Spectral norm of (AA')^{-1}A; A must have full row rank."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if np.linalg.matrix_rank(A) < A.shape[0]:
        raise RegimeError("Equality matrix A must have full row rank")
    return float(np.linalg.norm(np.linalg.solve(A @ A.T, A), 2))


def equality_reduction(h: Oracle, A, b) -> Oracle:
    """g(x) = max{h(x), ||Ax - b||_inf}."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if A.shape[0] != b.shape[0]:
        raise ContractViolation(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")

    def residual(x):
        r = A @ x - b
        i = int(np.argmax(np.abs(r)))
        return abs(r[i]), np.sign(r[i]) * A[i]

    residual_oracle = Oracle(residual, name="equality_residual",
                             M=float(np.linalg.norm(A, axis=1).max()), rho=0.0)
    return max_constraint([h, residual_oracle])


# ============================================================================
# Fairness problems
# ============================================================================

def dp_problem(data: LinearClassifierData, lam: float = 0.2, kappa: float = 0.02,
               radius: Optional[float] = None) -> ProblemInstance:
    """
    min L(x) + lam * SCAD(x)  s.t.  R0(x) <= kappa, over R^d (or a ball
    of the given radius). x = 0 is a Slater point with g(0) = -kappa.
    """
    if lam < 0:
        raise RegimeError(f"lambda must be nonnegative, got {lam}")
    if not kappa > 0:
        raise InvalidSlaterError(f"kappa must be positive, got {kappa}")
    d = data.dimension
    loss = hinge_erm_oracle(data)
    objective = sum_oracle(loss, scad_oracle(d), weight=lam, name="hinge+scad")
    fairness = dp_oracle(data)
    constraint = shifted_oracle(fairness, kappa, name="dp_gap")
    alpha, beta = lipschitz_constants(data)

    projection = Whole() if radius is None else Ball(radius)
    constants = ProblemConstants(
        M=max(objective.M, alpha, 1e-12),
        rho=max(2.0 * lam, beta),
        D=None if radius is None else 2.0 * radius,
        g_feas_value=-kappa,
        x_feas=np.zeros(d),
        f_lower=0.0,
        constraint_rho=beta,
    )
    return ProblemInstance(d, objective, constraint, projection, constants, name="dp")


def roc_problem(data: LinearClassifierData, L_star: float, kappa_frac: float, radius_mult: float,
                x_erm, grid: Optional[ThetaGrid] = None) -> ProblemInstance:
    """min R(x) s.t. L(x) <= L* + kappa, ||x|| <= r; x_erm is the Slater point."""
    x_erm = as_vector(x_erm, data.dimension)
    kappa = kappa_frac * L_star
    if not kappa > 0:
        raise InvalidSlaterError(f"kappa = {kappa_frac} * L* = {kappa} is not positive")
    radius = radius_mult * float(np.linalg.norm(x_erm))
    if not radius > 0:
        raise RegimeError("ERM solution is zero; the ball radius would vanish")
    grid = theta_grid(data, x_erm) if grid is None else grid
    objective = roc_fairness_oracle(data, grid)
    loss = hinge_erm_oracle(data)

    def loss_slack(x):
        result = loss.evaluate(x)
        return result.value - L_star - kappa, result.subgradient

    constraint = Oracle(loss_slack, name="hinge_slack", M=loss.M, rho=0.0)
    constants = ProblemConstants(
        M=max(objective.M, loss.M),
        rho=objective.rho,
        D=2.0 * radius,
        g_feas_value=-kappa,
        x_feas=x_erm,
        f_lower=0.0,
    )
    return ProblemInstance(data.dimension, objective, constraint, Ball(radius), constants, name="roc")


# ============================================================================
# Synthetic instances
# ============================================================================

def calibrate_nu(constraint: Oracle, boundary_points: np.ndarray) -> float:
    """Smallest constraint subgradient norm over sampled boundary points."""
    norms = [np.linalg.norm(constraint.evaluate(p).subgradient) for p in boundary_points]
    if not norms:
        raise ContractViolation("No boundary points to calibrate against")
    return float(min(norms))


def two_ball_boundary(c1, c2, radius: float, samples: int = 4096, seed: int = 0) -> np.ndarray:
    """Points on either sphere that are not inside the other ball."""
    centers = [np.asarray(c1, dtype=np.float64), np.asarray(c2, dtype=np.float64)]
    gen = RngStream(seed).generator
    points = []
    for i, center in enumerate(centers):
        other = centers[1 - i]
        directions = gen.standard_normal((samples, center.size))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        candidates = center + radius * directions
        outside = np.linalg.norm(candidates - other, axis=1) >= radius
        points.append(candidates[outside])
    return np.vstack(points)


def synthetic_two_ball(c1, c2, radius: float, objective, half_width: Optional[float] = None,
                       calibration_samples: int = 4096) -> ProblemInstance:
    """
    g(x) = min(||x - c1||^2, ||x - c2||^2) - r^2 with linear f over a box.
    Each piece has curvature 2, so rho = 2 on either side of the bisecting
    hyperplane; iterates near S never reach it.
    """
    c1 = np.asarray(c1, dtype=np.float64)
    c2 = np.asarray(c2, dtype=np.float64)
    if c1.shape != c2.shape:
        raise ContractViolation("Centers must have the same dimension")
    if not radius > 0:
        raise RegimeError(f"Radius must be positive, got {radius}")
    d = c1.size
    if half_width is None:
        half_width = float(max(np.abs(c1).max(), np.abs(c2).max()) + 2.0 * radius)
    f = linear_oracle(objective)

    # Largest distance from a box point to either center, per coordinate.
    reach = max(np.sqrt(np.sum((half_width + np.abs(c)) ** 2)) for c in (c1, c2))

    def two_ball(x):
        d1 = float((x - c1) @ (x - c1))
        d2 = float((x - c2) @ (x - c2))
        center = c1 if d1 <= d2 else c2
        return min(d1, d2) - radius ** 2, 2.0 * (x - center)

    g = Oracle(two_ball, name="two_ball", M=2.0 * reach, rho=2.0)
    nu = calibrate_nu(g, two_ball_boundary(c1, c2, radius, calibration_samples))

    def distance(x):
        return max(0.0, min(np.linalg.norm(x - c1), np.linalg.norm(x - c2)) - radius)

    constants = ProblemConstants(
        M=max(f.M, g.M),
        rho=2.0,
        D=2.0 * half_width * math.sqrt(d),
        theta=radius ** 2,
        g_feas_value=-radius ** 2,
        x_feas=c1,
        nu=nu,
        constraint_rho=2.0,
    )
    return ProblemInstance(d, f, g, Box(-half_width, half_width), constants,
                           name="two_ball", distance_to_feasible=distance)


def l1_ball_problem(a, radius: float = 3.0, mu: Optional[float] = None,
                    subgradient_sigma: float = 0.0, value_sigma: float = 0.0) -> ProblemInstance:
    """
    f = ||x - a||_1, g = ||x||^2 - 1 over ball(radius); x = 0 is the
    Slater point. `mu=2` declares the strong convexity of g. Positive
    sigmas wrap both oracles with Gaussian noise.
    """
    a = np.asarray(a, dtype=np.float64)
    d = a.size
    f = l1_oracle(a)
    g = squared_norm_oracle(1.0, M=2.0 * radius)
    objective, constraint = f, g
    if subgradient_sigma > 0 or value_sigma > 0:
        objective = StochasticOracle.gaussian(f, 0.0, subgradient_sigma)
        constraint = StochasticOracle.gaussian(g, value_sigma, subgradient_sigma)
    constants = ProblemConstants(
        M=max(f.M, g.M),
        rho=0.0,
        D=2.0 * radius,
        g_feas_value=-1.0,
        x_feas=np.zeros(d),
        mu=mu,
        sigma=max(subgradient_sigma, value_sigma) or None,
        f_lower=0.0,
    )

    def distance(x):
        return max(0.0, float(np.linalg.norm(x)) - 1.0)

    return ProblemInstance(d, objective, constraint, Ball(radius), constants,
                           name="l1_ball", distance_to_feasible=distance)


def scad_constraint_problem(objective: Oracle, dimension: int, kappa: float,
                            projection=None) -> ProblemInstance:
    """min f(x) s.t. SCAD(x) <= kappa; x = 0 is a Slater point."""
    if not kappa > 0:
        raise InvalidSlaterError(f"kappa must be positive, got {kappa}")
    projection = Whole() if projection is None else projection
    constraint = shifted_oracle(scad_oracle(dimension), kappa, name="scad_budget")
    D = getattr(projection, "diameter", None)
    constants = ProblemConstants(
        M=max(objective.M or 0.0, constraint.M),
        rho=max(objective.rho, 2.0),
        D=D if isinstance(D, float) else None,
        g_feas_value=-kappa,
        x_feas=np.zeros(dimension),
        constraint_rho=2.0,
    )
    return ProblemInstance(dimension, objective, constraint, projection, constants, name="scad_budget")
