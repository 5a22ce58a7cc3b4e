"""
Near-stationarity evaluation
============================

A point x is measured by ||x_hat(x) - x||, where x_hat(x) solves the
prox subproblem centered at x. The subproblem is solved with the
switching subgradient method, once with `inner_iters` and once with
twice as many iterations; the relative change between the two
distances is reported as `refinement_delta` and measurements with a
change of 1% or more are flagged.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from core import (
    ContractViolation,
    NoFeasibleIterateError,
    ProblemInstance,
    RngStream,
    as_vector,
    deterministic,
    project,
)
from ipp import ProxSubproblem
from schedules import StepsizePolicy, manual_schedule
from solver import ssg_run

logger = logging.getLogger(__name__)

REFINEMENT_TOLERANCE = 0.01
PROBE_DELTA = 1e-6


@dataclass(frozen=True, eq=False)
class NearStationarityReport:
    distance: float
    x_hat: np.ndarray
    multiplier_estimate: float
    kkt_residual: float
    refinement_delta: float
    inner_iters_used: int
    constraint_value: float = 0.0
    complementarity: float = 0.0
    flagged: bool = False

    def __post_init__(self):
        if self.distance < 0 or self.refinement_delta < 0:
            raise ContractViolation("distance and refinement_delta must be nonnegative")


def default_rho_hat(problem: ProblemInstance) -> float:
    return 2.0 * max(problem.constants.rho, 1.0)


def default_rho_tilde(problem: ProblemInstance, rho_hat: float) -> float:
    """0 for a convex constraint, rho_hat otherwise."""
    return 0.0 if problem.constants.constraint_rho == 0.0 else rho_hat


def prox_inner_policy(rho_hat: float, rho: float, iters: int) -> StepsizePolicy:
    """eps_t = 0, eta_t = 1/((rho_hat - rho)(t+1)) on I, Polyak steps on J."""
    return manual_schedule(T=iters, eps=0.0, eta=1.0 / (rho_hat - rho), eta_decay="harmonic",
                           eps_decay="constant", polyak_scale=1.0)


def _normal_removed(x_hat: np.ndarray, v: np.ndarray, problem: ProblemInstance) -> np.ndarray:
    """(x_hat - proj(x_hat - delta v)) / delta: v without its normal-cone component."""
    return (x_hat - project(problem, x_hat - PROBE_DELTA * v)) / PROBE_DELTA


def kkt_residual(problem: ProblemInstance, x_hat, x_center, rho_hat: float, rho_tilde: float,
                 lambda_hat: float, probe: float = 1e-7) -> float:
    """
    Distance of the prox KKT combination to -N_X(x_hat).

    Subgradients are collected at x_hat and at x_hat +/- probe along each
    coordinate; the min-norm convex combination of the resulting KKT
    vectors stands in for the subdifferential at a kink.
    """
    if lambda_hat < 0:
        raise ContractViolation(f"lambda_hat must be nonnegative, got {lambda_hat}")
    x_hat = as_vector(x_hat, problem.dimension)
    center = as_vector(x_center, problem.dimension)
    f = deterministic(problem.objective)
    g = deterministic(problem.constraint)

    points = [x_hat]
    for i in range(problem.dimension):
        e = np.zeros(problem.dimension)
        e[i] = probe
        points.extend((x_hat + e, x_hat - e))
    vectors = np.column_stack([
        f.evaluate(p).subgradient + rho_hat * (p - center)
        + lambda_hat * (g.evaluate(p).subgradient + rho_tilde * (p - center))
        for p in points
    ])

    # min ||V w|| over the simplex, with the sum-to-one row weighted in.
    weight = 1e3 * max(1.0, float(np.abs(vectors).max()))
    augmented = np.vstack([vectors, np.full((1, vectors.shape[1]), weight)])
    target = np.zeros(augmented.shape[0])
    target[-1] = weight
    w, _ = nnls(augmented, target)
    candidates = [vectors[:, k] for k in range(vectors.shape[1])]
    if w.sum() > 0:
        candidates.append(vectors @ (w / w.sum()))
    return float(min(np.linalg.norm(_normal_removed(x_hat, v, problem)) for v in candidates))


def near_stationarity(problem: ProblemInstance, x, rho_hat: Optional[float] = None,
                      rho_tilde: Optional[float] = None, inner_iters: int = 2500,
                      rng: Optional[RngStream] = None,
                      inner_policy: Optional[StepsizePolicy] = None) -> NearStationarityReport:
    """Estimate ||x_hat(x) - x|| with multiplier and KKT diagnostics."""
    rho_hat = default_rho_hat(problem) if rho_hat is None else rho_hat
    rho_tilde = default_rho_tilde(problem, rho_hat) if rho_tilde is None else rho_tilde
    rng = RngStream(0) if rng is None else rng
    center = project(problem, x)
    subproblem = ProxSubproblem(problem, center, rho_hat, rho_tilde)
    instance = subproblem.build()
    policy = inner_policy or prox_inner_policy(rho_hat, problem.constants.rho, inner_iters)

    short = ssg_run(instance, policy.with_horizon(inner_iters), center, rng.child(0),
                    checkpoint_every=inner_iters)
    long_iters = 2 * inner_iters
    long = ssg_run(instance, policy.with_horizon(long_iters), center, rng.child(1),
                   checkpoint_every=long_iters)
    if long.index_set_I.size == 0:
        raise NoFeasibleIterateError("Prox subproblem never reached its tolerance",
                                     min_g=float(long.g_values.min()))

    x_hat = long.final_iterate
    d_short = float(np.linalg.norm(short.final_iterate - center))
    d_long = float(np.linalg.norm(x_hat - center))
    refinement = abs(d_long - d_short) / max(d_long, np.finfo(np.float64).eps)

    # Multiplier from the oracles at x_hat, after removing normal components.
    shift = x_hat - center
    f_result = deterministic(problem.objective).evaluate(x_hat)
    g_result = deterministic(problem.constraint).evaluate(x_hat)
    a = _normal_removed(x_hat, f_result.subgradient + rho_hat * shift, problem)
    b = _normal_removed(x_hat, g_result.subgradient + rho_tilde * shift, problem)
    constraint_value = g_result.value + 0.5 * rho_tilde * float(shift @ shift)
    step = float(np.linalg.norm(x_hat - long.checkpoints[long_iters - 1]))
    # A constraint within one inner step of its boundary counts as active.
    active = constraint_value > -max(1e-8, step * float(np.linalg.norm(b)))
    b_norm_sq = float(b @ b)
    lambda_hat = max(0.0, -float(a @ b) / b_norm_sq) if active and b_norm_sq > 0 else 0.0

    residual = kkt_residual(problem, x_hat, center, rho_hat, rho_tilde, lambda_hat, probe=max(step, 1e-7))
    flagged = refinement >= REFINEMENT_TOLERANCE
    if flagged:
        logger.warning("%s: near-stationarity %.4g changed by %.2f%% when inner iterations doubled",
                       problem.name, d_long, 100 * refinement)
    return NearStationarityReport(
        distance=d_long,
        x_hat=x_hat,
        multiplier_estimate=lambda_hat,
        kkt_residual=residual,
        refinement_delta=refinement,
        inner_iters_used=long_iters,
        constraint_value=constraint_value,
        complementarity=lambda_hat * abs(constraint_value),
        flagged=flagged,
    )
