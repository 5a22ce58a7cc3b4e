"""
Inexact proximal point (IPP) baseline
=====================================

The prox subproblem at a center x is

    min  f(y) + (rho_hat/2)||y - x||^2
    s.t. g(y) + (rho_tilde/2)||y - x||^2 <= 0,  y in X

with either rho_tilde = 0 (convex g) or rho < rho_tilde <= rho_hat
(weakly convex g). The same builder serves the near-stationarity
evaluator. ipp_run solves a sequence of such subproblems with an inner
solver and concatenates the inner iterations into one trace.
"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, Optional, Protocol

import numpy as np

from core import (
    NoFeasibleIterateError,
    Oracle,
    ProblemInstance,
    RegimeError,
    RngStream,
    as_vector,
    deterministic,
    eval_objective,
    project,
)
from schedules import StepsizePolicy
from solver import SolverTrace, is_checkpoint, sample_output, ssg_run

logger = logging.getLogger(__name__)


def _regularized(oracle: Oracle, center: np.ndarray, weight: float, M: Optional[float], name: str) -> Oracle:
    def regularized(y):
        result = oracle.evaluate(y)
        offset = y - center
        return result.value + 0.5 * weight * float(offset @ offset), result.subgradient + weight * offset

    return Oracle(regularized, name=name, M=M, rho=0.0)


@dataclass(frozen=True, eq=False)
class ProxSubproblem:
    base: ProblemInstance
    center: np.ndarray
    rho_hat: float
    rho_tilde: float = 0.0

    def __post_init__(self):
        rho = self.base.constants.rho
        if not self.rho_hat > rho:
            raise RegimeError(f"rho_hat={self.rho_hat} must exceed rho={rho}")
        if self.rho_tilde != 0.0 and not rho < self.rho_tilde <= self.rho_hat:
            raise RegimeError(f"rho_tilde={self.rho_tilde} must be 0 or lie in ({rho}, {self.rho_hat}]")
        object.__setattr__(self, "center", as_vector(self.center, self.base.dimension))

    def build(self) -> ProblemInstance:
        base = self.base
        constants = base.constants
        f = deterministic(base.objective)
        g = deterministic(base.constraint)
        # ||y - center|| <= D inside X.
        M = constants.M if constants.D is None else constants.M + self.rho_hat * constants.D
        objective = _regularized(f, self.center, self.rho_hat, M, f"prox[{f.name}]")
        constraint = _regularized(g, self.center, self.rho_tilde, M, f"prox[{g.name}]")

        convex_constraint = self.rho_tilde == 0.0
        prox_constants = replace(
            constants,
            M=M,
            rho=0.0,
            theta=None,
            nu=None,
            f_lower=None,
            mu=constants.mu if convex_constraint else self.rho_tilde - constants.constraint_rho,
            x_feas=constants.x_feas if convex_constraint else None,
            g_feas_value=constants.g_feas_value if convex_constraint else None,
            constraint_rho=0.0,
        )
        return ProblemInstance(base.dimension, objective, constraint, base.projection, prox_constants,
                               name=f"prox[{base.name}]")


def build_prox_subproblem(problem: ProblemInstance, center, rho_hat: float, rho_tilde: float = 0.0) -> ProblemInstance:
    return ProxSubproblem(problem, center, rho_hat, rho_tilde).build()


# ============================================================================
# Inner solvers
# ============================================================================

class InnerSolver(Protocol):
    def run(self, subproblem: ProxSubproblem, iters: int, rng: RngStream) -> SolverTrace: ...

    def solve(self, subproblem: ProxSubproblem, iters: int, rng: RngStream) -> np.ndarray: ...


@dataclass(frozen=True)
class SSGInnerSolver:
    """Switching subgradient on each prox subproblem; the policy horizon is reset to `iters`."""

    policy: StepsizePolicy

    def run(self, subproblem: ProxSubproblem, iters: int, rng: RngStream) -> SolverTrace:
        return ssg_run(subproblem.build(), self.policy.with_horizon(iters), subproblem.center, rng,
                       checkpoint_every=1)

    def solve(self, subproblem: ProxSubproblem, iters: int, rng: RngStream) -> np.ndarray:
        trace = self.run(subproblem, iters, rng)
        return sample_output(trace, rng=rng.child(2)).x_tau


@dataclass(frozen=True)
class ConExInnerSolver:
    """
    Parameter schedule of a constraint-extrapolation inner solver:
    theta_t = t/(t+1), eta_t = c1 (t+1), tau_t = c2/(t+1). Only the
    schedule and its configuration are provided.
    """

    c1: float
    c2: float

    def theta(self, t: int) -> float:
        return t / (t + 1.0)

    def eta(self, t: int) -> float:
        return self.c1 * (t + 1.0)

    def tau(self, t: int) -> float:
        return self.c2 / (t + 1.0)

    def to_dict(self) -> Dict[str, float]:
        return {"solver": "conex", "c1": self.c1, "c2": self.c2}

    def run(self, subproblem: ProxSubproblem, iters: int, rng: RngStream) -> SolverTrace:
        raise NotImplementedError("ConEx inner updates are not implemented; use SSGInnerSolver")

    def solve(self, subproblem: ProxSubproblem, iters: int, rng: RngStream) -> np.ndarray:
        raise NotImplementedError("ConEx inner updates are not implemented; use SSGInnerSolver")


# ============================================================================
# Double loop
# ============================================================================

def ipp_run(problem: ProblemInstance, outer_iters: int, inner_policy: StepsizePolicy, inner_iters: int,
            rho_hat: float, rho_tilde: float, x0, rng: RngStream, center_rule: str = "output",
            checkpoint_every: int = 1, inner_solver: Optional[InnerSolver] = None) -> SolverTrace:
    """
    Each outer step solves the prox subproblem at the current center for
    `inner_iters` iterations. The next center is the inner output drawn
    per the policy's output mode (`center_rule="output"`) or the last
    inner iterate (`center_rule="last"`). Global iteration k*inner_iters + t
    indexes inner iteration t of outer step k.
    """
    if inner_iters < 1 or outer_iters < 1:
        raise RegimeError("ipp_run needs at least one outer and one inner iteration")
    if center_rule not in ("output", "last"):
        raise RegimeError(f"Unknown center rule '{center_rule}'")
    solver = inner_solver or SSGInnerSolver(inner_policy)

    center = project(problem, x0)
    centers = [center.copy()]
    I_parts, J_parts, eta_parts, g_parts = [], [], [], []
    checkpoints: Dict[int, np.ndarray] = {}
    f_values: Dict[int, float] = {}
    times: Dict[int, float] = {}
    stalled = []
    elapsed = 0.0

    logger.info("IPP on %s: %d outer x %d inner, rho_hat=%.4g, rho_tilde=%.4g",
                problem.name, outer_iters, inner_iters, rho_hat, rho_tilde)
    for k in range(outer_iters):
        subproblem = ProxSubproblem(problem, center, rho_hat, rho_tilde)
        stream = rng.child(k)
        try:
            trace = solver.run(subproblem, inner_iters, stream)
            if center_rule == "last":
                center = trace.final_iterate
            else:
                center = sample_output(trace, rng=stream.child(2)).x_tau
        except NoFeasibleIterateError as err:
            raise NoFeasibleIterateError("Inner solver produced no usable iterate",
                                         min_g=err.min_g, outer_index=k) from err
        centers.append(center.copy())

        offset = k * inner_iters
        I_parts.append(trace.index_set_I + offset)
        J_parts.append(trace.index_set_J + offset)
        eta_parts.append(trace.eta_sequence)
        g_parts.append(trace.g_values)
        stalled.extend(t + offset for t in trace.stalled)
        for t in range(inner_iters):
            if is_checkpoint(offset + t, checkpoint_every):
                x = trace.checkpoints[t]
                checkpoints[offset + t] = x
                f_values[offset + t] = eval_objective(problem, x).value
                times[offset + t] = elapsed + trace.checkpoint_times[t]
        elapsed += trace.checkpoint_times[inner_iters]

    total = outer_iters * inner_iters
    checkpoints[total] = center.copy()
    f_values[total] = eval_objective(problem, center).value
    times[total] = elapsed
    return SolverTrace(
        T=total,
        S=0,
        index_set_I=np.concatenate(I_parts),
        index_set_J=np.concatenate(J_parts),
        eta_sequence=np.concatenate(eta_parts),
        g_values=np.concatenate(g_parts),
        checkpoints=checkpoints,
        f_values=f_values,
        final_iterate=center.copy(),
        output_mode=inner_policy.output_mode,
        seed_record=rng.record(),
        stalled=stalled,
        checkpoint_times=times,
        outer_centers=centers,
    )
