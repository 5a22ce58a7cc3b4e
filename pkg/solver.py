"""
Switching subgradient solvers
=============================

ssg_run                 deterministic switching subgradient method
sssg_run                stochastic variant (batched value samples, one subgradient sample)
sample_output           eta-weighted output index draw (Output I / Output II)
polyak_step             Polyak stepsize for the constraint branch
polyak_feasibility_run  pure feasibility solver on g_+

At iteration t the method steps along a subgradient of f when
g(x_t) <= eps_t (t joins I) and along a subgradient of g otherwise
(t joins J). Only t >= S is recorded in I/J. Every iterate is
projected onto X.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Union

import numpy as np

from core import (
    ContractViolation,
    NoFeasibleIterateError,
    NonFiniteIterateError,
    OracleError,
    ProblemInstance,
    RngStream,
    deterministic,
    project,
    stochastic,
)
from schedules import OutputMode, StepsizePolicy

logger = logging.getLogger(__name__)


@dataclass
class SolverTrace:
    T: int
    S: int
    index_set_I: np.ndarray
    index_set_J: np.ndarray
    eta_sequence: np.ndarray
    g_values: np.ndarray
    checkpoints: Dict[int, np.ndarray]
    f_values: Dict[int, float]
    final_iterate: np.ndarray
    output_mode: OutputMode = OutputMode.OUTPUT_I
    seed_record: Dict[str, object] = field(default_factory=dict)
    stalled: List[int] = field(default_factory=list)
    checkpoint_times: Dict[int, float] = field(default_factory=dict, compare=False)
    distances: Optional[np.ndarray] = None
    outer_centers: Optional[List[np.ndarray]] = None
    converged: bool = False
    replay: Optional[Callable[[int], np.ndarray]] = field(default=None, compare=False, repr=False)

    @property
    def iterates(self) -> List[np.ndarray]:
        """Stored iterates in iteration order (checkpoints only unless every iterate was kept)."""
        return [self.checkpoints[t] for t in sorted(self.checkpoints)]

    def iterate(self, t: int) -> np.ndarray:
        if t in self.checkpoints:
            return self.checkpoints[t]
        if self.replay is None:
            raise ContractViolation(f"Iterate {t} was not stored and this trace cannot be replayed")
        return self.replay(t)


@dataclass(frozen=True)
class OutputSample:
    tau: int
    x_tau: np.ndarray
    mode: OutputMode


def polyak_step(g_value: float, subgrad_norm_sq: float, scale: float = 1.0) -> float:
    """scale * g / ||zeta||^2, and 0 when zeta = 0."""
    if g_value < 0:
        raise ContractViolation(f"Polyak step expects g_+ >= 0, got {g_value}")
    if subgrad_norm_sq < 0:
        raise ContractViolation(f"Squared norm must be nonnegative, got {subgrad_norm_sq}")
    if subgrad_norm_sq == 0:
        return 0.0
    return scale * g_value / subgrad_norm_sq


def is_checkpoint(t: int, every: int) -> bool:
    return t == 0 or (t + 1) % every == 0


def _switching_loop(problem: ProblemInstance, policy: StepsizePolicy, x0: np.ndarray, rng: RngStream,
                    checkpoint_every: int, sampled: bool, batch_size: int = 1,
                    stop: Optional[int] = None) -> Union[SolverTrace, np.ndarray]:
    """
    Shared loop for the deterministic and stochastic methods. With `stop`
    the loop runs `stop` iterations and records nothing beyond x^(stop).
    """
    if checkpoint_every < 1:
        raise ContractViolation(f"checkpoint_every must be positive, got {checkpoint_every}")
    horizon = policy.T if stop is None else stop
    recording = stop is None

    objective_exact = deterministic(problem.objective)
    constraint_exact = deterministic(problem.constraint)
    objective_sampled = stochastic(problem.objective)
    constraint_sampled = stochastic(problem.constraint)
    # Separate streams for value batches and subgradient draws.
    value_stream = rng.child(0)
    subgradient_stream = rng.child(1)

    x = project(problem, x0)
    in_I = np.zeros(horizon, dtype=bool)
    recorded = np.zeros(horizon, dtype=bool)
    etas = np.zeros(horizon)
    g_values = np.zeros(horizon)
    checkpoints: Dict[int, np.ndarray] = {}
    f_values: Dict[int, float] = {}
    times: Dict[int, float] = {}
    stalled: List[int] = []
    start = time.thread_time()

    for t in range(horizon):
        if recording and is_checkpoint(t, checkpoint_every):
            checkpoints[t] = x.copy()
            f_values[t] = objective_exact.value(x)
            times[t] = time.thread_time() - start
        try:
            if sampled:
                g_val = float(np.mean([constraint_sampled.sample_value(x, value_stream)
                                       for _ in range(batch_size)]))
                g_zeta = None
            else:
                g_result = constraint_exact.evaluate(x)
                g_val, g_zeta = g_result.value, g_result.subgradient
            g_values[t] = g_val

            if g_val <= policy.eps(t):
                in_I[t] = True
                if sampled:
                    zeta = objective_sampled.sample_subgradient(x, subgradient_stream)
                else:
                    zeta = objective_exact.evaluate(x).subgradient
                eta = policy.eta(t)
            else:
                zeta = constraint_sampled.sample_subgradient(x, subgradient_stream) if sampled else g_zeta
                if policy.uses_polyak:
                    norm_sq = float(zeta @ zeta)
                    eta = polyak_step(max(g_val, 0.0), norm_sq, policy.polyak_scale)
                    if norm_sq == 0.0:
                        stalled.append(t)
                else:
                    eta = policy.eta(t)
        except OracleError as err:
            wrapped = OracleError(err.args[0], location=err.location, iteration=t)
            wrapped.oracle = err.oracle
            raise wrapped from err

        etas[t] = eta
        recorded[t] = t >= policy.S
        moved = x - eta * zeta
        if not np.all(np.isfinite(moved)):
            raise NonFiniteIterateError(t, eta)
        x = project(problem, moved)

    if not recording:
        return x

    checkpoints[horizon] = x.copy()
    f_values[horizon] = objective_exact.value(x)
    times[horizon] = time.thread_time() - start
    if stalled:
        logger.warning("%s: zero constraint subgradient on %d iterations (first at t=%d)",
                       problem.name, len(stalled), stalled[0])

    indices = np.arange(horizon)
    return SolverTrace(
        T=horizon,
        S=policy.S,
        index_set_I=indices[in_I & recorded],
        index_set_J=indices[~in_I & recorded],
        eta_sequence=etas,
        g_values=g_values,
        checkpoints=checkpoints,
        f_values=f_values,
        final_iterate=x,
        output_mode=policy.output_mode,
        seed_record=rng.record(),
        stalled=stalled,
        checkpoint_times=times,
    )


def ssg_run(problem: ProblemInstance, policy: StepsizePolicy, x0, rng: RngStream,
            checkpoint_every: int = 1) -> SolverTrace:
    """Run exactly policy.T switching subgradient iterations from x0."""
    logger.debug("SSG on %s: %s, T=%d, S=%d", problem.name, policy.kind.value, policy.T, policy.S)
    trace = _switching_loop(problem, policy, np.asarray(x0, dtype=np.float64), rng,
                            checkpoint_every, sampled=False)
    trace.replay = lambda tau: _switching_loop(problem, policy, np.asarray(x0, dtype=np.float64), rng,
                                               checkpoint_every, sampled=False, stop=tau)
    logger.debug("SSG on %s done: |I|=%d |J|=%d", problem.name, len(trace.index_set_I), len(trace.index_set_J))
    return trace


def sssg_run(problem: ProblemInstance, policy: StepsizePolicy, x0, rng: RngStream,
             batch_size: Optional[int] = None, checkpoint_every: int = 1) -> SolverTrace:
    """
    Stochastic switching: average `batch_size` value samples, switch on
    the average, then draw one subgradient sample of the chosen function.
    I/J record the sampled switch, not the true constraint value.
    """
    batch = policy.batch_size if batch_size is None else batch_size
    if batch < 1:
        raise ContractViolation(f"batch_size must be at least 1, got {batch}")
    logger.debug("Stochastic SSG on %s: %s, T=%d, B=%d", problem.name, policy.kind.value, policy.T, batch)
    trace = _switching_loop(problem, policy, np.asarray(x0, dtype=np.float64), rng,
                            checkpoint_every, sampled=True, batch_size=batch)
    trace.replay = lambda tau: _switching_loop(problem, policy, np.asarray(x0, dtype=np.float64), rng,
                                               checkpoint_every, sampled=True, batch_size=batch, stop=tau)
    return trace


def sample_output(trace: SolverTrace, mode: Optional[OutputMode] = None,
                  rng: Optional[RngStream] = None) -> OutputSample:
    """Draw tau from I (Output I) or I u J (Output II) with probability eta_tau / sum eta."""
    mode = trace.output_mode if mode is None else OutputMode(mode)
    if rng is None:
        raise ContractViolation("sample_output needs an RngStream")
    if mode is OutputMode.OUTPUT_I:
        candidates = trace.index_set_I
    else:
        candidates = np.union1d(trace.index_set_I, trace.index_set_J)
    if candidates.size == 0:
        min_g = float(np.min(trace.g_values)) if trace.g_values.size else float("nan")
        raise NoFeasibleIterateError(f"No index available for {mode.value}", min_g=min_g)

    weights = trace.eta_sequence[candidates]
    total = weights.sum()
    probabilities = weights / total if total > 0 else np.full(candidates.size, 1.0 / candidates.size)
    tau = int(rng.choice(candidates, p=probabilities))
    return OutputSample(tau=tau, x_tau=trace.iterate(tau), mode=mode)


def polyak_feasibility_run(problem: ProblemInstance, x0, max_iters: int, target: float = 0.0,
                           scale: float = 1.0) -> SolverTrace:
    """
    Projected subgradient on g_+ with Polyak steps. Stops once
    g_+(x) <= target; every iterate is kept.
    """
    constraint = deterministic(problem.constraint)
    x = project(problem, x0)
    checkpoints = {0: x.copy()}
    g_values: List[float] = []
    etas: List[float] = []
    distances: List[float] = []
    stalled: List[int] = []
    converged = False

    for t in range(max_iters + 1):
        result = constraint.evaluate(x)
        g_values.append(result.value)
        if problem.distance_to_feasible is not None:
            distances.append(problem.distance_to_feasible(x))
        if max(result.value, 0.0) <= target:
            converged = True
            break
        if t == max_iters:
            break
        norm_sq = float(result.subgradient @ result.subgradient)
        eta = polyak_step(max(result.value, 0.0), norm_sq, scale)
        if norm_sq == 0.0:
            stalled.append(t)
        etas.append(eta)
        x = project(problem, x - eta * result.subgradient)
        checkpoints[t + 1] = x.copy()

    steps = len(etas)
    if not converged:
        logger.warning("%s: feasibility run stopped after %d steps at g_+=%.3g",
                       problem.name, steps, max(g_values[-1], 0.0))
    return SolverTrace(
        T=steps,
        S=0,
        index_set_I=np.zeros(0, dtype=int),
        index_set_J=np.arange(steps),
        eta_sequence=np.asarray(etas),
        g_values=np.asarray(g_values),
        checkpoints=checkpoints,
        f_values={},
        final_iterate=x,
        stalled=stalled,
        distances=np.asarray(distances) if distances else None,
        converged=converged,
    )
