"""
Stepsize schedules and analytic constants
=========================================

Every (eps_t, eta_t, S, T, B) schedule the convergence theory prescribes,
plus the multiplier bounds and sharpness constants those schedules are
built from.

Schedules:
    schedule_convex_static          convex g, constant eps_t and eta_t
    schedule_convex_diminishing     convex g, 1/sqrt(t+1) sequences, S = T/2
    schedule_strongly_convex        strongly convex g, eps_t = 0
    schedule_weakly_convex          weakly convex sharp g, Polyak steps on J
    schedule_bounded_S_convex       convex g with bounded feasible set
    schedule_stochastic             semi- and fully stochastic variants
    manual_schedule                 grid-searched constants
"""

import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Dict, NamedTuple, Optional

import numpy as np

from core import ContractViolation, InvalidSlaterError, RegimeError


class TheoryWarning(UserWarning):
    """A theoretical assumption looks violated; the computation continues."""


class PolicyKind(str, Enum):
    STATIC_CONVEX = "StaticConvex"
    DIMINISHING_CONVEX = "DiminishingConvex"
    STRONGLY_CONVEX_STATIC = "StronglyConvexStatic"
    STRONGLY_CONVEX_DIMINISHING = "StronglyConvexDiminishing"
    WEAKLY_CONVEX_SWITCHING = "WeaklyConvexSwitching"
    BOUNDED_S_CONVEX_SWITCHING = "BoundedSConvexSwitching"
    STOCHASTIC_STATIC = "StochasticStatic"
    STOCHASTIC_DIMINISHING = "StochasticDiminishing"
    MANUAL_GRID = "ManualGrid"


class OutputMode(str, Enum):
    OUTPUT_I = "OutputI"
    OUTPUT_II = "OutputII"


class Decay(str, Enum):
    CONSTANT = "constant"
    INV_SQRT = "inv_sqrt"
    HARMONIC = "harmonic"


def _decay_factor(decay: Decay, t):
    if decay is Decay.CONSTANT:
        return np.ones_like(t, dtype=np.float64) if isinstance(t, np.ndarray) else 1.0
    if decay is Decay.INV_SQRT:
        return 1.0 / np.sqrt(t + 1.0)
    return 1.0 / (t + 1.0)


def _ceil(value: float) -> int:
    # Snap closed forms such as 25/(4*0.1**4) that land an ulp off an integer.
    nearest = round(value)
    if math.isclose(value, nearest, rel_tol=1e-12, abs_tol=1e-12):
        return int(nearest)
    return int(math.ceil(value))


def _ceil_even(value: float) -> int:
    T = max(_ceil(value), 2)
    return T + (T % 2)


# ============================================================================
# Policy object
# ============================================================================

@dataclass(frozen=True)
class StepsizePolicy:
    """
    Immutable schedule producing eps_t and eta_t.

    eps_t = eps_base * decay(t) and eta_t = eta_base * decay(t) on the
    objective branch. When `polyak_scale` is set, the constraint branch
    uses polyak_scale * g_+ / ||zeta_g||^2 instead of eta_t.
    """

    kind: PolicyKind
    T: int
    eps_base: float
    eta_base: float
    S: int = 0
    eps_decay: Decay = Decay.CONSTANT
    eta_decay: Decay = Decay.CONSTANT
    polyak_scale: Optional[float] = None
    batch_size: int = 1
    output_mode: OutputMode = OutputMode.OUTPUT_I
    parameters: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        object.__setattr__(self, "eps_decay", Decay(self.eps_decay))
        object.__setattr__(self, "eta_decay", Decay(self.eta_decay))
        object.__setattr__(self, "output_mode", OutputMode(self.output_mode))
        if self.T < 1:
            raise RegimeError(f"T must be at least 1, got {self.T}")
        if not 0 <= self.S < self.T:
            raise RegimeError(f"S must satisfy 0 <= S < T, got S={self.S}, T={self.T}")
        if not self.eta_base > 0 or not np.isfinite(self.eta_base):
            raise RegimeError(f"eta must be positive and finite, got {self.eta_base}")
        if self.eps_base < 0 or not np.isfinite(self.eps_base):
            raise RegimeError(f"eps_t must be nonnegative and finite, got {self.eps_base}")
        if self.batch_size < 1:
            raise RegimeError(f"Batch size must be at least 1, got {self.batch_size}")
        if self.polyak_scale is not None and not self.polyak_scale > 0:
            raise RegimeError(f"Polyak scale must be positive, got {self.polyak_scale}")

    @property
    def uses_polyak(self) -> bool:
        return self.polyak_scale is not None

    def eps(self, t: int) -> float:
        return float(self.eps_base * _decay_factor(self.eps_decay, t))

    def eta(self, t: int) -> float:
        return float(self.eta_base * _decay_factor(self.eta_decay, t))

    def eta_sequence(self) -> np.ndarray:
        t = np.arange(self.T, dtype=np.float64)
        return self.eta_base * _decay_factor(self.eta_decay, t)

    def eps_sequence(self) -> np.ndarray:
        t = np.arange(self.T, dtype=np.float64)
        return self.eps_base * _decay_factor(self.eps_decay, t)

    def eta_sum(self) -> float:
        """Sum of objective-branch stepsizes over the recorded window [S, T)."""
        return float(self.eta_sequence()[self.S:].sum())

    def with_horizon(self, T: int) -> "StepsizePolicy":
        """Same eps_t/eta_t formulas on a different horizon; S = T/2 policies keep S = T/2."""
        S = 0 if self.S == 0 else T // 2
        return replace(self, T=int(T), S=S)

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        for key in ("kind", "eps_decay", "eta_decay", "output_mode"):
            data[key] = data[key].value
        data["parameters"] = dict(self.parameters)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "StepsizePolicy":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ContractViolation(f"Unknown policy fields: {sorted(unknown)}")
        return cls(**data)


# ============================================================================
# Constants
# ============================================================================

class WeakMultiplierBound(NamedTuple):
    bound: float
    radius: float


def _require_regime(rho_hat: float, rho: float):
    if not rho_hat > rho:
        raise RegimeError(f"Requires rho_hat > rho, got rho_hat={rho_hat}, rho={rho}")


def lambda_bound_convex(M: float, D: float, rho_hat: float, g_feas: float) -> float:
    """Multiplier bound (MD + rho_hat D^2) / (-g(x_feas)) for convex g."""
    if not g_feas < 0:
        raise InvalidSlaterError(f"Slater value must be negative, got g_feas={g_feas}")
    if M < 0 or D < 0 or rho_hat < 0:
        raise RegimeError("M, D and rho_hat must be nonnegative")
    return (M * D + rho_hat * D ** 2) / (-g_feas)


def lambda_bound_weakly_convex(M: float, theta: float, rho_hat: float, rho: float) -> WeakMultiplierBound:
    """2M / sqrt(2 theta (rho_hat - rho)), with the companion radius M / rho_hat."""
    _require_regime(rho_hat, rho)
    if not theta > 0:
        raise RegimeError(f"theta must be positive, got {theta}")
    return WeakMultiplierBound(2.0 * M / math.sqrt(2.0 * theta * (rho_hat - rho)), M / rho_hat)


def nu_sharpness(theta: float, rho_hat: float, rho: float, M: Optional[float] = None) -> float:
    _require_regime(rho_hat, rho)
    if not theta > 0:
        raise RegimeError(f"theta must be positive, got {theta}")
    nu = math.sqrt(2.0 * theta * (rho_hat - rho))
    if M is not None and nu > 2.0 * M:
        warnings.warn(f"nu={nu:.6g} exceeds 2M={2 * M:.6g}; the constants are inconsistent with "
                      "any instance satisfying the sharpness bound", TheoryWarning, stacklevel=2)
    return nu


def lambda_bound_equality(M: float, D: float, rho_hat: float, h_feas: float, l: int,
                          pinv_norm: float, dist_boundary: float) -> float:
    """Multiplier bound when g = max{h, ||Ax - b||_inf} with l equality rows."""
    if not h_feas < 0:
        raise RegimeError(f"h(x_feas) must be negative, got {h_feas}")
    if not dist_boundary > 0:
        raise RegimeError(f"Distance to the boundary of X must be positive, got {dist_boundary}")
    if l < 1:
        raise RegimeError(f"Need at least one equality row, got l={l}")
    slack = -h_feas
    base = (M * D + rho_hat * D ** 2) / slack
    coupling = ((M ** 2 * D + rho_hat * M * D ** 2) / slack
                + (M * D + rho_hat * D ** 2) / dist_boundary
                + M + rho_hat * D)
    return base + math.sqrt(l) * pinv_norm * coupling


def nu_prime(g_feas: float, D: float) -> float:
    if not g_feas < 0:
        raise InvalidSlaterError(f"Slater value must be negative, got g_feas={g_feas}")
    if not D > 0:
        raise RegimeError(f"D must be positive, got {D}")
    return -g_feas / D


def lambda_bound_bounded_S(M: float, D: float, rho_hat: float, nu_prime_value: float, g_feas: float) -> float:
    if not g_feas < 0:
        raise InvalidSlaterError(f"Slater value must be negative, got g_feas={g_feas}")
    return (M + rho_hat * (D + nu_prime_value)) * D / (-g_feas)


def stationarity_constant_weakly_convex(Lambda_prime: float, rho_hat: float, rho: float) -> float:
    _require_regime(rho_hat, rho)
    return 2.0 * math.sqrt((1.0 + Lambda_prime) / (rho_hat - rho))


def stationarity_constant_bounded_S(nu_prime_value: float, Lambda_dprime: float, M: float,
                                    rho_hat: float, rho: float) -> float:
    _require_regime(rho_hat, rho)
    return math.sqrt(nu_prime_value * (1.0 + Lambda_dprime) / (2.0 * M * (rho_hat - rho)))


def rescaled_eps(eps: float, C: float) -> float:
    """Target to pass a schedule whose guarantee is C * eps."""
    return eps / max(C, 1.0)


def polyak_contraction_factor(nu: float, M: float) -> float:
    return 1.0 - nu ** 2 / (8.0 * M ** 2)


def scaled_polyak_contraction_factor(nu_prime_value: float, M: float) -> float:
    return 1.0 - 3.0 * nu_prime_value ** 3 / (4.0 * M ** 3)


@dataclass(frozen=True)
class ConstantReport:
    Lambda: Optional[float] = None
    LambdaPrime: Optional[float] = None
    LambdaDoublePrime: Optional[float] = None
    LambdaEq: Optional[float] = None
    nu: Optional[float] = None
    nuPrime: Optional[float] = None
    C: Optional[float] = None
    CPrime: Optional[float] = None

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value is not None and (not np.isfinite(value) or value < 0):
                raise RegimeError(f"{name}={value} is not a finite nonnegative constant")

    def as_dict(self) -> Dict[str, Optional[float]]:
        return asdict(self)


def constant_report(M: float, rho: float, rho_hat: float, D: Optional[float] = None,
                    g_feas: Optional[float] = None, theta: Optional[float] = None,
                    equality: Optional[Dict[str, float]] = None) -> ConstantReport:
    """
    Every constant derivable from what is known. `equality` holds
    h_feas, l, pinv_norm and dist_boundary for the equality reduction.
    """
    values: Dict[str, float] = {}
    if D is not None and g_feas is not None:
        values["Lambda"] = lambda_bound_convex(M, D, rho_hat, g_feas)
        values["nuPrime"] = nu_prime(g_feas, D)
        values["LambdaDoublePrime"] = lambda_bound_bounded_S(M, D, rho_hat, values["nuPrime"], g_feas)
        if rho_hat > rho:
            values["CPrime"] = stationarity_constant_bounded_S(
                values["nuPrime"], values["LambdaDoublePrime"], M, rho_hat, rho)
    if theta is not None:
        values["LambdaPrime"] = lambda_bound_weakly_convex(M, theta, rho_hat, rho).bound
        values["nu"] = nu_sharpness(theta, rho_hat, rho, M=M)
        values["C"] = stationarity_constant_weakly_convex(values["LambdaPrime"], rho_hat, rho)
    if equality is not None and D is not None:
        values["LambdaEq"] = lambda_bound_equality(M, D, rho_hat, equality["h_feas"], int(equality["l"]),
                                                   equality["pinv_norm"], equality["dist_boundary"])
    return ConstantReport(**values)


# ============================================================================
# Deterministic schedules
# ============================================================================

def _require_eps(eps: float):
    if not eps > 0:
        raise RegimeError(f"eps must be positive, got {eps}")


def schedule_convex_static(eps: float, M: float, D: float, rho: float, rho_hat: float,
                           Lambda: float) -> StepsizePolicy:
    _require_regime(rho_hat, rho)
    _require_eps(eps)
    gap = rho_hat - rho
    eps_t = eps ** 2 * gap / (1.0 + Lambda)
    eta_t = 2.0 * eps ** 2 * gap / (5.0 * (1.0 + Lambda) * M ** 2)
    T = _ceil(25.0 * M ** 2 * D ** 2 * (1.0 + Lambda) ** 2 / (4.0 * eps ** 4 * gap ** 2))
    return StepsizePolicy(PolicyKind.STATIC_CONVEX, T=max(T, 1), eps_base=eps_t, eta_base=eta_t,
                          output_mode=OutputMode.OUTPUT_I,
                          parameters=dict(eps=eps, M=M, D=D, rho=rho, rho_hat=rho_hat, Lambda=Lambda))


def schedule_convex_diminishing(eps: float, M: float, D: float, rho: float, rho_hat: float,
                                Lambda: float) -> StepsizePolicy:
    _require_regime(rho_hat, rho)
    _require_eps(eps)
    gap = rho_hat - rho
    T = _ceil_even(50.0 * M ** 2 * D ** 2 * (1.0 + Lambda) ** 2 / (eps ** 4 * gap ** 2))
    return StepsizePolicy(PolicyKind.DIMINISHING_CONVEX, T=T, S=T // 2,
                          eps_base=5.0 * M * D, eta_base=D / M,
                          eps_decay=Decay.INV_SQRT, eta_decay=Decay.INV_SQRT,
                          output_mode=OutputMode.OUTPUT_I,
                          parameters=dict(eps=eps, M=M, D=D, rho=rho, rho_hat=rho_hat, Lambda=Lambda))


def schedule_strongly_convex(eps: float, M: float, D: float, rho: float, rho_hat: float, mu: float,
                             variant: str = "static") -> StepsizePolicy:
    """eps_t = 0: a mu-strongly convex constraint needs no tolerance."""
    if not mu > 0:
        raise RegimeError(f"mu must be positive, got {mu}")
    _require_regime(rho_hat, rho)
    _require_eps(eps)
    gap = rho_hat - rho
    curvature = min(gap ** 2, mu ** 2 / 4.0)
    params = dict(eps=eps, M=M, D=D, rho=rho, rho_hat=rho_hat, mu=mu)
    if variant == "static":
        T = _ceil(M ** 2 * D ** 2 / (eps ** 4 * curvature))
        return StepsizePolicy(PolicyKind.STRONGLY_CONVEX_STATIC, T=max(T, 1), eps_base=0.0,
                              eta_base=eps ** 2 * min(gap, mu / 2.0) / M ** 2,
                              output_mode=OutputMode.OUTPUT_II, parameters=params)
    if variant == "diminishing":
        T = _ceil_even(4.0 * M ** 2 * D ** 2 / (eps ** 4 * curvature))
        return StepsizePolicy(PolicyKind.STRONGLY_CONVEX_DIMINISHING, T=T, S=T // 2, eps_base=0.0,
                              eta_base=D / M, eta_decay=Decay.INV_SQRT,
                              output_mode=OutputMode.OUTPUT_II, parameters=params)
    raise RegimeError(f"Unknown strongly convex variant '{variant}'")


def weakly_convex_horizon(eps: float, M: float, rho: float, nu: float, f0: float, f_lower: float,
                          rho_hat: float, Lambda_prime: float) -> int:
    """Iteration count for Output II under the weakly convex schedule."""
    _require_regime(rho_hat, rho)
    radius = min(eps ** 2 / M, nu / (4.0 * rho) if rho > 0 else math.inf)
    numerator = 8.0 * M ** 2 * (f0 - f_lower + 3.0 * M ** 2 / (2.0 * rho_hat))
    return max(_ceil(numerator / (rho_hat * (1.0 + Lambda_prime) * nu * eps ** 2 * radius)), 1)


def schedule_weakly_convex(eps: float, M: float, rho: float, nu: float, T: Optional[int] = None,
                           f0: Optional[float] = None, f_lower: Optional[float] = None,
                           rho_hat: Optional[float] = None, Lambda_prime: Optional[float] = None,
                           eps_bar: Optional[float] = None) -> StepsizePolicy:
    """
    Keeps iterates eps^2-feasible from a feasible start: constant eps_t and
    eta_t on I, Polyak g/||zeta_g||^2 on J.
    """
    if not nu > 0:
        raise RegimeError(f"nu must be positive, got {nu}")
    _require_eps(eps)
    if eps_bar is not None and eps > eps_bar:
        warnings.warn(f"eps={eps:.6g} exceeds the declared eps_bar={eps_bar:.6g}",
                      TheoryWarning, stacklevel=2)
    radius = min(eps ** 2 / M, nu / (4.0 * rho) if rho > 0 else math.inf)
    if T is None:
        if None in (f0, f_lower, rho_hat, Lambda_prime):
            raise RegimeError("Weakly convex schedule needs T or (f0, f_lower, rho_hat, Lambda_prime)")
        T = weakly_convex_horizon(eps, M, rho, nu, f0, f_lower, rho_hat, Lambda_prime)
    return StepsizePolicy(PolicyKind.WEAKLY_CONVEX_SWITCHING, T=int(T),
                          eps_base=nu / 4.0 * radius, eta_base=nu / (4.0 * M ** 2) * radius,
                          polyak_scale=1.0, output_mode=OutputMode.OUTPUT_II,
                          parameters=dict(eps=eps, M=M, rho=rho, nu=nu))


def schedule_bounded_S_convex(eps: float, M: float, nu_prime_value: float, D: Optional[float] = None,
                              T: Optional[int] = None) -> StepsizePolicy:
    if not nu_prime_value > 0:
        raise RegimeError(f"nu' must be positive, got {nu_prime_value}")
    _require_eps(eps)
    radius = min(eps ** 2 / M, nu_prime_value)
    if T is None:
        if D is None:
            raise RegimeError("Bounded-S schedule needs T or D")
        T = _ceil(8.0 * M ** 3 * D ** 2 / (nu_prime_value ** 3 * min(eps ** 4 / M ** 2, nu_prime_value ** 2))) + 1
    return StepsizePolicy(PolicyKind.BOUNDED_S_CONVEX_SWITCHING, T=int(T),
                          eps_base=nu_prime_value / 2.0 * radius,
                          eta_base=nu_prime_value / (2.0 * M ** 2) * radius,
                          polyak_scale=nu_prime_value / (2.0 * M), output_mode=OutputMode.OUTPUT_I,
                          parameters=dict(eps=eps, M=M, nu_prime=nu_prime_value, D=D or 0.0))


# ============================================================================
# Stochastic schedules
# ============================================================================

def stochastic_E_bound(delta: float, variant: str = "semi") -> float:
    """Smallest admissible E for the diminishing stochastic schedules."""
    if not 0 < delta < 1:
        raise RegimeError(f"delta must lie in (0, 1), got {delta}")
    log8 = math.log(8.0 / delta)
    start = 4.0 if variant == "semi" else 8.0
    return (start + 2.0 * math.pi / math.sqrt(6.0) * max(math.sqrt(12.0 * log8), 4.0 / 3.0 * log8)
            + 8.0 * math.sqrt(3.0 * math.log(4.0 / delta)))


def schedule_stochastic(eps: float, M: float, D: float, rho: float, rho_hat: float, Lambda: float,
                        delta: float, sigma: float = 0.0, variant: str = "semi", case: str = "I",
                        E: Optional[float] = None) -> StepsizePolicy:
    """
    High-probability schedules. variant 'semi' samples only constraint
    values (B = 1, sigma = 0); 'full' also samples subgradients and sizes
    the value batch B from sigma.
    """
    _require_regime(rho_hat, rho)
    _require_eps(eps)
    if not 0 < delta < 1:
        raise RegimeError(f"delta must lie in (0, 1), got {delta}")
    if sigma < 0:
        raise RegimeError(f"sigma must be nonnegative, got {sigma}")
    if variant not in ("semi", "full"):
        raise RegimeError(f"Unknown stochastic variant '{variant}'")
    if variant == "semi":
        sigma = 0.0
    gap = rho_hat - rho
    scale = M ** 2 * D ** 2 * (1.0 + Lambda) ** 2 / (eps ** 4 * gap ** 2)
    params = dict(eps=eps, M=M, D=D, rho=rho, rho_hat=rho_hat, Lambda=Lambda, delta=delta, sigma=sigma)

    if case == "I":
        log8 = math.log(8.0 / delta)
        T = _ceil(max(25.0 / 4.0 * scale,
                      max(12.0 * log8, 16.0 / 9.0 * log8 ** 2),
                      300.0 * math.log(4.0 / delta) * scale))
        B = 1
        if variant == "full":
            B = max(_ceil(300.0 * sigma ** 2 * math.log(4.0 * T / delta) * (1.0 + Lambda) ** 4
                          / (eps ** 4 * gap ** 2)), 1)
        params["B"] = B
        return StepsizePolicy(PolicyKind.STOCHASTIC_STATIC, T=T,
                              eps_base=eps ** 2 * gap / (1.0 + Lambda),
                              eta_base=2.0 * eps ** 2 * gap / (5.0 * (1.0 + Lambda) * M ** 2),
                              batch_size=B, output_mode=OutputMode.OUTPUT_I, parameters=params)

    if case == "II":
        bound = stochastic_E_bound(delta, variant)
        if E is None:
            E = bound
        elif E < bound:
            raise RegimeError(f"E={E:.6g} is below its lower bound {bound:.6g}")
        T = _ceil_even(2.0 * E ** 2 * scale)
        B = 1
        if variant == "full":
            B = max(_ceil(3.0 * T * sigma ** 2 * math.log(2.0 * T / delta) * (1.0 + Lambda) ** 2
                          / (2.0 * M ** 2 * D ** 2)), 1)
        params.update(E=E, B=B)
        return StepsizePolicy(PolicyKind.STOCHASTIC_DIMINISHING, T=T, S=T // 2,
                              eps_base=E * M * D, eta_base=D / M,
                              eps_decay=Decay.INV_SQRT, eta_decay=Decay.INV_SQRT,
                              batch_size=B, output_mode=OutputMode.OUTPUT_I, parameters=params)

    raise RegimeError(f"Unknown case '{case}' (expected 'I' or 'II')")


# ============================================================================
# Manual grids
# ============================================================================

def manual_schedule(T: int, eps: float, eta: float, diminishing: bool = False,
                    eps_decay: Optional[str] = None, eta_decay: Optional[str] = None,
                    polyak_scale: Optional[float] = None, S: int = 0,
                    output_mode: str = OutputMode.OUTPUT_I.value, batch_size: int = 1) -> StepsizePolicy:
    """Tuned constants; `diminishing` applies 1/sqrt(t+1) to both sequences."""
    default = Decay.INV_SQRT if diminishing else Decay.CONSTANT
    return StepsizePolicy(PolicyKind.MANUAL_GRID, T=int(T), S=int(S), eps_base=float(eps), eta_base=float(eta),
                          eps_decay=Decay(eps_decay) if eps_decay else default,
                          eta_decay=Decay(eta_decay) if eta_decay else default,
                          polyak_scale=polyak_scale, batch_size=batch_size,
                          output_mode=OutputMode(output_mode),
                          parameters=dict(eps=float(eps), eta=float(eta)))
