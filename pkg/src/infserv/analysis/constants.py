"""Explicit constants of the coupling argument."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..model.lyapunov import InadmissibleParameters, LyapunovParams


@dataclass(frozen=True)
class ProofConstants:
    p01: float  # unit-time probability that both empty copies jump together
    pK0: float  # unit-time probability to empty both copies from the compact set
    C1: float  # bound on the stationary integral of L_{m, a + ell/m}
    pK0_clamped: bool
    inputs: dict = field(default_factory=dict)


def joint_jump_probability(lower0: float, upper0: float) -> float:
    """``(1 - exp(-lower0)) * exp(-2 (upper0 - lower0))``."""
    if not 0 < lower0 <= upper0:
        raise ValueError("need 0 < lower0 <= upper0")
    return -math.expm1(-lower0) * math.exp(-2.0 * (upper0 - lower0))


def joint_emptying_probability(C0: float, N: float) -> tuple[float, bool]:
    """``(C0 / (N + 2))^2`` clamped to 1; the flag tells whether it was clamped."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    raw = (C0 / ((N + 1.0) + 1.0)) ** 2
    return min(raw, 1.0), raw > 1.0


def stationary_integral_bound(params: LyapunovParams, Lambda: float) -> float:
    """``Lambda (C0 + 1) / ((Lambda + C0 + 1) (C0 - (a + ell/m)(m + Lambda)))``."""
    C0, m, a, ell = params.C0, params.m, params.a, params.ell
    denom = C0 - (a + ell / m) * (m + Lambda)
    if denom <= 0:
        raise InadmissibleParameters(
            f"C1 undefined: C0={C0} <= (a + ell/m)(m + Lambda)={C0 - denom}")
    return Lambda * (C0 + 1.0) / ((Lambda + C0 + 1.0) * denom)


def proof_constants(params: LyapunovParams, Lambda: float, lower0: float, upper0: float,
                    N: float) -> ProofConstants:
    if not Lambda > 0:
        raise ValueError("Lambda must be positive")
    pK0, clamped = joint_emptying_probability(params.C0, N)
    return ProofConstants(
        joint_jump_probability(lower0, upper0), pK0, stationary_integral_bound(params, Lambda),
        clamped,
        {"C0": params.C0, "m": params.m, "a": params.a, "ell": params.ell, "k": params.k,
         "Lambda": Lambda, "lower0": lower0, "upper0": upper0, "N": N})
