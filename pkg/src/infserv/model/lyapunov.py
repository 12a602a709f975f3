"""Polynomial Lyapunov functions of the elapsed times and their generator terms."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .laws import ArrivalLaw, ServiceLaw
from .state import SystemState


class InadmissibleParameters(ValueError):
    pass


@dataclass(frozen=True)
class LyapunovParams:
    """Constants ``(C0, m, a, ell, k)`` of the polynomial drift criterion."""

    C0: float
    m: float
    a: float
    ell: float
    k: float

    def __post_init__(self):
        if not self.C0 > 0:
            raise ValueError(f"C0 must be positive, got {self.C0}")
        if not self.m > 1:
            raise ValueError(f"m must exceed 1, got {self.m}")
        if not self.a > 1:
            raise ValueError(f"a must exceed 1, got {self.a}")
        if not self.ell > 0:
            raise ValueError(f"ell must be positive, got {self.ell}")
        if not 0 < self.k < self.ell:
            raise ValueError(f"k must lie in (0, ell) = (0, {self.ell}), got {self.k}")

    @property
    def a_prime(self) -> float:
        return self.a + self.ell / self.m

    def threshold(self, exponent: float, Lambda: float) -> float:
        """``exponent * (m + Lambda * 2**exponent)``, the bound C0 has to beat."""
        return exponent * (self.m + Lambda * 2.0 ** exponent)

    def main_margin(self, Lambda: float) -> float:
        return self.C0 - self.threshold(self.a + (self.ell + 1) / self.m, Lambda)

    def weak_margin(self, Lambda: float) -> float:
        return self.C0 - self.threshold(self.a, Lambda)

    def aprime_margin(self, Lambda: float) -> float:
        return self.C0 - self.threshold(self.a_prime, Lambda)

    def admissible(self, Lambda: float) -> bool:
        return self.main_margin(Lambda) > 0


def _power_sum(x: SystemState, m: float) -> float:
    return math.fsum((1.0 + v) ** m for v in x.elapsed)


def lyapunov(x: SystemState, m: float, a: float) -> float:
    """``(sum_j (1 + x_j)^m)^a``; zero on the empty system."""
    if not (m > 0 and a > 0):
        raise ValueError(f"lyapunov needs m, a > 0, got m={m}, a={a}")
    if x.n == 0:
        return 0.0
    return _power_sum(x, m) ** a


def lyapunov_time(t: float, x: SystemState, m: float, a: float, k: float) -> float:
    """Time-weighted version ``(1 + t)^k * L_{m,a}(x)``."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    return (1.0 + t) ** k * lyapunov(x, m, a)


def _pow_diff_up(S: float, a: float) -> float:
    # (1 + S)^a - S^a without cancellation
    return S ** a * math.expm1(a * math.log1p(1.0 / S))


def _pow_diff_down(S: float, rest: float, a: float) -> float:
    # S^a - rest^a for 0 <= rest <= S
    if rest <= 0.0:
        return S ** a
    return -(S ** a) * math.expm1(a * math.log(rest / S))


def generator_terms(x: SystemState, arr: ArrivalLaw, svc: ServiceLaw,
                    m: float, a: float) -> tuple[float, float, float]:
    """Arrival gain, service loss and ageing terms of the generator applied to
    ``L_{m,a}`` at ``x``; the drift is ``I1 - I2 + I3``."""
    if x.n == 0:
        raise ValueError("generator decomposition is defined off the empty system only")
    terms = [(1.0 + v) ** m for v in x.elapsed]
    S = math.fsum(terms)
    I1 = arr.rate(x) * _pow_diff_up(S, a)
    I2 = 0.0
    for i, v in enumerate(x.elapsed):
        rest = math.fsum(terms[:i] + terms[i + 1:])
        I2 += float(svc.hazard(v)) * _pow_diff_down(S, rest, a)
    I3 = a * m * _power_sum(x, m - 1.0) * S ** (a - 1.0)
    return I1, I2, I3


def drift(x: SystemState, arr: ArrivalLaw, svc: ServiceLaw, m: float, a: float) -> float:
    I1, I2, I3 = generator_terms(x, arr, svc, m, a)
    return I1 - I2 + I3


def drift_upper_bound(x: SystemState, params: LyapunovParams, Lambda: float) -> float:
    """``-(C0 - Lambda a 2^a - m a) * L_{m-1,1}(x) * L_{m,a-1}(x)``, negative off S0."""
    if x.n == 0:
        raise ValueError("drift bound is defined off the empty system only")
    m, a = params.m, params.a
    coef = params.weak_margin(Lambda)
    if not coef > 0:
        raise InadmissibleParameters(
            f"C0={params.C0} does not exceed a(m + Lambda 2^a)={params.threshold(a, Lambda)}")
    return -coef * _power_sum(x, m - 1.0) * _power_sum(x, m) ** (a - 1.0)
