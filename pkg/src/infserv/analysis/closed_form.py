"""Closed-form stationary laws: geometric, birth-death product form, Fortet density."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from ..model.laws import ServiceLaw

TRUNCATION_TOL = 1e-12
MAX_TERMS = 100_000


class DivergentSeries(ValueError):
    """The normalizing series of a stationary law does not converge."""


@dataclass(frozen=True)
class DiscretePMF:
    """Probabilities over an ordered support of tags (integers ``0..K`` for counts)."""

    support: tuple
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "support", tuple(self.support))
        if len(p) != len(self.support):
            raise ValueError("support and probabilities differ in length")
        if np.any(p < 0):
            raise ValueError("negative probability")
        if abs(math.fsum(p) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {math.fsum(p)!r}, not 1")

    @classmethod
    def from_weights(cls, support, weights) -> "DiscretePMF":
        w = np.asarray(weights, dtype=float)
        return cls(tuple(support), w / math.fsum(w))

    @classmethod
    def from_mapping(cls, mapping: dict) -> "DiscretePMF":
        keys = sorted(mapping, key=lambda k: k if isinstance(k, tuple) else (k,))
        return cls.from_weights(keys, [mapping[k] for k in keys])

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.probs.tolist()))

    def __getitem__(self, tag) -> float:
        return self.as_dict().get(tag, 0.0)

    def mean(self) -> float:
        return float(np.dot(np.asarray(self.support, dtype=float), self.probs))


def poisson_pmf(rho: float) -> DiscretePMF:
    """Poisson(rho) truncated where the remaining mass drops below ``TRUNCATION_TOL``."""
    if not rho > 0:
        raise ValueError("poisson mean must be positive")
    return birth_death_stationary(lambda i: rho, lambda i: float(i))


def erlang_geometric(lam: float, mu: float) -> DiscretePMF:
    """``p_k = (1 - rho) rho^k`` with ``rho = lam / mu < 1``."""
    if not (lam > 0 and mu > 0):
        raise ValueError("rates must be positive")
    if lam >= mu:
        raise DivergentSeries(f"geometric series diverges for lam={lam} >= mu={mu}")
    rho = lam / mu
    # the tail is explicit here, so cut it below double precision
    K = max(0, math.ceil(math.log(min(TRUNCATION_TOL, 1e-17)) / math.log(rho)) - 1)
    return DiscretePMF.from_weights(range(K + 1), (1.0 - rho) * rho ** np.arange(K + 1))


def _rate_fn(rates, offset: int) -> Callable[[int], float]:
    if callable(rates):
        return rates
    seq = [float(r) for r in rates]
    if not seq:
        raise ValueError("empty rate sequence")
    return lambda i: seq[min(i - offset, len(seq) - 1)]


def birth_death_stationary(lambdas, mus, K: int = MAX_TERMS) -> DiscretePMF:
    """Product-form law ``p_k ~ prod_{i<k} lambda_i / prod_{i=1..k} mu_i``.

    ``lambdas[i]`` is the birth rate at level ``i`` (from 0); ``mus[0]`` is the
    death rate at level 1. Sequences repeat their last entry; callables take
    the level. The series is summed until the tail (bounded by a ratio test)
    falls below ``TRUNCATION_TOL``; ``K`` caps the number of terms.
    """
    lam = _rate_fn(lambdas, 0)
    mu = _rate_fn(mus, 1)
    logw = [0.0]
    top = 0.0
    log_tol = math.log(TRUNCATION_TOL)
    for k in range(1, K + 1):
        lk, mk = lam(k - 1), mu(k)
        if not (lk > 0 and mk > 0):
            raise ValueError(f"rates must be positive (level {k}: lambda={lk}, mu={mk})")
        logw.append(logw[-1] + math.log(lk) - math.log(mk))
        top = max(top, logw[-1])
        ratio = lk / mk
        if ratio < 1:
            # geometric bound on the tail, valid while the term ratio does not grow
            nxt = lam(k) / mu(k + 1)
            log_tail = logw[-1] + math.log(ratio / (1.0 - ratio))
            if log_tail < log_tol + top and nxt <= ratio * (1 + 1e-12):
                break
    else:
        raise DivergentSeries(f"normalizing series not converged within {K} terms")
    top = max(logw)
    return DiscretePMF.from_weights(range(len(logw)), np.exp(np.array(logw) - top))


def fortet_density(k: int, xs: Sequence[float], lambdas, svc: ServiceLaw) -> float:
    """``p0 * prod_{i<k} lambda_i (1 - G(x_{i+1}))`` with ``p0`` of the product
    form at constant death rate ``1 / mean``."""
    if len(xs) != k:
        raise ValueError(f"expected {k} elapsed times, got {len(xs)}")
    if any(v < 0 for v in xs):
        raise ValueError("elapsed times must be nonnegative")
    mu = 1.0 / svc.mean
    p0 = birth_death_stationary(lambdas, [mu]).probs[0]
    lam = _rate_fn(lambdas, 0)
    out = p0
    for i, v in enumerate(xs):
        out *= lam(i) * float(svc.survival(v))
    return float(out)


def fortet_marginal(k: int, lambdas, svc: ServiceLaw, epsabs: float = 1e-11) -> float:
    """Integral of ``fortet_density(k, .)`` over ``[0, inf)^k`` by adaptive quadrature."""
    if k == 0:
        return fortet_density(0, [], lambdas, svc)
    f = lambda *xs: fortet_density(k, xs, lambdas, svc)
    val, _ = integrate.nquad(f, [(0.0, np.inf)] * k, opts={"epsabs": epsabs, "epsrel": 1e-10})
    return float(val)


def equilibrium_elapsed_density(svc: ServiceLaw) -> Callable:
    """Density ``(1 - G(t)) / mean`` of a customer's elapsed time at stationarity."""
    mean = svc.mean
    if not (0 < mean < math.inf):
        raise ValueError("equilibrium density needs a finite positive mean")
    return lambda t: svc.survival(t) / mean


def equilibrium_elapsed_cdf(svc: ServiceLaw) -> Callable:
    """CDF of the equilibrium elapsed-time law; accepts scalars or arrays."""
    mean = svc.mean

    def cdf(t):
        if np.ndim(t) == 0:
            return float(svc.integrated_survival(float(t))) / mean
        flat = np.asarray(t, dtype=float).ravel()
        vals = np.array([svc.integrated_survival(float(v)) for v in flat], dtype=float)
        return (vals / mean).reshape(np.shape(t))

    return cdf
