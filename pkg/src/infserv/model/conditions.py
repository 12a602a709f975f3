"""Checks of the hazard, envelope and parameter conditions behind the convergence bound."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .laws import ArrivalLaw, ServiceLaw, TableHazard
from .lyapunov import LyapunovParams
from .state import SystemState


@dataclass(frozen=True)
class ConditionReport:
    hazard_ok: bool
    hazard_witness: tuple[float, float]  # (t, h(t) * (1 + t)) at the infimum
    hazard_certified: str  # "exact" for closed families, "sampled" for tables
    bounds_ok: bool
    main_condition_ok: bool
    weak_condition_ok: bool
    aprime_condition_ok: bool
    margins: dict = field(default_factory=dict)

    @property
    def all_ok(self) -> bool:
        return self.hazard_ok and self.bounds_ok and self.main_condition_ok

    def as_dict(self) -> dict:
        out = asdict(self)
        out["hazard_witness"] = list(self.hazard_witness)
        out["all_ok"] = self.all_ok
        return out


def check_conditions(arr: ArrivalLaw, svc: ServiceLaw, params: LyapunovParams) -> ConditionReport:
    Lam = arr.Lambda
    inf_val, witness_t = svc.scaled_hazard_infimum()
    margins = {
        "hazard": inf_val - params.C0,
        "lower0": arr.lower0,
        "Lambda_finite": float(np.isfinite(Lam)),
        "main": params.main_margin(Lam),
        "weak": params.weak_margin(Lam),
        "aprime": params.aprime_margin(Lam),
    }
    return ConditionReport(
        hazard_ok=inf_val >= params.C0,
        hazard_witness=(witness_t, inf_val),
        hazard_certified="sampled" if isinstance(svc, TableHazard) else "exact",
        bounds_ok=bool(arr.lower0 > 0 and np.isfinite(Lam)),
        main_condition_ok=margins["main"] > 0,
        weak_condition_ok=margins["weak"] > 0,
        aprime_condition_ok=margins["aprime"] > 0,
        margins=margins,
    )


def random_state(rng: np.random.Generator, max_n: int, max_elapsed: float = 1e3,
                 min_n: int = 0) -> SystemState:
    """State with ``n`` uniform in ``min_n..max_n`` and log-uniform elapsed times."""
    n = int(rng.integers(min_n, max_n + 1))
    # log-uniform on [0, max_elapsed] via 1 + x log-uniform on [1, 1 + max_elapsed]
    el = np.expm1(rng.uniform(0.0, np.log1p(max_elapsed), size=n))
    x0 = float(np.expm1(rng.uniform(0.0, np.log1p(max_elapsed))))
    if n:
        x0 = float(min(x0, el.min()))
    return SystemState(x0, tuple(float(v) for v in el))


def audit_envelope(arr: ArrivalLaw, rng: np.random.Generator, samples: int = 100_000,
                   max_n: int = 20, max_elapsed: float = 1e3) -> list[SystemState]:
    """Randomized audit of the declared arrival envelope; returns violating states."""
    bad = []
    for _ in range(samples):
        x = random_state(rng, max_n, max_elapsed)
        lam = arr.rate(x)
        if lam > arr.Lambda * max(x.n, 1) or lam < 0:
            bad.append(x)
        elif x.n == 0 and not (arr.lower0 <= lam <= arr.upper0):
            bad.append(x)
    return bad
