from .conditions import ConditionReport, audit_envelope, check_conditions, random_state
from .laws import (ArrivalLaw, ConstantArrivals, CustomArrivals, Exponential, ImproperLawError,
                   ParetoHazard, PerCountArrivals, ScaledArrivals, ServiceLaw, TableHazard, Weibull,
                   X0DecayFactor)
from .lyapunov import (InadmissibleParameters, LyapunovParams, drift, drift_upper_bound,
                       generator_terms, lyapunov, lyapunov_time)
from .state import EMPTY, SystemState, advance, apply_arrival, apply_departure


def residual_service_sample(svc: ServiceLaw, s: float, e: float) -> float:
    """Remaining service of a customer with elapsed time ``s`` given a unit
    exponential variate ``e`` (cumulative-hazard inversion)."""
    if s < 0 or not e > 0:
        raise ValueError(f"need s >= 0 and e > 0, got s={s}, e={e}")
    return float(svc.residual(float(s), float(e)))


__all__ = [
    "ArrivalLaw", "ConditionReport", "ConstantArrivals", "CustomArrivals", "EMPTY", "Exponential",
    "ImproperLawError", "InadmissibleParameters", "LyapunovParams", "ParetoHazard",
    "PerCountArrivals", "ScaledArrivals", "ServiceLaw", "SystemState", "TableHazard", "Weibull",
    "X0DecayFactor", "advance", "apply_arrival", "apply_departure", "audit_envelope",
    "check_conditions", "drift", "drift_upper_bound", "generator_terms", "lyapunov",
    "lyapunov_time", "random_state", "residual_service_sample",
]
