"""Service-time laws (given by their hazard) and state-dependent arrival intensities."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy import integrate, special

from .state import SystemState


class ImproperLawError(ValueError):
    """Service law whose cumulative hazard stays bounded (service may never end)."""


class ServiceLaw:
    """Base class: a service-time distribution described through its hazard ``h``.

    Subclasses provide ``hazard``, ``cumulative_hazard``, ``residual`` and
    ``integrated_survival``; everything else is derived.
    """

    kind: str = "abstract"

    def hazard(self, t):
        raise NotImplementedError

    def cumulative_hazard(self, t):
        raise NotImplementedError

    def survival(self, t):
        return np.exp(-self.cumulative_hazard(t))

    def cdf(self, t):
        return -np.expm1(-self.cumulative_hazard(t))

    def integrated_survival(self, t):
        """Integral of ``1 - G`` over ``[0, t]``."""
        raise NotImplementedError

    @property
    def mean(self) -> float:
        return float(self.integrated_survival(math.inf))

    def residual(self, s, e):
        """Remaining service ``r`` solving ``H(s + r) - H(s) = e``.

        ``e`` is a unit-exponential variate; arrays are accepted.
        """
        raise NotImplementedError

    def hazard_bound(self, s: float, window: float) -> float:
        """Upper bound of ``h`` on ``[s, s + window]`` (used for thinning)."""
        raise NotImplementedError

    def scaled_hazard_infimum(self) -> tuple[float, float]:
        """``(inf_t h(t) (1 + t), argmin t)``, exact or sampled."""
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"

    def __eq__(self, other) -> bool:
        return type(self) is type(other) and self.params() == other.params()

    def __hash__(self) -> int:
        return hash((type(self).__name__, repr(self.params())))


class ParetoHazard(ServiceLaw):
    """``h(t) = alpha / (1 + t)``: survival ``(1 + t)^-alpha``, mean ``1/(alpha - 1)``."""

    kind = "pareto-hazard"

    def __init__(self, alpha: float):
        if not alpha > 1:
            raise ValueError(f"pareto-hazard needs alpha > 1 for a finite mean, got {alpha}")
        self.alpha = float(alpha)

    def hazard(self, t):
        return self.alpha / (1.0 + t)

    def cumulative_hazard(self, t):
        return self.alpha * np.log1p(t)

    def integrated_survival(self, t):
        if t == math.inf:
            return 1.0 / (self.alpha - 1.0)
        return -np.expm1((1.0 - self.alpha) * np.log1p(t)) / (self.alpha - 1.0)

    def residual(self, s, e):
        if isinstance(e, float):
            return (1.0 + s) * math.expm1(e / self.alpha)
        return (1.0 + s) * np.expm1(e / self.alpha)

    def hazard_bound(self, s, window):
        return self.alpha / (1.0 + s)

    def scaled_hazard_infimum(self):
        return self.alpha, 0.0

    def params(self):
        return {"alpha": self.alpha}


class Exponential(ServiceLaw):
    kind = "exponential"

    def __init__(self, rate: float):
        if not rate > 0:
            raise ValueError(f"exponential rate must be positive, got {rate}")
        self.rate = float(rate)

    def hazard(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.rate) if np.ndim(t) else self.rate

    def cumulative_hazard(self, t):
        return self.rate * np.asarray(t, dtype=float)

    def integrated_survival(self, t):
        if t == math.inf:
            return 1.0 / self.rate
        return -np.expm1(-self.rate * np.asarray(t, dtype=float)) / self.rate

    def residual(self, s, e):
        return e / self.rate

    def hazard_bound(self, s, window):
        return self.rate

    def scaled_hazard_infimum(self):
        return self.rate, 0.0

    def params(self):
        return {"rate": self.rate}


class Weibull(ServiceLaw):
    """``H(t) = (t / scale)^shape``."""

    kind = "weibull"

    def __init__(self, shape: float, scale: float):
        if not (shape > 0 and scale > 0):
            raise ValueError(f"weibull needs shape, scale > 0, got {shape}, {scale}")
        self.shape = float(shape)
        self.scale = float(scale)

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            out = (self.shape / self.scale) * (t / self.scale) ** (self.shape - 1.0)
        return out if out.ndim else float(out)

    def cumulative_hazard(self, t):
        return (np.asarray(t, dtype=float) / self.scale) ** self.shape

    def integrated_survival(self, t):
        k = self.shape
        full = self.scale * special.gamma(1.0 + 1.0 / k)
        if t == math.inf:
            return float(full)
        return full * special.gammainc(1.0 / k, (np.asarray(t, dtype=float) / self.scale) ** k)

    def residual(self, s, e):
        k = self.shape
        r = self.scale * ((s / self.scale) ** k + e) ** (1.0 / k) - s
        return np.maximum(r, 0.0) if np.ndim(r) else max(float(r), 0.0)

    def hazard_bound(self, s, window):
        if self.shape >= 1:
            return float(self.hazard(s + window))
        if s <= 0:
            raise ValueError("weibull hazard with shape < 1 is unbounded at elapsed time 0")
        return float(self.hazard(s))

    def scaled_hazard_infimum(self):
        k = self.shape
        if k > 1:
            return 0.0, 0.0
        if k == 1:
            return 1.0 / self.scale, 0.0
        t = (1.0 - k) / k
        return float(self.hazard(t)) * (1.0 + t), t

    def params(self):
        return {"shape": self.shape, "scale": self.scale}


class TableHazard(ServiceLaw):
    """Piecewise-linear hazard through ``(t, h)`` knots, flat after the last knot.

    The first knot must sit at ``t = 0``. ``H`` is integrated exactly (piecewise
    quadratic) and inverted in closed form within each segment.
    """

    kind = "table"
    certificate_points = 10_000

    def __init__(self, knots, allow_improper: bool = False):
        arr = np.asarray(knots, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 1:
            raise ValueError("table hazard needs a list of (t, h) pairs")
        t, h = arr[:, 0], arr[:, 1]
        if t[0] != 0.0:
            raise ValueError("first hazard knot must be at t = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("hazard knots must have strictly increasing t")
        if np.any(h < 0) or not np.all(np.isfinite(h)):
            raise ValueError("hazard values must be finite and nonnegative")
        if h[-1] <= 0 and not allow_improper:
            raise ImproperLawError("last hazard knot must be positive so service ends a.s.")
        self.t = t
        self.h = h
        self.slope = np.diff(h) / np.diff(t) if len(t) > 1 else np.zeros(0)
        seg = np.diff(t) * (h[:-1] + h[1:]) / 2.0
        self.H = np.concatenate(([0.0], np.cumsum(seg)))
        self.allow_improper = allow_improper

    def _segment(self, t):
        return np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(self.t) - 1)

    def hazard(self, t):
        tt = np.asarray(t, dtype=float)
        out = np.interp(tt, self.t, self.h)
        return out if out.ndim else float(out)

    def cumulative_hazard(self, t):
        tt = np.asarray(t, dtype=float)
        j = self._segment(tt)
        u = tt - self.t[j]
        slope = np.where(j < len(self.slope), np.append(self.slope, 0.0)[j], 0.0)
        out = self.H[j] + self.h[j] * u + 0.5 * slope * u * u
        return out if out.ndim else float(out)

    def _inverse_H(self, c):
        c = np.asarray(c, dtype=float)
        j = np.clip(np.searchsorted(self.H, c, side="right") - 1, 0, len(self.t) - 1)
        d = c - self.H[j]
        slope = np.append(self.slope, 0.0)[j]
        hj = self.h[j]
        disc = np.sqrt(np.maximum(hj * hj + 2.0 * slope * d, 0.0))
        denom = hj + disc
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(denom > 0, 2.0 * d / denom, np.where(d > 0, np.inf, 0.0))
        return self.t[j] + u

    def residual(self, s, e):
        s_arr = np.asarray(s, dtype=float)
        target = self.cumulative_hazard(s_arr) + e
        if self.h[-1] <= 0 and np.any(np.asarray(target) > self.H[-1]):
            raise ImproperLawError("cumulative hazard plateaus before reaching the target")
        r = np.maximum(self._inverse_H(target) - s_arr, 0.0)
        return r if np.ndim(r) else float(r)

    def integrated_survival(self, t):
        if self.h[-1] <= 0 and t == math.inf:
            raise ImproperLawError("improper table law has infinite mean")
        end = min(t, self.t[-1])
        total = 0.0
        edges = np.append(self.t[self.t < end], end)
        for lo, hi in zip(edges[:-1], edges[1:]):
            total += integrate.quad(lambda u: math.exp(-self.cumulative_hazard(u)), lo, hi,
                                    epsabs=1e-13, epsrel=1e-12)[0]
        if t > self.t[-1]:
            tail = math.exp(-self.H[-1]) / self.h[-1]
            if t != math.inf:
                tail *= -math.expm1(-self.h[-1] * (t - self.t[-1]))
            total += tail
        return total

    def hazard_bound(self, s, window):
        lo, hi = s, s + window
        inside = self.h[(self.t > lo) & (self.t < hi)]
        return float(max(self.hazard(lo), self.hazard(hi), inside.max(initial=0.0)))

    def certificate_grid(self) -> np.ndarray:
        grid = np.concatenate(([0.0], np.geomspace(1e-6, 1e6, self.certificate_points), self.t))
        return np.unique(grid)

    def scaled_hazard_infimum(self):
        grid = self.certificate_grid()
        vals = self.hazard(grid) * (1.0 + grid)
        i = int(np.argmin(vals))
        return float(vals[i]), float(grid[i])

    def params(self):
        return {"knots": [[float(a), float(b)] for a, b in zip(self.t, self.h)]}


class ArrivalLaw:
    """State-dependent arrival intensity with declared envelope constants.

    ``Lambda`` bounds ``rate(x) / max(n, 1)``; ``lower0`` and ``upper0`` bound
    the intensity on the empty system.
    """

    kind: str = "abstract"
    Lambda: float
    lower0: float
    upper0: float

    def rate(self, x: SystemState) -> float:
        raise NotImplementedError

    def level_sup(self, n: int) -> float:
        return self.Lambda * max(n, 1)

    def _check_bounds(self) -> None:
        if not (0 < self.lower0 <= self.upper0 < math.inf):
            raise ValueError(
                "arrival intensity on the empty system must satisfy "
                f"0 < inf <= sup < inf, got inf={self.lower0}, sup={self.upper0}")
        if not (0 < self.Lambda < math.inf):
            raise ValueError(f"per-customer arrival bound must be finite and positive, got {self.Lambda}")
        if self.upper0 > self.Lambda:
            raise ValueError("sup of intensity on the empty system exceeds the per-customer bound")

    def params(self) -> dict:
        raise NotImplementedError

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


class ConstantArrivals(ArrivalLaw):
    kind = "constant"

    def __init__(self, rate: float):
        self.value = float(rate)
        self.Lambda = self.lower0 = self.upper0 = self.value
        self._check_bounds()

    def rate(self, x):
        return self.value

    def level_sup(self, n):
        return self.value

    def params(self):
        return {"rate": self.value}


class PerCountArrivals(ArrivalLaw):
    """``lambda_n`` listed for small ``n``; beyond the list either the last value
    repeats (``tail="constant"``) or ``lambda_n = slope * n`` (``tail="linear"``)."""

    kind = "per-count"

    def __init__(self, rates, tail: str = "constant", slope: float | None = None):
        self.rates = tuple(float(r) for r in rates)
        if not self.rates or any(r < 0 for r in self.rates):
            raise ValueError("per-count rates must be a nonempty list of nonnegative values")
        if tail not in ("constant", "linear"):
            raise ValueError(f"unknown tail rule {tail!r}")
        if tail == "linear" and (slope is None or slope < 0):
            raise ValueError("linear tail needs a nonnegative slope")
        self.tail = tail
        self.slope = None if slope is None else float(slope)
        listed = max(r / max(n, 1) for n, r in enumerate(self.rates))
        self.Lambda = max(listed, self.slope) if tail == "linear" else listed
        self.lower0 = self.upper0 = self.rates[0]
        self._check_bounds()

    def level_sup(self, n):
        if n < len(self.rates):
            return self.rates[n]
        return self.rates[-1] if self.tail == "constant" else self.slope * n

    def rate(self, x):
        return self.level_sup(x.n)

    def params(self):
        out = {"rates": list(self.rates), "tail": self.tail}
        if self.slope is not None:
            out["slope"] = self.slope
        return out


class X0DecayFactor:
    """``phi(x) = floor + (1 - floor) * exp(-x0 / scale)``, values in ``[floor, 1]``."""

    def __init__(self, floor: float, scale: float):
        if not (0 <= floor <= 1 and scale > 0):
            raise ValueError(f"x0-decay factor needs floor in [0, 1] and scale > 0, got {floor}, {scale}")
        self.floor = float(floor)
        self.scale = float(scale)

    def __call__(self, x: SystemState) -> float:
        return self.floor + (1.0 - self.floor) * math.exp(-x.x0 / self.scale)

    def params(self):
        return {"floor": self.floor, "scale": self.scale}


class ScaledArrivals(ArrivalLaw):
    """Count-times-factor law ``rate * max(n, 1) * phi(x)`` with ``phi`` in ``(0, 1]``.

    ``factor_floor`` is the declared infimum of ``phi`` over the empty system;
    it defaults to ``factor.floor`` when the factor carries one.
    """

    kind = "count-times-factor"

    def __init__(self, rate: float, factor: Callable[[SystemState], float],
                 factor_floor: float | None = None):
        self.value = float(rate)
        self.factor = factor
        if factor_floor is None:
            factor_floor = getattr(factor, "floor", None)
        if factor_floor is None:
            raise ValueError("factor_floor must be declared for a custom factor")
        self.factor_floor = float(factor_floor)
        self.Lambda = self.upper0 = self.value
        self.lower0 = self.value * self.factor_floor
        self._check_bounds()

    def rate(self, x):
        return self.value * max(x.n, 1) * self.factor(x)

    def params(self):
        fp = self.factor.params() if hasattr(self.factor, "params") else repr(self.factor)
        return {"rate": self.value, "factor": fp, "factor_floor": self.factor_floor}


class CustomArrivals(ArrivalLaw):
    """Arbitrary evaluator together with a declared envelope ``(Lambda, lower0, upper0)``."""

    kind = "custom-bounded"

    def __init__(self, evaluator: Callable[[SystemState], float], Lambda: float,
                 lower0: float, upper0: float):
        self.evaluator = evaluator
        self.Lambda = float(Lambda)
        self.lower0 = float(lower0)
        self.upper0 = float(upper0)
        self._check_bounds()

    def rate(self, x):
        return float(self.evaluator(x))

    def params(self):
        return {"evaluator": repr(self.evaluator), "Lambda": self.Lambda,
                "lower0": self.lower0, "upper0": self.upper0}
