"""Empirical distributions, total variation, tail exponents and moments."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..model.state import SystemState
from .binning import StateBinner
from .closed_form import DiscretePMF


def empirical_pmf(states: Iterable[SystemState], binner: StateBinner) -> DiscretePMF:
    counts = Counter(binner.tag(x) for x in states)
    if not counts:
        raise ValueError("empirical pmf of an empty sample")
    return DiscretePMF.from_mapping(counts)


def _aligned(p: DiscretePMF, q: DiscretePMF) -> tuple[np.ndarray, np.ndarray]:
    pd, qd = p.as_dict(), q.as_dict()
    tags = set(pd) | set(qd)
    tags = sorted(tags, key=lambda k: k if isinstance(k, tuple) else (k,))
    return (np.array([pd.get(t, 0.0) for t in tags]), np.array([qd.get(t, 0.0) for t in tags]))


def tv_distance(p: DiscretePMF, q: DiscretePMF) -> float:
    """Half the L1 distance; the sup-over-events convention. Supports are
    aligned by tag, missing tags count as zero mass."""
    a, b = _aligned(p, q)
    return float(min(1.0, 0.5 * math.fsum(np.abs(a - b))))


def tv_doubled(p: DiscretePMF, q: DiscretePMF) -> float:
    """Total variation as ``2 sup_A |p(A) - q(A)|`` (the full L1 distance)."""
    return 2.0 * tv_distance(p, q)


def tv_bootstrap_se(tags: Sequence, reference: DiscretePMF, rng: np.random.Generator,
                    resamples: int = 200) -> float:
    """Bootstrap standard error of ``tv_distance(empirical(tags), reference)``."""
    counts = Counter(tags)
    keys = list(counts)
    p = np.array([counts[k] for k in keys], dtype=float)
    N = int(p.sum())
    p /= N
    ref = reference.as_dict()
    other = 1.0 - sum(ref.get(k, 0.0) for k in keys)  # reference mass on unseen tags
    q = np.array([ref.get(k, 0.0) for k in keys])
    draws = rng.multinomial(N, p, size=resamples) / N
    tv = 0.5 * (np.abs(draws - q).sum(axis=1) + other)
    return float(tv.std(ddof=1))


@dataclass(frozen=True)
class TailFit:
    slope: float
    intercept: float
    r2: float
    window: tuple[float, float]
    points: int
    nested_slopes: tuple[float, ...]
    power_law_consistent: bool


def _survival_from_samples(samples) -> tuple[np.ndarray, np.ndarray]:
    x = np.sort(np.asarray(samples, dtype=float))
    N = len(x)
    t, idx = np.unique(x, return_index=True)
    # P(T > t) just after each distinct value: samples strictly above
    last = np.append(idx[1:], N)
    surv = (N - last) / N
    keep = surv > 0
    return t[keep], surv[keep]


def _fit(t, s):
    X = np.log1p(t)
    Y = np.log(s)
    slope, intercept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + intercept)
    ss = float(((Y - Y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / ss if ss > 0 else 1.0
    return float(slope), float(intercept), r2


def tail_exponent_fit(times, survival=None, window: tuple[float, float] | None = None,
                      sample_count: int | None = None, min_points: int = 20) -> TailFit:
    """Least-squares slope of ``log S(t)`` against ``log(1 + t)``.

    Pass either a survival curve ``(times, survival)`` or raw samples as
    ``times``. Without an explicit window the fit uses the last decade of
    survival above the noise floor ``50 / sample_count``. The fit is repeated
    on three nested tail windows; a power law keeps the slope steady while an
    exponential tail makes it steeper and steeper.
    """
    if survival is None:
        sample_count = len(times) if sample_count is None else sample_count
        t, s = _survival_from_samples(times)
    else:
        t = np.asarray(times, dtype=float)
        s = np.asarray(survival, dtype=float)
    pos = s > 0
    t, s = t[pos], s[pos]
    if window is None:
        if sample_count:
            floor = 50.0 / sample_count
            sel = (s >= floor) & (s <= 10.0 * floor)
            if sel.sum() >= 2:
                window = (float(t[sel].min()), float(t[sel].max()))
        if window is None:
            window = (float(t.min()), float(t.max())) if t.size else (0.0, 0.0)
    sel = (t >= window[0]) & (t <= window[1])
    t, s = t[sel], s[sel]
    if t.size < min_points:
        raise ValueError(f"tail fit needs at least {min_points} points in the window, got {t.size}")
    if np.ptp(np.log(s)) == 0:
        raise ValueError("degenerate survival: constant over the window")
    slope, intercept, r2 = _fit(t, s)
    lo, hi = np.log1p(t.min()), np.log1p(t.max())
    nested = []
    for frac in (0.0, 1 / 3, 2 / 3):
        cut = np.log1p(t) >= lo + frac * (hi - lo)
        if cut.sum() >= 3 and np.ptp(np.log(s[cut])) > 0:
            nested.append(_fit(t[cut], s[cut])[0])
    steepening = len(nested) == 3 and nested[0] > nested[1] > nested[2] \
        and (nested[2] - nested[0]) < -0.25 * abs(nested[0])
    return TailFit(slope, intercept, r2, window, int(t.size), tuple(nested), not steepening)


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    stderr: float
    censored_fraction: float
    used: int
    reliable: bool


def moment_estimate(samples, p: float, censored=None, max_censored: float = 0.05) -> MomentEstimate:
    """Mean of ``sample**p`` over uncensored samples, with its standard error.

    Flagged unreliable when more than ``max_censored`` of the samples are censored.
    """
    if p < 0:
        raise ValueError("moment order must be nonnegative")
    x = np.asarray(samples, dtype=float)
    c = np.zeros(x.shape, dtype=bool) if censored is None else np.asarray(censored, dtype=bool)
    used = x[~c]
    if used.size == 0:
        raise ValueError("no uncensored samples")
    vals = used ** p
    se = float(vals.std(ddof=1) / math.sqrt(used.size)) if used.size > 1 else math.nan
    frac = float(c.mean()) if c.size else 0.0
    return MomentEstimate(float(vals.mean()), se, frac, int(used.size), frac <= max_censored)
