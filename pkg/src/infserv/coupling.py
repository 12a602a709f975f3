"""Two-copy coupling through a shared arrival stream on the empty system.

Each copy's arrival intensity on the empty set is split into a common part of
rate ``lower0`` (the declared infimum) and a private remainder. The copies run
independently until a common-stream point finds both empty; both then jump to
(1, 0, 0) together and continue as one trajectory. A common point that finds
only one copy empty is an ordinary arrival for that copy, so each copy keeps
its own law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import parallel_map
from .model.laws import ArrivalLaw, ServiceLaw
from .model.state import SystemState, advance, apply_arrival, apply_departure
from .simulator import ARRIVAL, NS_COUPLED, Process, SimulatorConfig, StationaryPool
from .streams import Role, Stream


@dataclass
class CouplingOutcome:
    T: float  # coupling time, or the horizon when censored
    censored: bool
    tau00: float  # first time both copies are empty (horizon if never)
    tau00_censored: bool
    n_attempts: int  # entrances of the pair into (empty, empty) up to the merge
    x_snapshots: list = field(default_factory=list)
    y_snapshots: list = field(default_factory=list)
    merge_state: tuple | None = None  # (X, Y) right after the joint jump
    post_merge_events: int = 0
    post_merge_equal: bool = True
    tau0_x: float = math.nan  # first time X is empty (horizon if censored)
    tau0_y: float = math.nan


def simulate_coupled(x0: SystemState, y0: SystemState, cfg: SimulatorConfig, arr: ArrivalLaw,
                     svc: ServiceLaw, run: int = 0) -> CouplingOutcome:
    lo = arr.lower0
    if not lo > 0:
        raise ValueError("coupling needs a positive lower arrival bound on the empty system")
    seed = cfg.seed
    common = Stream(seed, NS_COUPLED, Role.COMMON, run)
    X = Process(x0, 0.0, arr, svc, Stream(seed, NS_COUPLED, Role.REMAINDER_X, run),
                Stream(seed, NS_COUPLED, Role.SERVICE_X, run), cfg.mode, cfg.window, common_rate=lo)
    Y = Process(y0, 0.0, arr, svc, Stream(seed, NS_COUPLED, Role.REMAINDER_Y, run),
                Stream(seed, NS_COUPLED, Role.SERVICE_Y, run), cfg.mode, cfg.window, common_rate=lo)
    horizon = cfg.horizon
    snap_t = cfg.snapshot_times
    out = CouplingOutcome(horizon, True, horizon, True, 0)
    if x0.n == 0 and y0.n == 0:
        out.tau00, out.tau00_censored, out.n_attempts = 0.0, False, 1
    tau_x = 0.0 if x0.n == 0 else None
    tau_y = 0.0 if y0.n == 0 else None
    t_common = common.exponential() / lo
    si = 0
    events = 0
    merged = False
    y_state = None  # mirror of Y after the merge, driven by X's events
    y_t = 0.0
    while events < cfg.max_events:
        tx = X.peek()
        ty = math.inf if merged else Y.peek()
        tn = min(tx, ty, t_common)
        while si < len(snap_t) and snap_t[si] < tn:
            xs = X.state_at(snap_t[si])
            out.x_snapshots.append(xs)
            out.y_snapshots.append(advance(y_state, snap_t[si] - y_t) if merged else Y.state_at(snap_t[si]))
            si += 1
        if tn > horizon:
            break
        if tn == t_common:
            t_common += common.exponential() / lo
            if merged:
                if X.x.n == 0:
                    ev = X.arrive_from_empty(tn)
                    events += 1
                    y_state, y_t = _mirror(y_state, y_t, ev), ev[0]
                    out.post_merge_events += 1
                continue
            x_empty, y_empty = X.x.n == 0, Y.x.n == 0
            if x_empty and y_empty:
                X.arrive_from_empty(tn)
                Y.arrive_from_empty(tn)
                events += 2
                merged = True
                out.T, out.censored = tn, False
                out.merge_state = (X.x, Y.x)
                y_state, y_t = Y.x, tn
                if si >= len(snap_t):
                    break
            elif x_empty:
                X.arrive_from_empty(tn)
                events += 1
            elif y_empty:
                Y.arrive_from_empty(tn)
                events += 1
            continue
        if tn == tx:
            ev = X.step()
        else:
            ev = Y.step()
        if ev is None:
            continue
        events += 1
        if tau_x is None and X.x.n == 0:
            tau_x = ev[0]
        if tau_y is None and not merged and Y.x.n == 0:
            tau_y = ev[0]
        if merged:
            y_state, y_t = _mirror(y_state, y_t, ev), ev[0]
            out.post_merge_events += 1
        elif X.x.n == 0 and Y.x.n == 0:
            out.n_attempts += 1
            if out.tau00_censored:
                out.tau00, out.tau00_censored = tn, False
    out.tau0_x = horizon if tau_x is None else tau_x
    out.tau0_y = horizon if tau_y is None else tau_y
    if merged:
        out.post_merge_equal = (y_state == X.state_at(y_t)) and out.merge_state[0] == out.merge_state[1]
    return out


def _mirror(y: SystemState, t: float, ev) -> SystemState:
    time, kind, idx = ev
    y = advance(y, time - t)
    return apply_arrival(y, idx) if kind == ARRIVAL else apply_departure(y, idx)


def _coupled_job(args):
    x0, y0, cfg, arr, svc, run = args
    return simulate_coupled(x0, y0, cfg, arr, svc, run)


def run_coupled(x0: SystemState, cfg: SimulatorConfig, arr: ArrivalLaw, svc: ServiceLaw,
                runs: int, y0: SystemState | None = None, pool: StationaryPool | None = None,
                workers: int | None = None) -> list[CouplingOutcome]:
    """``runs`` coupled pairs; ``Y`` starts at ``y0`` or at draws from ``pool``."""
    if (y0 is None) == (pool is None):
        raise ValueError("give exactly one of y0 and pool")
    jobs = []
    for r in range(runs):
        y = y0 if pool is None else pool.draw(Stream(cfg.seed, NS_COUPLED, Role.STATIONARY, r))
        jobs.append((x0, y, cfg, arr, svc, r))
    return parallel_map(_coupled_job, jobs, workers)


@dataclass(frozen=True)
class SurvivalCurve:
    grid: np.ndarray
    survival: np.ndarray
    stderr: np.ndarray
    censored_fraction: float


def kaplan_meier(times, censored) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Product-limit estimate; returns distinct event times, ``S`` just after
    each of them and Greenwood standard errors."""
    t = np.asarray(times, dtype=float)
    c = np.asarray(censored, dtype=bool)
    if t.size == 0:
        raise ValueError("no samples")
    if c.all():
        raise ValueError("every sample is censored; lengthen the horizon")
    ev_times = np.unique(t[~c])
    sorted_t = np.sort(t)
    at_risk = t.size - np.searchsorted(sorted_t, ev_times, side="left")
    deaths = np.bincount(np.searchsorted(ev_times, t[~c]), minlength=ev_times.size)
    surv = np.cumprod(1.0 - deaths / at_risk)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.cumsum(np.where(at_risk > deaths, deaths / (at_risk * (at_risk - deaths)), 0.0))
    se = surv * np.sqrt(g)
    return ev_times, surv, se


def coupling_survival(outcomes: list[CouplingOutcome], grid) -> SurvivalCurve:
    """Censoring-aware estimate of ``P(T > t)`` on ``grid``."""
    if not outcomes:
        raise ValueError("no coupling outcomes")
    T = np.array([o.T for o in outcomes])
    c = np.array([o.censored for o in outcomes])
    ev, surv, se = kaplan_meier(T, c)
    g = np.asarray(grid, dtype=float)
    idx = np.searchsorted(ev, g, side="right") - 1
    S = np.where(idx >= 0, surv[np.maximum(idx, 0)], 1.0)
    E = np.where(idx >= 0, se[np.maximum(idx, 0)], 0.0)
    return SurvivalCurve(g, S, E, float(c.mean()))


def tv_upper_bound_from_coupling(outcomes: list[CouplingOutcome], t: float) -> float:
    """``P(T > t)``: bounds ``sup_A |P(X_t in A) - P(Y_t in A)|`` for the coupled
    pair, hence the distance to stationarity when ``Y`` starts stationary."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return float(coupling_survival(outcomes, [t]).survival[0])
