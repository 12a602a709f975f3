"""Exact event-driven simulation of the elapsed-time process.

Between events every clock grows linearly; arrivals come from thinning a
dominating Poisson stream of rate ``Lambda * max(n, 1)``. Departures are
either presampled at arrival by cumulative-hazard inversion (``agenda``) or
thinned against a local hazard bound over a lookahead window
(``hazard-thinning``). The two modes share no sampling code for departures
and serve as cross-checks of each other.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ._parallel import parallel_map
from .model.laws import ArrivalLaw, ServiceLaw
from .model.lyapunov import lyapunov
from .model.state import SystemState, advance, apply_arrival, apply_departure
from .streams import Role, Stream

logger = logging.getLogger(__name__)

MODES = ("agenda", "hazard-thinning")
ARRIVAL = "arrival"
DEPARTURE = "departure"

# first spawn-key component; keeps the stream families of different experiments apart
NS_REPLICA = 0
NS_CYCLE = 1
NS_COUPLED = 2
NS_POOL = 3
NS_ONE_STEP = 4

_ENVELOPE_RTOL = 1e-12


class EnvelopeViolation(RuntimeError):
    """The arrival law returned an intensity above its declared envelope."""


@dataclass(frozen=True)
class SimulatorConfig:
    seed: int
    horizon: float
    mode: str = "agenda"
    snapshot_times: tuple[float, ...] = ()
    max_events: int = 10_000_000
    window: float = 1.0  # lookahead of the hazard-thinning mode

    def __post_init__(self):
        object.__setattr__(self, "snapshot_times", tuple(float(s) for s in self.snapshot_times))
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        s = self.snapshot_times
        if any(b < a for a, b in zip(s, s[1:])):
            raise ValueError("snapshot_times must be sorted")
        if s and (s[0] < 0 or s[-1] > self.horizon):
            raise ValueError("snapshot_times must lie in [0, horizon]")
        if self.max_events < 1:
            raise ValueError("max_events must be at least 1")
        if not self.window > 0:
            raise ValueError("window must be positive")


@dataclass(frozen=True)
class EventRecord:
    time: float
    kind: str  # ARRIVAL or DEPARTURE
    index: int  # arrival slot or departing customer, 1-based
    state_after: SystemState


@dataclass
class Trajectory:
    initial: SystemState
    events: list[EventRecord]
    snapshot_times: tuple[float, ...]
    snapshots: list[SystemState]
    terminated_by: str  # "horizon" or "event-cap"


class Process:
    """One copy of the process, owning its arrival and service streams.

    ``peek()`` gives the time of the next candidate point; ``step()`` resolves
    it and returns ``(time, kind, index)`` for a real event or ``None`` for a
    rejected candidate. ``common_rate`` is removed from the arrival intensity
    on the empty system; the coupling supplies those arrivals through
    ``arrive_from_empty``.
    """

    __slots__ = ("x", "t", "clock", "arr", "svc", "ast", "sst", "mode", "window",
                 "common_rate", "completions", "_cand", "_kind", "_B",
                 "_bounds", "_wend", "_Rtot")

    def __init__(self, x: SystemState, t: float, arr: ArrivalLaw, svc: ServiceLaw,
                 arrivals: Stream, service: Stream, mode: str = "agenda",
                 window: float = 1.0, common_rate: float = 0.0):
        self.x = x
        self.t = t
        self.clock = t
        self.arr = arr
        self.svc = svc
        self.ast = arrivals
        self.sst = service
        self.mode = mode
        self.window = window
        self.common_rate = common_rate
        if mode == "agenda":
            self.completions = [t + float(svc.residual(v, service.exponential())) for v in x.elapsed]
        else:
            self.completions = None
        self._redraw()

    def state_at(self, time: float) -> SystemState:
        return advance(self.x, time - self.t)

    def _arrival_bound(self) -> float:
        n = self.x.n
        if n == 0:
            return self.arr.Lambda - self.common_rate
        return self.arr.Lambda * n

    def _redraw(self) -> None:
        # called after a state change or window end; clock is the current time
        self._B = B = self._arrival_bound()
        if self.mode == "agenda":
            ta = self.clock + self.ast.exponential() / B if B > 0 else math.inf
            comp = self.completions
            if comp:
                td = min(comp)
                if td < ta:
                    # the unused arrival clock is memoryless and redrawn after the departure
                    self._cand, self._kind = td, comp.index(td)
                    return
            self._cand, self._kind = ta, -1
            return
        # hazard-thinning: bounds valid on [clock, clock + window]
        shift = self.clock - self.t
        self._bounds = [self.svc.hazard_bound(v + shift, self.window) for v in self.x.elapsed]
        self._wend = self.clock + self.window
        self._Rtot = B + math.fsum(self._bounds)
        self._thin_candidate()

    def _thin_candidate(self) -> None:
        R = self._Rtot
        tc = self.clock + self.ast.exponential() / R if R > 0 else math.inf
        if tc >= self._wend:
            self._cand, self._kind = self._wend, -2
            return
        u = self.ast.uniform() * R
        if u < self._B:
            self._cand, self._kind = tc, -1
            return
        u -= self._B
        bounds = self._bounds
        for i, b in enumerate(bounds):
            if u < b:
                self._cand, self._kind = tc, i
                return
            u -= b
        self._cand, self._kind = tc, len(bounds) - 1

    def peek(self) -> float:
        return self._cand

    def _accept_arrival(self, tc: float) -> bool:
        xc = advance(self.x, tc - self.t)
        lam = self.arr.rate(xc)
        n = xc.n
        excess = lam - self.common_rate if n == 0 else lam
        B = self._B
        if excess > B * (1.0 + _ENVELOPE_RTOL) or excess < -B * _ENVELOPE_RTOL:
            raise EnvelopeViolation(
                f"arrival intensity {lam} at {xc} outside declared envelope "
                f"[{self.common_rate if n == 0 else 0.0}, {B + (self.common_rate if n == 0 else 0.0)}]")
        return self.ast.uniform() * B < excess

    def _do_arrival(self, tc: float, slot: int | None = None):
        n = self.x.n
        if slot is None:
            slot = self.ast.integer(n + 1)
        self.x = apply_arrival(advance(self.x, tc - self.t), slot)
        self.t = self.clock = tc
        if self.completions is not None:
            self.completions.insert(slot - 1, tc + float(self.svc.residual(0.0, self.sst.exponential())))
        self._redraw()
        return tc, ARRIVAL, slot

    def _do_departure(self, tc: float, i: int):
        self.x = apply_departure(advance(self.x, tc - self.t), i + 1)
        self.t = self.clock = tc
        if self.completions is not None:
            self.completions.pop(i)
        self._redraw()
        return tc, DEPARTURE, i + 1

    def step(self):
        tc, kind = self._cand, self._kind
        if kind >= 0:
            if self.mode == "agenda":
                return self._do_departure(tc, kind)
            s = self.x.elapsed[kind] + (tc - self.t)
            if self.sst.uniform() * self._bounds[kind] < float(self.svc.hazard(s)):
                return self._do_departure(tc, kind)
            self.clock = tc
            self._thin_candidate()
            return None
        if kind == -2:
            self.clock = tc
            self._redraw()
            return None
        if self._accept_arrival(tc):
            return self._do_arrival(tc)
        self.clock = tc
        if self.mode == "agenda":
            self._redraw()
        else:
            self._thin_candidate()
        return None

    def arrive_from_empty(self, tc: float):
        """Arrival at ``tc`` triggered from outside (common stream); needs n == 0."""
        if self.x.n != 0:
            raise RuntimeError("externally driven arrival requires the empty system")
        return self._do_arrival(tc, slot=1)


def _streams(seed: int, ns: int, index: int) -> tuple[Stream, Stream]:
    return Stream(seed, ns, Role.ARRIVALS, index), Stream(seed, ns, Role.SERVICE, index)


def next_event(x: SystemState, arr: ArrivalLaw, svc: ServiceLaw, arrivals: Stream,
               service: Stream | None = None, mode: str = "agenda", window: float = 1.0):
    """Time to and identity ``(dt, kind, index)`` of the first event from ``x``.

    In agenda mode the completions of customers already present are sampled
    from their residual laws given the current elapsed times.
    """
    proc = Process(x, 0.0, arr, svc, arrivals, service or arrivals, mode, window)
    while True:
        ev = proc.step()
        if ev is not None:
            return ev


def simulate(x0: SystemState, cfg: SimulatorConfig, arr: ArrivalLaw, svc: ServiceLaw,
             replica: int = 0, record_events: bool = True) -> Trajectory:
    """Simulate one replica on ``[0, cfg.horizon]``."""
    proc = Process(x0, 0.0, arr, svc, *_streams(cfg.seed, NS_REPLICA, replica),
                   mode=cfg.mode, window=cfg.window)
    snap_t = cfg.snapshot_times
    snaps: list[SystemState] = []
    events: list[EventRecord] = []
    horizon = cfg.horizon
    si, nsnap = 0, len(snap_t)
    count = 0
    terminated = "horizon"
    while True:
        tn = proc.peek()
        while si < nsnap and snap_t[si] < tn:
            snaps.append(proc.state_at(snap_t[si]))
            si += 1
        if tn > horizon:
            break
        ev = proc.step()
        if ev is not None:
            count += 1
            if record_events:
                events.append(EventRecord(ev[0], ev[1], ev[2], proc.x))
            if count >= cfg.max_events:
                terminated = "event-cap"
                break
    return Trajectory(x0, events, snap_t[: len(snaps)], snaps, terminated)


def replay(traj: Trajectory) -> list[SystemState]:
    """Rebuild every post-event state from the event list with model moves only."""
    x, t = traj.initial, 0.0
    out = []
    for ev in traj.events:
        x = advance(x, ev.time - t)
        x = apply_arrival(x, ev.index) if ev.kind == ARRIVAL else apply_departure(x, ev.index)
        t = ev.time
        out.append(x)
    return out


def _snapshots_job(args):
    x0, cfg, arr, svc, replica = args
    return simulate(x0, cfg, arr, svc, replica, record_events=False).snapshots


def ensemble_snapshots(x0: SystemState, cfg: SimulatorConfig, arr: ArrivalLaw, svc: ServiceLaw,
                       replicas: int, first_replica: int = 0,
                       workers: int | None = None) -> list[list[SystemState]]:
    """Snapshot states of ``replicas`` independent runs; row ``r`` is replica
    ``first_replica + r`` and depends only on ``(seed, replica index)``."""
    if replicas < 1:
        raise ValueError("replicas must be at least 1")
    jobs = [(x0, cfg, arr, svc, first_replica + r) for r in range(replicas)]
    return parallel_map(_snapshots_job, jobs, workers)


@dataclass
class HittingSamples:
    tau0: np.ndarray
    tau0_censored: np.ndarray
    tau01: np.ndarray
    tau01_censored: np.ndarray


def _hitting_job(args):
    x0, cfg, arr, svc, replica = args
    proc = Process(x0, 0.0, arr, svc, *_streams(cfg.seed, NS_REPLICA, replica),
                   mode=cfg.mode, window=cfg.window)
    horizon = cfg.horizon
    tau0 = 0.0 if x0.n == 0 else None
    count = 0
    while proc.peek() <= horizon and count < cfg.max_events:
        ev = proc.step()
        if ev is None:
            continue
        count += 1
        if ev[1] == DEPARTURE:
            if tau0 is None and proc.x.n == 0:
                tau0 = ev[0]
        elif tau0 is not None and proc.x.n == 1:
            return tau0, False, ev[0], False
    if tau0 is None:
        return horizon, True, horizon, True
    return tau0, False, horizon, True


def hitting_times(x0: SystemState, cfg: SimulatorConfig, arr: ArrivalLaw, svc: ServiceLaw,
                  replicas: int, workers: int | None = None) -> HittingSamples:
    """First-entrance time to the empty set and first subsequent arrival time.

    Samples not observed by ``cfg.horizon`` are reported as ``horizon`` with
    their censoring flag set.
    """
    if replicas < 1:
        raise ValueError("replicas must be at least 1")
    res = parallel_map(_hitting_job, [(x0, cfg, arr, svc, r) for r in range(replicas)], workers)
    a = np.array(res, dtype=object)
    return HittingSamples(a[:, 0].astype(float), a[:, 1].astype(bool),
                          a[:, 2].astype(float), a[:, 3].astype(bool))


@dataclass
class RegenerationCycle:
    duration: float
    occupation: dict
    visited_S0: bool


@dataclass
class RegenerativeEstimate:
    cycles: list[RegenerationCycle]
    probabilities: dict
    stderr: dict
    discarded: int
    mean_cycle: float

    def pmf(self):
        from .analysis.closed_form import DiscretePMF

        return DiscretePMF.from_mapping(self.probabilities)


def _run_cycle(cfg: SimulatorConfig, arr: ArrivalLaw, svc: ServiceLaw, index: int, binner,
               record: bool = False, ns: int = NS_CYCLE):
    proc = Process(SystemState.regeneration(), 0.0, arr, svc, *_streams(cfg.seed, ns, index),
                   mode=cfg.mode, window=cfg.window)
    occ: dict = {}
    path = [(0.0, proc.x)] if record else None
    visited = False
    count = 0
    x_prev, t_prev = proc.x, 0.0
    while count < cfg.max_events:
        ev = proc.step()
        if ev is None:
            continue
        count += 1
        t_ev = ev[0]
        if binner is not None:
            for tag, d in binner.split(x_prev, t_ev - t_prev):
                occ[tag] = occ.get(tag, 0.0) + d
        if ev[1] == ARRIVAL and x_prev.n == 0:
            return RegenerationCycle(t_ev, occ, visited), path
        x_prev, t_prev = proc.x, t_ev
        if x_prev.n == 0:
            visited = True
        if record:
            path.append((t_ev, x_prev))
    return None, None


def _cycles_job(args):
    cfg, arr, svc, indices, binner = args
    return [_run_cycle(cfg, arr, svc, i, binner)[0] for i in indices]


def regenerative_cycles(cfg: SimulatorConfig, arr: ArrivalLaw, svc: ServiceLaw, cycles: int,
                        binner, workers: int | None = None) -> RegenerativeEstimate:
    """Ratio estimator of the stationary law from i.i.d. cycles started at (1, 0, 0).

    Each cycle ends at the first arrival to the empty system. ``binner`` maps
    the drift of a state over an interval to ``(tag, duration)`` pieces.
    """
    if cycles < 1:
        raise ValueError("cycles must be at least 1")
    chunk = 256
    jobs = [(cfg, arr, svc, range(s, min(s + chunk, cycles)), binner) for s in range(0, cycles, chunk)]
    done = [c for part in parallel_map(_cycles_job, jobs, workers) for c in part]
    kept = [c for c in done if c is not None]
    discarded = len(done) - len(kept)
    if not kept:
        raise RuntimeError("every regeneration cycle hit the event cap")
    if discarded > 0.01 * cycles:
        logger.warning("%d of %d cycles discarded at the event cap; estimate may be biased",
                       discarded, cycles)
    tau = np.array([c.duration for c in kept])
    tags = sorted({k for c in kept for k in c.occupation}, key=_tag_key)
    N = len(kept)
    mean_tau = float(tau.mean())
    probs, errs = {}, {}
    for tag in tags:
        y = np.array([c.occupation.get(tag, 0.0) for c in kept])
        r = float(y.sum() / tau.sum())
        resid = y - r * tau
        se = math.sqrt(float(resid @ resid) / max(N - 1, 1) / N) / mean_tau
        probs[tag] = r
        errs[tag] = se
    return RegenerativeEstimate(kept, probs, errs, discarded, mean_tau)


def _tag_key(tag):
    return tag if isinstance(tag, tuple) else (tag,)


class StationaryPool:
    """Approximate stationary sampler: states at uniform times over pooled cycles.

    A uniform time over the concatenation of i.i.d. cycles is a draw from the
    empirical version of the cycle-ratio representation of the stationary law.
    """

    def __init__(self, cfg: SimulatorConfig, arr: ArrivalLaw, svc: ServiceLaw, cycles: int):
        self.paths = []
        self.durations = []
        for i in range(cycles):
            cyc, path = _run_cycle(cfg, arr, svc, i, None, record=True, ns=NS_POOL)
            if cyc is not None:
                self.paths.append(path)
                self.durations.append(cyc.duration)
        if not self.paths:
            raise RuntimeError("no complete regeneration cycle in the pool")
        self.offsets = np.concatenate(([0.0], np.cumsum(self.durations)))

    @property
    def total_time(self) -> float:
        return float(self.offsets[-1])

    def draw(self, stream: Stream) -> SystemState:
        u = stream.uniform() * self.total_time
        c = min(int(np.searchsorted(self.offsets, u, side="right")) - 1, len(self.paths) - 1)
        s = u - self.offsets[c]
        path = self.paths[c]
        j = 0
        while j + 1 < len(path) and path[j + 1][0] <= s:
            j += 1
        t_j, x_j = path[j]
        return advance(x_j, s - t_j)


def time_average(x0: SystemState, cfg: SimulatorConfig, arr: ArrivalLaw, svc: ServiceLaw,
                 binner, burn_in: float = 0.0, replica: int = 0) -> dict:
    """Long-run fraction of time per tag over ``[burn_in, horizon]`` of one run."""
    proc = Process(x0, 0.0, arr, svc, *_streams(cfg.seed, NS_REPLICA, replica),
                   mode=cfg.mode, window=cfg.window)
    occ: dict = {}

    def add(x, t_from, t_to):
        lo = max(t_from, burn_in)
        if t_to > lo:
            for tag, d in binner.split(advance(x, lo - t_from), t_to - lo):
                occ[tag] = occ.get(tag, 0.0) + d

    x_prev, t_prev = x0, 0.0
    count = 0
    while proc.peek() <= cfg.horizon and count < cfg.max_events:
        ev = proc.step()
        if ev is None:
            continue
        count += 1
        add(x_prev, t_prev, ev[0])
        x_prev, t_prev = proc.x, ev[0]
    add(x_prev, t_prev, cfg.horizon)
    total = sum(occ.values())
    return {k: v / total for k, v in sorted(occ.items(), key=lambda kv: _tag_key(kv[0]))}


def generator_monte_carlo(x: SystemState, arr: ArrivalLaw, svc: ServiceLaw, m: float, a: float,
                          dt: float, replicas: int, seed: int,
                          batch: int = 250_000) -> tuple[float, float]:
    """Mean and standard error of ``(L(X_dt) - L(x)) / dt`` over independent
    exact one-step replicas, simulated in vectorized batches.

    Customers are tracked by arrival epochs, so the ordering of slots is
    irrelevant here; ``L`` is symmetric in the elapsed times.
    """
    L0 = lyapunov(x, m, a)
    total = 0.0
    total_sq = 0.0
    done = 0
    b = 0
    while done < replicas:
        R = min(batch, replicas - done)
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(NS_ONE_STEP, b))))
        inc = (_one_step_batch(x, arr, svc, m, a, dt, R, gen) - L0) / dt
        total += float(inc.sum())
        total_sq += float(inc @ inc)
        done += R
        b += 1
    mean = total / done
    var = max(total_sq / done - mean * mean, 0.0) * done / max(done - 1, 1)
    return mean, math.sqrt(var / done)


def _one_step_batch(x, arr, svc, m, a, dt, R, gen) -> np.ndarray:
    n0 = x.n
    W = n0 + 4
    epochs = np.full((R, W), np.nan)  # arrival epoch of each customer (elapsed = t - epoch)
    comp = np.full((R, W), np.inf)  # completion epoch
    if n0:
        el = np.asarray(x.elapsed)
        epochs[:, :n0] = -el
        e = gen.standard_exponential((R, n0))
        comp[:, :n0] = svc.residual(np.broadcast_to(el, (R, n0)), e)
    last_arrival = np.full(R, -x.x0)
    n = np.full(R, n0)
    clock = np.zeros(R)
    Lam = arr.Lambda
    active = np.arange(R)
    while active.size:
        B = Lam * np.maximum(n[active], 1)
        ta = clock[active] + gen.standard_exponential(active.size) / B
        j = np.argmin(comp[active], axis=1)
        td = comp[active, j]
        tn = np.minimum(ta, td)
        live = tn <= dt
        active, ta, td, j, tn, B = active[live], ta[live], td[live], j[live], tn[live], B[live]
        if not active.size:
            break
        is_dep = td <= ta
        dep = active[is_dep]
        epochs[dep, j[is_dep]] = np.nan
        comp[dep, j[is_dep]] = np.inf
        n[dep] -= 1
        cand = active[~is_dep]
        tc = ta[~is_dep]
        u = gen.random(cand.size) * B[~is_dep]
        lam = np.empty(cand.size)
        for q, (r, t) in enumerate(zip(cand, tc)):
            row = epochs[r]
            xc = SystemState(t - last_arrival[r], tuple(float(t - v) for v in row[~np.isnan(row)]))
            lam[q] = arr.rate(xc)
            if lam[q] > B[~is_dep][q] * (1.0 + _ENVELOPE_RTOL):
                raise EnvelopeViolation(f"arrival intensity {lam[q]} above envelope at {xc}")
        acc = cand[u < lam]
        tacc = tc[u < lam]
        if acc.size:
            free = np.isnan(epochs[acc]).argmax(axis=1)
            full = ~np.isnan(epochs[acc, free])
            if full.any():
                epochs = np.hstack([epochs, np.full((R, W), np.nan)])
                comp = np.hstack([comp, np.full((R, W), np.inf)])
                W *= 2
                free = np.isnan(epochs[acc]).argmax(axis=1)
            epochs[acc, free] = tacc
            comp[acc, free] = tacc + svc.residual(np.zeros(acc.size), gen.standard_exponential(acc.size))
            last_arrival[acc] = tacc
            n[acc] += 1
        clock[active] = tn
    el_end = dt - epochs
    powsum = np.nansum((1.0 + el_end) ** m, axis=1)
    return np.where(n > 0, powsum ** a, 0.0)
