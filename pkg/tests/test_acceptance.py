"""Acceptance criteria 1-10, each at its stated tolerance and time budget.

Every criterion prints one ``CRITERION n: PASS|FAIL`` line (collected in the
terminal summary as well) and fails the test when it does not hold.
"""

import csv
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_LINES
from infserv import cli
from infserv.analysis import StateBinner, DiscretePMF, empirical_pmf, moment_estimate, poisson_pmf, tv_distance
from infserv.config import validate_config
from infserv.coupling import run_coupled
from infserv.analysis import equilibrium_elapsed_cdf
from infserv.model import (EMPTY, ConstantArrivals, Exponential, LyapunovParams, ParetoHazard,
                           PerCountArrivals, ScaledArrivals, SystemState, TableHazard, Weibull,
                           X0DecayFactor, check_conditions, drift, drift_upper_bound, generator_terms,
                           lyapunov, random_state)
from infserv.simulator import (SimulatorConfig, ensemble_snapshots, generator_monte_carlo,
                               hitting_times, regenerative_cycles, time_average)
from infserv.streams import generator

BY_COUNT = StateBinner()
# admissible set used for the drift audit
ADM = LyapunovParams(C0=31.0, m=2.0, a=2.0, ell=1.0, k=0.5)
# small admissible model for convergence and hitting moments
SMALL_ARR, SMALL_SVC = ConstantArrivals(0.2), ParetoHazard(4.0)
SMALL = LyapunovParams(C0=4.0, m=1.1, a=1.05, ell=0.05, k=0.025)


def report(n: int, ok: bool, detail: str, elapsed: float, budget: float | None):
    within = budget is None or elapsed < budget
    status = "PASS" if ok and within else "FAIL"
    limit = f" / budget {budget:.0f}s" if budget is not None else ""
    line = f"CRITERION {n}: {status} - {detail} [{elapsed:.1f}s{limit}]"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line
    assert within, f"criterion {n} over its time budget: {line}"


def _n_pmf(snaps, j=0):
    return empirical_pmf((s[j] for s in snaps), BY_COUNT)


def test_criterion_01_closed_form_agreement():
    t0 = time.perf_counter()
    cfg = SimulatorConfig(101, 50.0, snapshot_times=(50.0,))
    snaps = ensemble_snapshots(EMPTY, cfg, ConstantArrivals(1.0), Exponential(1.0), 10_000)
    tv = tv_distance(_n_pmf(snaps), poisson_pmf(1.0))
    report(1, tv < 0.03, f"M/M/inf TV(empirical, Poisson(1)) = {tv:.4f} < 0.03",
           time.perf_counter() - t0, 120)


def test_criterion_02_insensitivity():
    t0 = time.perf_counter()
    svc = ParetoHazard(3.0)
    cfg = SimulatorConfig(102, 50.0, snapshot_times=(50.0,))
    snaps = ensemble_snapshots(EMPTY, cfg, ConstantArrivals(1.0), svc, 20_000)
    tv = tv_distance(_n_pmf(snaps[:10_000]), poisson_pmf(0.5))
    elapsed = [e for s in snaps for e in s[0].elapsed][:10_000]
    ks = stats.kstest(elapsed, equilibrium_elapsed_cdf(svc))
    ok = tv < 0.03 and len(elapsed) == 10_000 and ks.pvalue > 0.01
    report(2, ok, f"TV vs Poisson(0.5) = {tv:.4f} < 0.03; KS on {len(elapsed)} elapsed times "
                  f"p = {ks.pvalue:.3f} > 0.01", time.perf_counter() - t0, 180)


def test_criterion_03_drift_domination():
    t0 = time.perf_counter()
    arr, svc = ConstantArrivals(1.0), ParetoHazard(31.0)
    rng = generator(103, 0)
    held, least = 0, math.inf
    N = 10_000
    for _ in range(N):
        x = random_state(rng, 20, 1e3, min_n=1)
        g = drift(x, arr, svc, ADM.m, ADM.a)
        b = drift_upper_bound(x, ADM, arr.Lambda)
        held += g <= b < 0
        least = min(least, g / b)
    report(3, held == N, f"{held}/{N} states with I1-I2+I3 <= bound < 0 "
                         f"(min drift/bound ratio {least:.3f})",
           time.perf_counter() - t0, 10)


def test_criterion_04_generator_consistency():
    t0 = time.perf_counter()
    arr, svc = ConstantArrivals(1.0), ParetoHazard(3.0)
    rng = generator(104, 0)
    worst = 0.0
    for i in range(20):
        n = 1 + i % 5
        el = tuple(float(v) for v in rng.uniform(0.0, 3.0, n))
        x = SystemState(min(el) * float(rng.uniform()), el)
        exact = sum(generator_terms(x, arr, svc, 2.0, 2.0) * np.array([1, -1, 1]))
        mc, se = generator_monte_carlo(x, arr, svc, 2.0, 2.0, 1e-3, 10**6, seed=1040 + i)
        worst = max(worst, abs(mc - exact) / se)
    report(4, worst < 3, f"20 states, 1e6 replicas, dt=1e-3: max |MC - exact| = {worst:.2f} SE < 3",
           time.perf_counter() - t0, 300)


MODE_MATRIX = {
    "constant/exponential": (ConstantArrivals(1.0), Exponential(1.0)),
    "constant/pareto-hazard(3)": (ConstantArrivals(1.0), ParetoHazard(3.0)),
    "constant/weibull(2,1)": (ConstantArrivals(1.0), Weibull(2.0, 1.0)),
    "count-times-factor/pareto-hazard(3)": (ScaledArrivals(0.5, X0DecayFactor(0.3, 1.0)), ParetoHazard(3.0)),
    "per-count/table": (PerCountArrivals([0.5, 1.0, 1.5]), TableHazard([(0, 0.5), (1, 2.0), (4, 1.5)])),
}


def test_criterion_05_mode_equivalence():
    t0 = time.perf_counter()
    tvs = {}
    for name, (arr, svc) in MODE_MATRIX.items():
        pm = {}
        for mode in ("agenda", "hazard-thinning"):
            cfg = SimulatorConfig(105, 20.0, mode, (20.0,))
            pm[mode] = _n_pmf(ensemble_snapshots(EMPTY, cfg, arr, svc, 10_000))
        tvs[name] = tv_distance(pm["agenda"], pm["hazard-thinning"])
    worst = max(tvs.values())
    detail = "; ".join(f"{k} {v:.4f}" for k, v in tvs.items())
    report(5, worst < 0.02, f"agenda vs hazard-thinning TV < 0.02: {detail}",
           time.perf_counter() - t0, 300)


def test_criterion_06_regenerative_estimator():
    t0 = time.perf_counter()
    rows = []
    ok = True
    for name, arr in (("constant", ConstantArrivals(1.0)),
                      ("count-times-factor", ScaledArrivals(0.5, X0DecayFactor(0.3, 1.0)))):
        svc = ParetoHazard(3.0)
        est = regenerative_cycles(SimulatorConfig(106, 1.0), arr, svc, 10_000, BY_COUNT).pmf()
        ta = time_average(EMPTY, SimulatorConfig(107, 1e5), arr, svc, BY_COUNT, burn_in=100.0)
        tv_ta = tv_distance(est, DiscretePMF.from_mapping(ta))
        ok &= tv_ta < 0.02
        rows.append(f"{name}: vs time-average {tv_ta:.4f}")
        if isinstance(arr, ConstantArrivals):
            tv_cf = tv_distance(est, poisson_pmf(0.5))
            ok &= tv_cf < 0.03
            rows.append(f"vs Poisson(0.5) {tv_cf:.4f}")
    report(6, ok, "regenerative TV < 0.02 (time-average), < 0.03 (closed form): " + "; ".join(rows),
           time.perf_counter() - t0, 180)


def test_criterion_07_coupling_correctness():
    t0 = time.perf_counter()
    arr, svc = ScaledArrivals(0.5, X0DecayFactor(0.3, 1.0)), ParetoHazard(3.0)
    x0, y0 = SystemState(0.0, (0.0, 0.5, 1.0)), EMPTY
    t_snap = 20.0
    outs = run_coupled(x0, SimulatorConfig(107, 1000.0, snapshot_times=(t_snap,)), arr, svc,
                       10_000, y0=y0)
    scfg = SimulatorConfig(108, t_snap, snapshot_times=(t_snap,))
    tv_x = tv_distance(empirical_pmf((o.x_snapshots[0] for o in outs), BY_COUNT),
                       _n_pmf(ensemble_snapshots(x0, scfg, arr, svc, 10_000)))
    tv_y = tv_distance(empirical_pmf((o.y_snapshots[0] for o in outs), BY_COUNT),
                       _n_pmf(ensemble_snapshots(y0, scfg, arr, svc, 10_000, first_replica=10_000)))
    regen = SystemState(0.0, (0.0,))
    exact = sum(o.merge_state == (regen, regen) and o.post_merge_equal for o in outs if not o.censored)
    merged = sum(not o.censored for o in outs)
    ok = tv_x < 0.02 and tv_y < 0.02 and exact == merged == len(outs)
    report(7, ok, f"marginal TV X {tv_x:.4f}, Y {tv_y:.4f} < 0.02; exact merge and post-merge "
                  f"equality in {exact}/{len(outs)} runs", time.perf_counter() - t0, 180)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_criterion_08_convergence_bracket(tmp_path):
    t0 = time.perf_counter()
    rep = check_conditions(SMALL_ARR, SMALL_SVC, SMALL)
    assert rep.all_ok, rep
    cfg = validate_config(f"""
model:
  arrival: {{kind: constant, rate: 0.2}}
  service: {{kind: pareto-hazard, alpha: 4}}
lyapunov: {{C0: 4, m: 1.1, a: 1.05, ell: 0.05, k: 0.025}}
sim:
  seed: 108
  initial: {{x0: 0, elapsed: [0, 0, 0]}}
stationary: {{cycles: 10000}}
coupling: {{runs: 10000, pool_cycles: 2000, horizon: 1000}}
convergence: {{times: [1, 2, 5, 10, 20], replicas: 10000}}
""")
    code, summary = cli.execute("convergence", cfg, tmp_path / "conv")
    rows = _read_csv(tmp_path / "conv" / "convergence.csv")
    fit = _read_csv(tmp_path / "conv" / "tail_fit.csv")[0]
    bracket = all(r["bracket_ok"] == "1" for r in rows)
    slope = float(fit["slope"])
    detail = "; ".join(f"t={float(r['t']):g}: {float(r['tv_binned']):.4f} <= {float(r['coupling_bound']):.4f}"
                       f"+2se" for r in rows)
    report(8, bracket and slope <= -1 and code == 0,
           f"{detail}; tail slope {slope:.2f} <= -1 on [{float(fit['window_lo']):.1f}, "
           f"{float(fit['window_hi']):.1f}]", time.perf_counter() - t0, 600)


def test_criterion_09_hitting_moment_scaling():
    t0 = time.perf_counter()
    base = (0.2, 0.5, 1.0, 1.5, 0.1, 0.8, 2.0, 0.3)
    ratios = {}
    for n in (1, 2, 4, 8):
        x = SystemState(0.0, base[:n])
        hs = hitting_times(x, SimulatorConfig(109 + n, 1000.0), SMALL_ARR, SMALL_SVC, 10_000)
        me = moment_estimate(hs.tau0, SMALL.k + 1.0, hs.tau0_censored)
        assert me.reliable
        ratios[n] = me.value / lyapunov(x, SMALL.m, SMALL.a_prime)
    spread = max(ratios.values()) / min(ratios.values())
    detail = ", ".join(f"n={n}: {r:.3f}" for n, r in ratios.items())
    report(9, spread < 10, f"E tau0^(k+1) / L(x): {detail}; max/min = {spread:.2f} < 10",
           time.perf_counter() - t0, 300)


DETERMINISM_CFG = """
model:
  arrival: {kind: count-times-factor, rate: 0.5, floor: 0.3, scale: 1.0}
  service: {kind: pareto-hazard, alpha: 31}
lyapunov: {C0: 31, m: 2, a: 2, ell: 1, k: 0.5}
sim: {seed: 110, replicas: 200, horizon: 10, snapshot_times: [1, 10], initial: {elapsed: [0.5, 1.0]}}
stationary: {cycles: 500, long_run_horizon: 500, binner: {scheme: by-count-and-mean-elapsed}}
coupling: {runs: 300, pool_cycles: 300, horizon: 300}
convergence: {times: [1, 5], replicas: 500}
drift_check: {samples: 500, envelope_samples: 500}
"""


def test_criterion_10_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = validate_config(DETERMINISM_CFG)
    checked, differing = 0, []
    for command in cli.COMMANDS:
        first = tmp_path / command
        code, _ = cli.execute(command, cfg, first)
        assert code == 0, command
        code = cli.main(["rerun", str(first / "manifest.json"), "--output-dir", str(tmp_path / f"{command}-rerun")])
        for f in sorted(first.glob("*.csv")):
            checked += 1
            if f.read_bytes() != (tmp_path / f"{command}-rerun" / f.name).read_bytes():
                differing.append(f"{command}/{f.name}")
        if code != 0:
            differing.append(f"{command} (rerun exit {code})")
    report(10, not differing and checked > 0,
           f"{checked} CSVs from {len(cli.COMMANDS)} commands byte-identical on rerun"
           + (f"; differing: {differing}" if differing else ""), time.perf_counter() - t0, None)


if __name__ == "__main__":
    raise SystemExit(pytest.main([str(Path(__file__)), "-v", "-s"]))
