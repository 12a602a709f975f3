"""Command-line experiment runner.

``infserv <command> CONFIG [--output-dir DIR] [--workers N]`` runs one
experiment from a YAML config and writes CSV/YAML outputs plus a
``manifest.json`` into the output directory. ``infserv rerun MANIFEST``
repeats a recorded run and checks that every output digest matches.

Exit codes: 0 success, 2 configuration error, 3 failed audit or assertion.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import SPEC_VERSION, __version__
from . import io as _io
from ._parallel import parallel_map
from .analysis import (DiscretePMF, DivergentSeries, StateBinner, birth_death_stationary,
                       empirical_pmf, joint_emptying_probability, joint_jump_probability,
                       moment_estimate, poisson_pmf, stationary_integral_bound, tail_exponent_fit,
                       tv_bootstrap_se, tv_distance)
from .config import ConfigError, ExperimentConfig, StateCfg, load_config, validate_config
from .coupling import coupling_survival, kaplan_meier, run_coupled
from .model import (ConstantArrivals, InadmissibleParameters, PerCountArrivals, audit_envelope,
                    check_conditions, drift, drift_upper_bound, lyapunov, random_state)
from .simulator import (EnvelopeViolation, StationaryPool, ensemble_snapshots, hitting_times,
                        regenerative_cycles, simulate, time_average)
from .streams import SEED_DERIVATION_VERSION, Role, generator

EXIT_OK, EXIT_CONFIG, EXIT_AUDIT = 0, 2, 3
NS_AUDIT = 5  # stream namespace for randomized audits and bootstrap resampling

COMMANDS = ("validate", "simulate", "stationary", "hitting", "couple", "drift-check",
            "convergence", "constants")


class _Run:
    """Collects the files one command writes, all inside ``out``."""

    def __init__(self, out: Path):
        self.out = out
        self.files: list[Path] = []
        self.summary: dict = {}
        self.failures: list[str] = []

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(p)
        return p

    def yaml(self, name: str, doc) -> None:
        self.path(name).write_text(yaml.safe_dump(doc, sort_keys=False), encoding="utf-8")


def _need_lyapunov(cfg: ExperimentConfig, command: str):
    if cfg.lyapunov is None:
        raise ConfigError([f"lyapunov: block required by '{command}'"])
    return cfg.lyapunov.build()


def _n_marginal(pmf: dict) -> dict:
    out: dict = {}
    for tag, p in pmf.items():
        n = tag[0] if isinstance(tag, tuple) else tag
        out[n] = out.get(n, 0.0) + p
    return out


def closed_form_n_marginal(cfg: ExperimentConfig) -> DiscretePMF | None:
    """Stationary count law when one is known: Poisson for constant arrivals,
    the birth-death product form for count-dependent arrivals (both
    insensitive to the service law beyond its mean)."""
    arr, svc = cfg.arrival(), cfg.service()
    if isinstance(arr, ConstantArrivals):
        return poisson_pmf(arr.value * svc.mean)
    if isinstance(arr, PerCountArrivals):
        mu = 1.0 / svc.mean
        try:
            return birth_death_stationary(arr.level_sup, lambda i: i * mu)
        except DivergentSeries:
            return None
    return None


# --- commands -----------------------------------------------------------------

def cmd_validate(cfg: ExperimentConfig, run: _Run, workers):
    rep = check_conditions(cfg.arrival(), cfg.service(), _need_lyapunov(cfg, "validate"))
    doc = rep.as_dict()
    doc["hazard_witness"] = [float(v) for v in doc["hazard_witness"]]
    doc["margins"] = {k: float(v) for k, v in doc["margins"].items()}
    run.yaml("conditions.yaml", doc)
    run.summary.update(all_ok=rep.all_ok, main_margin=doc["margins"]["main"])
    if not rep.all_ok:
        run.failures.append("conditions not satisfied")


def _simulate_job(args):
    x0, scfg, arr, svc, r = args
    return simulate(x0, scfg, arr, svc, replica=r, record_events=True)


def cmd_simulate(cfg: ExperimentConfig, run: _Run, workers):
    arr, svc, x0 = cfg.arrival(), cfg.service(), cfg.sim.initial.build()
    scfg = cfg.sim.build()
    trajs = parallel_map(_simulate_job, [(x0, scfg, arr, svc, r) for r in range(cfg.sim.replicas)],
                         workers)

    def events():
        for r, tr in enumerate(trajs):
            yield r, 0.0, tr.initial
            for ev in tr.events:
                yield r, ev.time, ev.state_after

    def snaps():
        for r, tr in enumerate(trajs):
            for t, x in zip(tr.snapshot_times, tr.snapshots):
                yield r, t, x

    _io.write_states_csv(run.path("trajectories.csv"), events())
    _io.write_states_csv(run.path("snapshots.csv"), snaps())
    capped = sum(tr.terminated_by == "event-cap" for tr in trajs)
    run.summary.update(replicas=len(trajs), events=sum(len(t.events) for t in trajs),
                       event_capped=capped)


def cmd_stationary(cfg: ExperimentConfig, run: _Run, workers):
    arr, svc = cfg.arrival(), cfg.service()
    st = cfg.stationary
    binner = StateBinner(st.binner.scheme, st.binner.width, st.binner.cap)
    est = regenerative_cycles(cfg.sim.build(), arr, svc, st.cycles, binner, workers)
    _io.write_pmf_csv(run.path("pmf_regenerative.csv"), est.probabilities, est.stderr)
    regen_n = DiscretePMF.from_mapping(_n_marginal(est.probabilities))
    rows = []
    cf = closed_form_n_marginal(cfg)
    if cf is not None:
        _io.write_pmf_csv(run.path("pmf_closed_form.csv"), cf.as_dict())
        tv = tv_distance(regen_n, cf)
        rows.append(("regenerative-vs-closed-form", tv, 2.0 * tv))
    if st.long_run_horizon is not None:
        lcfg = cfg.sim.build(horizon=st.long_run_horizon, snapshot_times=[])
        ta = time_average(cfg.sim.initial.build(), lcfg, arr, svc, binner, st.burn_in)
        _io.write_pmf_csv(run.path("pmf_time_average.csv"), ta)
        tv = tv_distance(est.pmf(), DiscretePMF.from_mapping(ta))
        rows.append(("regenerative-vs-time-average", tv, 2.0 * tv))
        if cf is not None:
            tv = tv_distance(DiscretePMF.from_mapping(_n_marginal(ta)), cf)
            rows.append(("time-average-vs-closed-form", tv, 2.0 * tv))
    _io.write_table_csv(run.path("tv_table.csv"), ["comparison", "tv", "tv_doubled"], rows)
    run.summary.update(cycles=len(est.cycles), discarded=est.discarded,
                       mean_cycle=est.mean_cycle, tv={r[0]: r[1] for r in rows})


def cmd_hitting(cfg: ExperimentConfig, run: _Run, workers):
    arr, svc = cfg.arrival(), cfg.service()
    states = cfg.hitting.initial_states or [cfg.sim.initial]
    p = cfg.hitting.moment_order
    if p is None:
        p = cfg.lyapunov.k + 1.0 if cfg.lyapunov is not None else 1.0
    scfg = cfg.sim.build(snapshot_times=[])
    sample_rows, moment_rows = [], []
    for j, sc in enumerate(states):
        x = sc.build()
        hs = hitting_times(x, scfg, arr, svc, cfg.sim.replicas, workers)
        for r in range(len(hs.tau0)):
            sample_rows.append((j, r, hs.tau0[r], bool(hs.tau0_censored[r]),
                                hs.tau01[r], bool(hs.tau01_censored[r])))
        try:
            me = moment_estimate(hs.tau0, p, hs.tau0_censored)
            val, se, used, reliable = me.value, me.stderr, me.used, me.reliable
        except ValueError:
            val, se, used, reliable = math.nan, math.nan, 0, False
        frac = float(hs.tau0_censored.mean())
        if cfg.lyapunov is not None:
            lp = cfg.lyapunov.build()
            Lx = lyapunov(x, lp.m, lp.a_prime)
        else:
            Lx = math.nan
        ratio = val / Lx if Lx > 0 else math.nan
        moment_rows.append((j, x.n, p, val, se, frac, used, reliable, Lx, ratio))
        if not reliable:
            run.failures.append(f"state {j}: censored fraction {frac:.3f} too large")
    _io.write_table_csv(run.path("hitting_samples.csv"),
                        ["state", "replica", "tau0", "tau0_censored", "tau01", "tau01_censored"],
                        sample_rows)
    _io.write_table_csv(run.path("hitting_moments.csv"),
                        ["state", "n", "p", "moment", "stderr", "censored_fraction", "used",
                         "reliable", "lyapunov", "ratio"], moment_rows)
    run.summary.update(states=len(states), moment_order=p)


def _coupled(cfg: ExperimentConfig, workers, horizon=None):
    arr, svc = cfg.arrival(), cfg.service()
    c = cfg.coupling
    scfg = cfg.sim.build(horizon=horizon or c.horizon, snapshot_times=[])
    if isinstance(c.y_initial, StateCfg):
        outs = run_coupled(cfg.sim.initial.build(), scfg, arr, svc, c.runs, y0=c.y_initial.build(),
                           workers=workers)
    else:
        pool = StationaryPool(scfg, arr, svc, c.pool_cycles)
        outs = run_coupled(cfg.sim.initial.build(), scfg, arr, svc, c.runs, pool=pool,
                           workers=workers)
    return outs


def _tail_fit(outs, run: _Run):
    T = np.array([o.T for o in outs])
    cen = np.array([o.censored for o in outs])
    try:
        ev, surv, _ = kaplan_meier(T, cen)
        fit = tail_exponent_fit(ev, surv, sample_count=len(outs))
    except ValueError as exc:
        run.summary["tail_fit_error"] = str(exc)
        return None
    _io.write_fit_csv(run.path("tail_fit.csv"), fit)
    run.summary.update(tail_slope=fit.slope, tail_r2=fit.r2)
    return fit


def _survival_grid(cfg: ExperimentConfig):
    if cfg.coupling.grid is not None:
        return np.array(sorted(cfg.coupling.grid))
    return np.concatenate(([0.0], np.geomspace(1e-2, cfg.coupling.horizon, 200)))


def cmd_couple(cfg: ExperimentConfig, run: _Run, workers):
    outs = _coupled(cfg, workers)
    _io.write_coupling_csv(run.path("coupling.csv"), outs)
    try:
        curve = coupling_survival(outs, _survival_grid(cfg))
        _io.write_survival_csv(run.path("survival.csv"), curve)
    except ValueError as exc:
        run.failures.append(str(exc))
    _tail_fit(outs, run)
    run.summary.update(runs=len(outs), censored=int(sum(o.censored for o in outs)),
                       post_merge_equal=all(o.post_merge_equal for o in outs))
    if not all(o.post_merge_equal for o in outs):
        run.failures.append("post-merge states differ")


def cmd_drift_check(cfg: ExperimentConfig, run: _Run, workers):
    params = _need_lyapunov(cfg, "drift-check")
    arr, svc = cfg.arrival(), cfg.service()
    d = cfg.drift_check
    rng = generator(cfg.sim.seed, NS_AUDIT, Role.AUX, 0)
    rows = []
    bad = 0
    try:
        for i in range(d.samples):
            x = random_state(rng, d.max_n, d.max_elapsed, min_n=1)
            g = drift(x, arr, svc, params.m, params.a)
            b = drift_upper_bound(x, params, arr.Lambda)
            ok = g <= b < 0
            bad += not ok
            rows.append((i, x.n, float(x.x0), _io.elapsed_field(x), g, b, ok))
    except InadmissibleParameters as exc:
        run.failures.append(str(exc))
    _io.write_table_csv(run.path("drift_check.csv"),
                        ["sample", "n", "x0", "elapsed", "drift", "bound", "ok"], rows)
    env_bad = audit_envelope(arr, generator(cfg.sim.seed, NS_AUDIT, Role.AUX, 1),
                             d.envelope_samples, d.max_n, d.max_elapsed) if d.envelope_samples else []
    report = {"samples": len(rows), "violations": bad,
              "max_drift_to_bound_ratio": max((r[4] / r[5] for r in rows), default=None),
              "envelope_samples": d.envelope_samples, "envelope_violations": len(env_bad)}
    if report["max_drift_to_bound_ratio"] is not None:
        report["max_drift_to_bound_ratio"] = float(report["max_drift_to_bound_ratio"])
    run.yaml("drift_report.yaml", report)
    run.summary.update(report)
    if bad:
        run.failures.append(f"{bad} states violate the drift bound")
    if env_bad:
        run.failures.append(f"{len(env_bad)} states violate the arrival envelope")


def cmd_convergence(cfg: ExperimentConfig, run: _Run, workers):
    arr, svc = cfg.arrival(), cfg.service()
    cv = cfg.convergence
    times = sorted(cv.times)
    binner = StateBinner(cfg.stationary.binner.scheme, cfg.stationary.binner.width,
                         cfg.stationary.binner.cap)
    ref = regenerative_cycles(cfg.sim.build(), arr, svc, cfg.stationary.cycles, binner,
                              workers).pmf()
    scfg = cfg.sim.build(horizon=max(max(times), 1e-9), snapshot_times=times)
    snaps = ensemble_snapshots(cfg.sim.initial.build(), scfg, arr, svc, cv.replicas,
                               workers=workers)
    outs = _coupled(cfg, workers)
    curve = coupling_survival(outs, times)
    rng = generator(cfg.sim.seed, NS_AUDIT, Role.AUX, 2)
    rows = []
    for j, t in enumerate(times):
        tags = [binner.tag(s[j]) for s in snaps]
        tv = tv_distance(empirical_pmf((s[j] for s in snaps), binner), ref)
        tv_se = tv_bootstrap_se(tags, ref, rng, cv.bootstrap)
        ub, ub_se = float(curve.survival[j]), float(curve.stderr[j])
        ok = tv <= ub + 2.0 * math.hypot(tv_se, ub_se)
        rows.append((t, tv, tv_se, 2.0 * tv, ub, ub_se, ok))
        if not ok:
            run.failures.append(f"t={t}: binned TV {tv:.4g} above coupling bound {ub:.4g}")
    _io.write_table_csv(run.path("convergence.csv"),
                        ["t", "tv_binned", "tv_binned_se", "tv_binned_doubled", "coupling_bound",
                         "coupling_se", "bracket_ok"], rows)
    _io.write_survival_csv(run.path("survival.csv"), coupling_survival(outs, _survival_grid(cfg)))
    _tail_fit(outs, run)
    run.summary.update(bracket_ok=all(r[-1] for r in rows))


def cmd_constants(cfg: ExperimentConfig, run: _Run, workers):
    params = _need_lyapunov(cfg, "constants")
    arr = cfg.arrival()
    N = cfg.constants.N
    pK0, clamped = joint_emptying_probability(params.C0, N)
    doc = {"p01": joint_jump_probability(arr.lower0, arr.upper0), "pK0": pK0,
           "pK0_clamped": clamped, "C1": None,
           "inputs": {"C0": params.C0, "m": params.m, "a": params.a, "ell": params.ell,
                      "k": params.k, "Lambda": arr.Lambda, "lower0": arr.lower0,
                      "upper0": arr.upper0, "N": N}}
    try:
        doc["C1"] = stationary_integral_bound(params, arr.Lambda)
    except InadmissibleParameters as exc:
        run.failures.append(str(exc))
    run.yaml("constants.yaml", doc)
    _io.write_table_csv(run.path("constants.csv"), ["name", "value"],
                        [("p01", doc["p01"]), ("pK0", pK0), ("pK0_clamped", clamped),
                         ("C1", math.nan if doc["C1"] is None else doc["C1"])])
    run.summary.update(p01=doc["p01"], pK0=pK0, C1=doc["C1"])


HANDLERS = {
    "validate": cmd_validate, "simulate": cmd_simulate, "stationary": cmd_stationary,
    "hitting": cmd_hitting, "couple": cmd_couple, "drift-check": cmd_drift_check,
    "convergence": cmd_convergence, "constants": cmd_constants,
}


# --- driver -------------------------------------------------------------------

def execute(command: str, cfg: ExperimentConfig, out_dir: Path, workers=None) -> tuple[int, dict]:
    """Run ``command`` writing only under ``out_dir``; returns exit code and summary."""
    out_dir.mkdir(parents=True, exist_ok=True)
    run = _Run(out_dir)
    started = _dt.datetime.now(_dt.timezone.utc)
    t0 = time.perf_counter()
    code = EXIT_OK
    run.yaml("config_resolved.yaml", cfg.to_dict())
    try:
        HANDLERS[command](cfg, run, workers)
    except EnvelopeViolation as exc:
        run.failures.append(f"envelope violation: {exc}")
    if run.failures:
        code = EXIT_AUDIT
    echo = cfg.to_dict()
    extra = {
        "output_dir": str(out_dir),
        "spec_version": SPEC_VERSION, "package_version": __version__,
        "seed_derivation_version": SEED_DERIVATION_VERSION,
        "wall_clock": {"started_utc": started.isoformat(), "seconds": time.perf_counter() - t0},
        "exit_code": code, "failures": run.failures,
    }
    _io.write_manifest(out_dir, command, echo, [f for f in run.files if f.exists()], extra)
    run.summary["exit_code"] = code
    return code, run.summary


def _print_summary(command, out_dir, summary, failures=()):
    print(yaml.safe_dump({"command": command, "output_dir": str(out_dir),
                          **_plain(summary)}, sort_keys=False), end="")
    for f in failures:
        print(f"FAILED: {f}", file=sys.stderr)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.generic,)):
        return obj.item()
    return obj


def _rerun(manifest: Path, out_dir: Path | None, workers) -> int:
    doc = json.loads(manifest.read_text(encoding="utf-8"))
    try:
        cfg = validate_config(yaml.safe_dump(doc["config"], sort_keys=False))
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = out_dir or manifest.parent / "rerun"
    code, summary = execute(doc["command"], cfg, out_dir, workers)
    new = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    old_d = {e["path"]: e["sha256"] for e in doc["files"]}
    new_d = {e["path"]: e["sha256"] for e in new["files"]}
    differ = sorted(p for p in old_d.keys() | new_d.keys() if old_d.get(p) != new_d.get(p))
    summary["identical"] = not differ
    summary["differing_files"] = differ
    _print_summary("rerun", out_dir, summary)
    return EXIT_AUDIT if differ else code


_HELP = {
    "validate": "check the drift and hazard conditions for the configured model",
    "simulate": "write trajectories and snapshot states",
    "stationary": "regenerative stationary estimate with available comparisons",
    "hitting": "empty-set hitting times and their moments",
    "couple": "coupling times, survival curve and tail fit",
    "drift-check": "audit generator drift against its bound on random states",
    "convergence": "binned TV to stationarity against the coupling bound",
    "constants": "explicit constants of the convergence bound",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="infserv", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument("config", type=Path)
        p.add_argument("--output-dir", type=Path, default=None,
                       help="override the config's output_dir")
        p.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: $INFSERV_WORKERS or 1)")
    p = sub.add_parser("rerun", help="repeat a run from its manifest and compare digests")
    p.add_argument("manifest", type=Path)
    p.add_argument("--output-dir", type=Path, default=None)
    p.add_argument("--workers", type=int, default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "rerun":
        return _rerun(args.manifest, args.output_dir, args.workers)
    try:
        cfg = load_config(args.config)
        out_dir = args.output_dir or Path(cfg.output_dir)
        code, summary = execute(args.command, cfg, out_dir, args.workers)
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    _print_summary(args.command, out_dir, summary, manifest["failures"])
    return code


run_cli = main

if __name__ == "__main__":
    sys.exit(main())
