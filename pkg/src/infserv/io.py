"""Plot-ready CSV emitters and run manifests.

Floats are written with ``repr`` (shortest round-tripping decimal), so equal
values always produce equal bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path
from typing import Iterable

from .model.state import SystemState


def fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(float(v))  # plain float repr, also for numpy float64
    if hasattr(v, "item"):  # numpy scalar
        return fmt(v.item())
    return str(v)


def elapsed_field(x: SystemState) -> str:
    return ";".join(repr(float(e)) for e in x.elapsed)


def parse_elapsed(field: str) -> tuple[float, ...]:
    return tuple(float(s) for s in field.split(";")) if field else ()


def _write(path, header, rows: Iterable) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_states_csv(path, rows: Iterable[tuple[int, float, SystemState]]) -> Path:
    """``replica, time, n, x0, elapsed`` with elapsed times joined by ``;``."""
    return _write(path, ["replica", "time", "n", "x0", "elapsed"],
                  ((r, float(t), x.n, float(x.x0), elapsed_field(x)) for r, t, x in rows))


def read_states_csv(path) -> list[tuple[int, float, SystemState]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [(int(r["replica"]), float(r["time"]),
                 SystemState(float(r["x0"]), parse_elapsed(r["elapsed"])))
                for r in csv.DictReader(fh)]


def _tag_str(tag) -> str:
    return ";".join(fmt(t) for t in tag) if isinstance(tag, tuple) else fmt(tag)


def write_pmf_csv(path, pmf: dict, stderr: dict | None = None) -> Path:
    """``tag, probability`` (plus ``stderr`` when given)."""
    if stderr is None:
        return _write(path, ["tag", "probability"], ((_tag_str(k), float(v)) for k, v in pmf.items()))
    return _write(path, ["tag", "probability", "stderr"],
                  ((_tag_str(k), float(v), float(stderr.get(k, 0.0))) for k, v in pmf.items()))


def write_survival_csv(path, curve) -> Path:
    return _write(path, ["t", "survival", "stderr"],
                  zip(map(float, curve.grid), map(float, curve.survival), map(float, curve.stderr)))


def write_fit_csv(path, fit) -> Path:
    return _write(path, ["slope", "r2", "window_lo", "window_hi", "points", "power_law_consistent"],
                  [(float(fit.slope), float(fit.r2), float(fit.window[0]), float(fit.window[1]),
                    int(fit.points), bool(fit.power_law_consistent))])


def write_coupling_csv(path, outcomes) -> Path:
    """``run, T, censored, tau00, n_attempts``; a censored ``T`` equals the horizon."""
    return _write(path, ["run", "T", "censored", "tau00", "n_attempts"],
                  ((i, float(o.T), o.censored, float(o.tau00), o.n_attempts)
                   for i, o in enumerate(outcomes)))


def write_table_csv(path, header, rows) -> Path:
    return _write(path, header, rows)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, config: dict, files: list[Path], extra: dict) -> Path:
    """Write ``manifest.json`` listing every output with its SHA-256 digest."""
    out_dir = Path(out_dir)
    entries = [{"path": os.path.relpath(f, out_dir), "sha256": sha256_file(f)} for f in files]
    doc = {"command": command, "config": config, **extra, "files": entries}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


def verify_manifest(path) -> list[str]:
    """Files whose current digest differs from the one recorded (or that vanished)."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    bad = []
    for e in doc["files"]:
        f = path.parent / e["path"]
        if not f.exists() or sha256_file(f) != e["sha256"]:
            bad.append(e["path"])
    return bad
