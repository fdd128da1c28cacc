"""Scenario orchestration: ladder, monitors, events, and the artifact tree."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig
from .diagnostics import (
    MonitorResult, SingularEvent, detect_singularities, diagnose, domain_diameter,
    monitor_curvature_estimate, monitor_w_estimate,
)
from .grid import save_field, write_snapshot
from .resolver import ResolvedSlices, contact_angle, resolve
from .solver import FlowState, InstabilityError, dirichlet_ball, flow_monitor_row

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
SUMMARY = "summary.json"


@dataclass
class RunResult:
    config: ScenarioConfig
    slices: ResolvedSlices
    diameter: float
    eps: float
    live: list[int]
    monitors: list[dict]
    w_monitor: MonitorResult
    curvature_monitor: MonitorResult
    events: list[SingularEvent]
    pre_event_index: int | None
    extras: dict = field(default_factory=dict)

    def band_ratio(self, k: int) -> float:
        """``sup_{x1 > 2 eps} |A| / sup |A|`` on output frame ``k``."""
        row = self.monitors[self.live.index(k)]
        g = row["global_supA"]
        return row["band_supA"] / g if g > 0 else 0.0


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    """Solve the ladder of ``cfg`` and evaluate every diagnostic on its last rung.

    Raises :class:`InstabilityError` when a rung blew up.
    """
    spec = cfg.grid()
    rc = cfg.resolver_config(spec)
    slices = resolve(rc, workers=cfg.workers)
    for rep in slices.rungs:
        if rep.error:
            raise InstabilityError(f"rung a={rep.a:g}: {rep.error}")
    omega0 = rc.omega0
    diameter = domain_diameter(spec, omega0.inside)
    eps = cfg.diag_eps if cfg.diag_eps is not None else cfg.eps_fraction * diameter
    regions = [m.inside for m in slices.masks]
    live = [k for k, m in enumerate(slices.masks) if not m.empty]
    frames_live = [slices.frames[k] for k in live]
    regions_live = [regions[k] for k in live]
    clamps = slices.rungs[-1].frame_clamps
    monitors = []
    for k, fr, reg in zip(live, frames_live, regions_live):
        mon = dict(diagnose(fr, eps, reg).monitors)
        mon["t"] = slices.times[k]
        mon["clampcount"] = clamps[k] if k < len(clamps) else clamps[-1]
        monitors.append(mon)
    wmon = monitor_w_estimate(frames_live, eps, regions_live, cfg.drift_tol)
    cmon = monitor_curvature_estimate(frames_live, eps, regions_live)
    # frames up to the first empty one, so extinction is visible to the detector
    upto = live[-1] + 2 if live else 0
    events = detect_singularities(slices.frames[:upto], regions[:upto], cfg.thresholds, diameter)
    pre = None
    ext = [e for e in events if e.kind == "extinction"]
    if ext:
        t_last = ext[-1].t
        before = [k for k in live if slices.times[k] < t_last]
        pre = before[-1] if before else None
    return RunResult(cfg, slices, diameter, eps, live, monitors, wmon, cmon, events, pre)


# -- artifacts -----------------------------------------------------------------------

def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([v if isinstance(v, str) else _num(v) for v in row])


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict:
    import numba
    import scipy

    return {
        "vainmcf": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_artifacts(result: RunResult, out_dir, config_text: bytes | None = None) -> Path:
    """Write the run tree under ``out_dir`` and return its path.

    Layout: ``config.ini``, ``snapshots/omega0.mcfs``, ``snapshots/u_KKKK.mcfs``,
    ``boundary.csv`` (N_t samples), ``events.csv``, ``monitors.csv``,
    ``flow.csv`` (solver scalars), ``ladder.csv``, ``summary.json`` and
    ``manifest.json`` listing every other file with its SHA-256.
    """
    cfg, sl = result.config, result.slices
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    snap = out / "snapshots"
    snap.mkdir(exist_ok=True)
    for old in snap.glob("*.mcfs"):
        old.unlink()
    n = cfg.dim
    files = []
    if config_text is not None:
        (out / "config.ini").write_bytes(config_text)
        files.append("config.ini")

    omega0 = cfg.domain()
    save_field(snap / "omega0.mcfs", omega0.as_field())
    files.append("snapshots/omega0.mcfs")
    if cfg.snapshot_every > 0 and sl.frames:
        for k in result.live[:: cfg.snapshot_every]:
            fr = sl.frames[k]
            name = f"snapshots/u_{k:04d}.mcfs"
            write_snapshot(out / name, fr.spec, fr.values, sl.times[k], fr.cap)
            files.append(name)

    xs = [f"x{j + 1}" for j in range(n)]
    nus = [f"nu{j + 1}" for j in range(n)]
    rows = []
    for k in result.live:
        b = sl.boundary(k)
        if not len(b):
            continue
        ang = np.degrees(np.arccos(np.clip(np.abs(b.normals[:, 0]), 0.0, 1.0)))
        for p, v, a in zip(b.points, b.normals, ang):
            rows.append([sl.times[k], *p, *v, a])
    _write_csv(out / "boundary.csv", ["t", *xs, *nus, "angle"], rows)
    files.append("boundary.csv")

    _write_csv(out / "events.csv", ["t", *xs, "peak", "on_plane", "kind"],
               [[e.t, *e.location, e.peak, e.on_plane, e.kind] for e in result.events])
    files.append("events.csv")

    keys = ["s_w", "band_supA", "global_supA", "f_max", "clampcount"]
    _write_csv(out / "monitors.csv", ["t", *keys],
               [[m["t"], *[m[k] for k in keys]] for m in result.monitors])
    files.append("monitors.csv")

    active, _ = dirichlet_ball(omega0.spec, cfg.ball_margin)
    clamps = sl.rungs[-1].frame_clamps
    flow_rows = []
    for k in result.live:
        row = flow_monitor_row(FlowState(sl.frames[k], active, a=cfg.caps[-1], t=sl.times[k],
                                         clamp_count=clamps[k] if k < len(clamps) else 0))
        flow_rows.append([row["t"], row["max_A"], row["clamp_count"], row["vanity_residual"]])
    _write_csv(out / "flow.csv", ["t", "max_A", "clamp_count", "vanity_residual"], flow_rows)
    files.append("flow.csv")

    _write_csv(out / "ladder.csv", ["a", "eps", "extinction_time", "clamp_count", "steps"],
               [[r.a, r.eps, np.nan if r.extinction_time is None else r.extinction_time,
                 r.clamp_count, r.steps] for r in sl.rungs])
    files.append("ladder.csv")

    angles = []
    for k in result.live:
        rep = contact_angle(sl.boundary(k), 2 * max(omega0.spec.spacing))
        angles.append({"t": sl.times[k], "count": rep.count, "mean": rep.mean, "min": rep.min, "max": rep.max})
    summary = {
        "level": sl.level,
        "diameter": result.diameter,
        "eps": result.eps,
        "extinction_time": sl.extinction_time,
        "extinction_time_limit": sl.extinction_time_limit,
        "rung_stability": sl.stability,
        "rung_stable": sl.rung_stable,
        "w_monitor": {"verdict": result.w_monitor.verdict, **result.w_monitor.detail},
        "curvature_monitor_verdict": result.curvature_monitor.verdict,
        "events": [asdict(e) for e in result.events],
        "pre_event_index": result.pre_event_index,
        "pre_event_band_ratio": (result.band_ratio(result.pre_event_index)
                                 if result.pre_event_index is not None else None),
        "contact_angles": angles,
        "times": sl.times,
        "live": result.live,
        "snapshot_every": cfg.snapshot_every,
        "dim": n,
    }
    (out / SUMMARY).write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    files.append(SUMMARY)

    manifest = {
        "config_sha256": cfg.source_hash,
        "config": _jsonable(cfg.as_dict()),
        "versions": versions(),
        "files": {name: _sha256(out / name) for name in sorted(files)},
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out
