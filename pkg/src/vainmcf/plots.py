"""Static figures of a finished run: Omega_t, N_t profiles and monitor curves."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .grid import read_snapshot  # noqa: E402
from .runner import SUMMARY  # noqa: E402

MAX_SEQUENCE = 24


class RunDirError(ValueError):
    """The directory does not hold a completed run."""


def _read_csv(path: Path) -> dict:
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="utf-8")
    data = np.atleast_1d(data)
    return {name: data[name] for name in data.dtype.names} if data.size else {}


def _plane(u: np.ndarray) -> np.ndarray:
    """2D slice through the middle of every axis beyond the second."""
    while u.ndim > 2:
        u = u[..., u.shape[-1] // 2]
    return u


def _snapshots(run: Path):
    files = sorted((run / "snapshots").glob("u_*.mcfs"))
    return [read_snapshot(f) for f in files]


def plot_omega(run: Path, summary: dict, out: Path) -> list[Path]:
    fields = _snapshots(run)
    if not fields:
        return []
    level = summary["level"]
    spec = fields[0].spec
    written = []
    cmap = plt.get_cmap("viridis")
    t_max = max(f.t for f in fields) or 1.0
    if spec.dim == 1:
        fig, ax = plt.subplots(figsize=(6, 4))
        x = spec.axis(0)
        for f in fields:
            ax.plot(x, np.minimum(f.values, f.cap or np.inf), color=cmap(f.t / t_max), lw=1)
        ax.axhline(level, color="k", ls="--", lw=0.8)
        ax.set_xlabel("x1")
        ax.set_ylabel("u")
        fig.savefig(out / "omega.png", dpi=120)
        plt.close(fig)
        return [out / "omega.png"]

    x1, x2 = spec.axis(0), spec.axis(1)
    fig, ax = plt.subplots(figsize=(6, 6))
    for f in fields[:: max(1, len(fields) // 8)]:
        ind = (_plane(f.values) < level).astype(float)
        if ind.any():
            ax.contourf(x2, x1, ind, levels=[0.5, 1.5], colors=[cmap(f.t / t_max)], alpha=0.35)
            ax.contour(x2, x1, ind, levels=[0.5], colors=[cmap(f.t / t_max)], linewidths=1)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_aspect("equal")
    ax.set_xlabel("x2")
    ax.set_ylabel("x1")
    ax.set_title("Omega_t, colour = t")
    fig.savefig(out / "omega.png", dpi=120)
    plt.close(fig)
    written.append(out / "omega.png")

    seq = out / "omega"
    seq.mkdir(exist_ok=True)
    for old in seq.glob("*.png"):
        old.unlink()
    for k, f in enumerate(fields[:: max(1, -(-len(fields) // MAX_SEQUENCE))]):
        fig, ax = plt.subplots(figsize=(4, 4))
        ind = (_plane(f.values) < level).astype(float)
        ax.contourf(x2, x1, ind, levels=[-0.5, 0.5, 1.5], colors=["white", "tab:blue"])
        ax.axhline(0.0, color="k", lw=0.6)
        ax.set_aspect("equal")
        ax.set_title(f"t = {f.t:.4g}")
        path = seq / f"omega_{k:04d}.png"
        fig.savefig(path, dpi=80)
        plt.close(fig)
        written.append(path)
    return written


def plot_boundary(run: Path, out: Path) -> list[Path]:
    data = _read_csv(run / "boundary.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    if data:
        t = data["t"]
        if "x2" in data:
            sc = ax.scatter(data["x2"], data["x1"], c=t, s=2, cmap="viridis")
            ax.set_xlabel("x2")
            ax.set_aspect("equal")
        else:
            sc = ax.scatter(t, data["x1"], c=t, s=4, cmap="viridis")
            ax.set_xlabel("t")
        fig.colorbar(sc, ax=ax, label="t")
    ax.set_ylabel("x1")
    ax.set_title("N_t profiles")
    fig.savefig(out / "boundary.png", dpi=120)
    plt.close(fig)
    return [out / "boundary.png"]


def plot_monitors(run: Path, out: Path) -> list[Path]:
    data = _read_csv(run / "monitors.csv")
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    if data:
        t = data["t"]
        a1.plot(t, data["s_w"], label="s_w")
        a1.set_ylabel("sup (x1 - eps)+ / w")
        a1.legend()
        a2.semilogy(t, np.maximum(data["band_supA"], 1e-300), label="band_supA")
        a2.semilogy(t, np.maximum(data["global_supA"], 1e-300), label="global_supA")
        a2.set_ylabel("|A|")
        a2.legend()
    a2.set_xlabel("t")
    fig.savefig(out / "monitors.png", dpi=120)
    plt.close(fig)
    return [out / "monitors.png"]


def plot_run(run_dir) -> list[Path]:
    """Render all figures into ``run_dir/plots``; raises :class:`RunDirError`."""
    run = Path(run_dir)
    if not run.is_dir():
        raise RunDirError(f"{run} is not a directory")
    if not (run / SUMMARY).exists() or not (run / "monitors.csv").exists():
        raise RunDirError(f"{run} holds no completed run")
    summary = json.loads((run / SUMMARY).read_text())
    out = run / "plots"
    out.mkdir(exist_ok=True)
    return plot_omega(run, summary, out) + plot_boundary(run, out) + plot_monitors(run, out)
