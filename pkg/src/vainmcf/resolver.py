"""Singularity-resolving solutions from capped complete-graph flows.

Starting from a vain open set ``omega0`` the initial height
``u0 = 1/d + |x|^2`` (``d`` the distance to the complement) is cut at height
``a``, mollified, and evolved by graphical mean curvature flow with Dirichlet
value ``a`` on a large ball. The evolving domains are recovered as the
sublevel sets ``{u < theta * a}``. A ladder of increasing caps ``a`` shows how
far the result is from the ``a -> inf`` limit.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import ConfigurationError, GridSpec, ScalarField, central_gradient
from .mollifier import prepare_initial_data
from .solver import InstabilityError, StepControl, initial_state, run_until
from .vanity import DomainError, DomainMask, PreconditionError, distance_field, is_vain_set, sublevel_mask

log = logging.getLogger(__name__)


# -- initial domains -------------------------------------------------------------

def disc(spec: GridSpec, radius: float, center: Sequence[float] | None = None) -> DomainMask:
    """Ball of ``radius``; the center must lie on the plane ``x1 = 0``."""
    center = tuple(center) if center is not None else (0.0,) * spec.dim
    if center[0] != 0.0:
        log.debug("disc center off the symmetry plane; the set is not vain")
    return DomainMask(spec, spec.radius_squared(center) < radius ** 2)


def ellipse(spec: GridSpec, semi_axes: Sequence[float]) -> DomainMask:
    X = spec.mesh()
    return DomainMask(spec, sum((x / s) ** 2 for x, s in zip(X, semi_axes)) < 1.0)


def band(spec: GridSpec, half_width: float, half_length: float) -> DomainMask:
    """``|x1| < half_width`` truncated to ``|x_k| < half_length`` for k >= 2."""
    X = spec.mesh()
    inside = np.abs(X[0]) < half_width
    for x in X[1:]:
        inside &= np.abs(x) < half_length
    return DomainMask(spec, inside)


def graph_domain(spec: GridSpec, profile) -> DomainMask:
    """``{|x1| < h(xhat)}`` for a half-width profile ``h`` of the other axes."""
    X = spec.mesh()
    return DomainMask(spec, np.abs(X[0]) < profile(*X[1:]))


def smooth_max(a, b, k: float):
    """Polynomial smooth maximum; equals ``max(a, b)`` where ``|a - b| >= k``."""
    if k <= 0:
        return np.maximum(a, b)
    g = np.maximum(k - np.abs(a - b), 0.0) / k
    return np.maximum(a, b) + 0.25 * k * g * g


def dumbbell_profile(lobe_radius: float, separation: float, neck: float, fillet: float = 0.0):
    """Half-width of two balls centred at ``x2 = +-separation`` on the plane,
    joined by a neck of half-width ``neck`` for ``|x2| <= separation``.
    ``fillet > 0`` rounds the concave junctions."""

    def h(*xhat):
        rest = sum(x * x for x in xhat[1:]) if len(xhat) > 1 else 0.0
        y = xhat[0]
        lobes = np.maximum(lobe_radius ** 2 - (np.abs(y) - separation) ** 2 - rest, 0.0)
        width = np.sqrt(lobes)
        bridge = np.where(np.abs(y) <= separation, np.sqrt(np.maximum(neck ** 2 - rest, 0.0)), 0.0)
        return np.where(width > 0, smooth_max(width, bridge, fillet), bridge)

    return h


def dumbbell(spec: GridSpec, lobe_radius: float, separation: float, neck: float,
             fillet: float = 0.0) -> DomainMask:
    if spec.dim < 2:
        raise ConfigurationError("a dumbbell needs dimension >= 2")
    return graph_domain(spec, dumbbell_profile(lobe_radius, separation, neck, fillet))


def build_initial(omega0: DomainMask) -> ScalarField:
    """``u0 = 1/d + |x|^2`` on the set and ``+inf`` off it."""
    if omega0.empty:
        raise DomainError("initial domain is empty")
    d = distance_field(omega0).values
    r2 = omega0.spec.radius_squared()
    u0 = np.full(omega0.spec.shape, np.inf)
    inside = omega0.inside
    u0[inside] = 1.0 / d[inside] + r2[inside]
    return ScalarField(omega0.spec, u0)


# -- boundary samples ----------------------------------------------------------------

@dataclass
class BoundarySamples:
    """Points of ``N_t`` (boundary with ``x1 > 0``) and outward unit normals.

    ``axis`` records the grid axis of the edge each sample was found on.
    """

    points: np.ndarray
    normals: np.ndarray
    axis: np.ndarray

    def __len__(self):
        return len(self.points)


def extract_boundary(omega: DomainMask, u: ScalarField | None = None, level: float | None = None) -> BoundarySamples:
    """Sub-cell crossings of ``{u = level}`` on grid edges, restricted to
    ``x1 > 0``.

    Without a field the indicator of the complement is used at level 1/2,
    which puts samples at edge midpoints.
    """
    spec = omega.spec
    n = spec.dim
    if omega.empty:
        return BoundarySamples(np.zeros((0, n)), np.zeros((0, n)), np.zeros(0, dtype=int))
    if u is None:
        f = (~omega.inside).astype(float)
        level = 0.5
    else:
        f = np.array(u.values, dtype=float)
        if u.cap is not None:
            f = np.minimum(f, u.cap)
    g = f - level
    grad = central_gradient(f, spec)
    X = spec.mesh()
    pts, nrm, axs = [], [], []
    for k in range(n):
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[k] = slice(None, -1)
        hi[k] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        g0, g1 = g[lo], g[hi]
        # one endpoint inside the set, the other not
        cross = (omega.inside[lo] != omega.inside[hi]) & np.isfinite(g0) & np.isfinite(g1)
        if u is not None:
            cross &= (g0 < 0) != (g1 < 0)
        if not cross.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(g1 != g0, g0 / (g0 - g1), 0.5)
        s = np.clip(s[cross], 0.0, 1.0)
        p = np.stack([x[lo][cross] * (1 - s) + x[hi][cross] * s for x in X], axis=1)
        v = np.stack([gr[lo][cross] * (1 - s) + gr[hi][cross] * s for gr in grad], axis=1)
        pts.append(p)
        nrm.append(v)
        axs.append(np.full(len(p), k))
    if not pts:
        return BoundarySamples(np.zeros((0, n)), np.zeros((0, n)), np.zeros(0, dtype=int))
    P, V, K = np.concatenate(pts), np.concatenate(nrm), np.concatenate(axs)
    norm = np.linalg.norm(V, axis=1)
    keep = (P[:, 0] > 0) & (norm > 0)
    V = V[keep] / norm[keep, None]
    return BoundarySamples(P[keep], V, K[keep])


@dataclass
class AngleReport:
    count: int
    mean: float = float("nan")
    min: float = float("nan")
    max: float = float("nan")
    angles: np.ndarray = field(default_factory=lambda: np.zeros(0))


def contact_angle(samples: BoundarySamples, band_width: float) -> AngleReport:
    """Angle (degrees) between ``N_t`` and the plane ``x1 = 0`` at samples
    with ``x1 < band_width``; 90 means a perpendicular meeting. Reported only."""
    near = samples.points[:, 0] < band_width if len(samples) else np.zeros(0, dtype=bool)
    if not near.any():
        return AngleReport(0)
    ang = np.degrees(np.arccos(np.clip(np.abs(samples.normals[near, 0]), 0.0, 1.0)))
    return AngleReport(int(near.sum()), float(ang.mean()), float(ang.min()), float(ang.max()), ang)


# -- the ladder ---------------------------------------------------------------------------

@dataclass
class ResolverConfig:
    omega0: DomainMask
    caps: Sequence[float] = (10.0, 20.0, 40.0)
    eps: Sequence[float] | None = None
    theta: float = 0.5
    times: Sequence[float] = (0.0,)
    cfl: float = 0.5
    ball_margin: int = 2
    stability_tol: float = 0.05
    keep_frames: bool = True

    def validate(self):
        if not 0 < self.theta < 1:
            raise ConfigurationError("theta must lie in (0, 1)")
        if list(self.caps) != sorted(self.caps) or len(set(self.caps)) != len(self.caps):
            raise ConfigurationError("caps must be strictly increasing")
        if self.eps is not None and len(self.eps) != len(self.caps):
            raise ConfigurationError("one mollification radius per cap is required")
        if list(self.times) != sorted(self.times) or self.times[0] < 0:
            raise ConfigurationError("output times must be sorted and nonnegative")
        if self.omega0.empty:
            raise DomainError("initial domain is empty")
        check = is_vain_set(self.omega0)
        if not check:
            raise PreconditionError(f"initial domain is not vain (witness {check.witness})")

    def eps_for(self, j: int) -> float:
        if self.eps is not None:
            return float(self.eps[j])
        return 2.0 * max(self.omega0.spec.spacing)


@dataclass
class RungReport:
    a: float
    eps: float
    extinction_time: float | None
    clamp_count: int
    steps: int
    error: str | None = None
    frame_clamps: list[int] = field(default_factory=list)


@dataclass
class ResolvedSlices:
    times: list[float]
    masks: list[DomainMask]
    extinct: list[bool]
    frames: list[ScalarField]
    level: float
    rungs: list[RungReport]
    stability: list[float] = field(default_factory=list)
    extinction_time: float | None = None
    extinction_time_limit: float | None = None

    def boundary(self, k: int) -> BoundarySamples:
        u = self.frames[k] if self.frames else None
        return extract_boundary(self.masks[k], u, self.level if u is not None else None)

    @property
    def rung_stable(self) -> bool:
        """Symmetric-difference volumes shrink along the ladder."""
        return all(b <= a for a, b in zip(self.stability, self.stability[1:]))


def _extinction_time(times, areas) -> float | None:
    """First empty output time, refined by extrapolating the area linearly
    from the last two nonempty outputs (curve-shortening areas drop linearly)."""
    for k, A in enumerate(areas):
        if A == 0 and k > 0:
            t_hi = times[k]
            if k >= 2 and areas[k - 2] > areas[k - 1]:
                rate = (areas[k - 2] - areas[k - 1]) / (times[k - 1] - times[k - 2])
                est = times[k - 1] + areas[k - 1] / rate
                return float(min(max(est, times[k - 1]), t_hi))
            return float(t_hi)
    return None


def extrapolate_limit(caps: Sequence[float], values: Sequence[float | None]) -> float | None:
    """Estimate ``lim_{a -> inf}`` assuming ``T(a) = T_inf - C / a`` from the
    last two rungs."""
    if len(caps) < 2 or values[-1] is None or values[-2] is None:
        return None
    a0, a1 = caps[-2], caps[-1]
    return float((a1 * values[-1] - a0 * values[-2]) / (a1 - a0))


def run_rung(config: ResolverConfig, j: int, u0: ScalarField | None = None):
    """Evolve one rung; returns (masks, frames, report)."""
    spec = config.omega0.spec
    a = float(config.caps[j])
    eps = config.eps_for(j)
    level = config.theta * a
    if u0 is None:
        u0 = build_initial(config.omega0)
    prepared = prepare_initial_data(u0, config.omega0, a, eps)
    state = initial_state(prepared, a, margin=config.ball_margin)
    ctl = StepControl(config.cfl)
    masks, frames, frame_clamps = [], [], []

    def observe(s):
        mask = sublevel_mask(s.u, level)
        masks.append(mask)
        frame_clamps.append(s.clamp_count)
        if config.keep_frames:
            frames.append(s.u)
        return mask.volume()

    times = list(config.times)
    error = None
    steps = clamps = 0
    try:
        # t=0 is observed by run_until itself
        if times[0] > 0:
            state, _ = run_until(state, ctl, times[0])
        final, _ = run_until(state, ctl, times[-1], [observe], times=times[1:],
                             stop=lambda s: masks[-1].empty)
        steps, clamps = final.step_count, final.clamp_count
    except InstabilityError as exc:
        error = str(exc)
        log.warning("rung a=%g failed: %s", a, exc)
    # after extinction the sublevel set stays empty (min u is nondecreasing)
    while len(masks) < len(times) and masks and masks[-1].empty and error is None:
        masks.append(DomainMask(spec, np.zeros(spec.shape, dtype=bool)))
        frame_clamps.append(frame_clamps[-1])
        if config.keep_frames:
            frames.append(frames[-1])
    areas = [m.volume() for m in masks]
    t_ext = _extinction_time(times[:len(areas)], areas)
    return masks, frames, RungReport(a, eps, t_ext, clamps, steps, error, frame_clamps)


def resolve(config: ResolverConfig, workers: int = 1) -> ResolvedSlices:
    """Run the cap ladder and return the slices of its last rung.

    Rungs are independent; ``workers > 1`` runs them in threads (the stepping
    kernels release the GIL). Results do not depend on ``workers``.
    """
    config.validate()
    u0 = build_initial(config.omega0)
    idx = range(len(config.caps))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(lambda j: run_rung(config, j, u0), idx))
    else:
        outs = [run_rung(config, j, u0) for j in idx]
    all_masks, reports, frames = [], [], []
    for masks, frames_j, rep in outs:
        all_masks.append(masks)
        reports.append(rep)
        frames = frames_j
        log.info("rung a=%g: extinction %s, clamps %d", rep.a, rep.extinction_time, rep.clamp_count)
    stability = []
    for prev, cur in zip(all_masks, all_masks[1:]):
        k = min(len(prev), len(cur))
        diffs = [float((p.inside ^ c.inside).sum() * np.prod(p.spec.spacing)) for p, c in zip(prev[:k], cur[:k])]
        stability.append(max(diffs) if diffs else 0.0)
    masks = all_masks[-1]
    times = list(config.times)[:len(masks)]
    level = config.theta * config.caps[-1]
    for m in masks:
        if not is_vain_set(m):
            log.warning("extracted slice is not vain")
    return ResolvedSlices(
        times=times,
        masks=masks,
        extinct=[m.empty for m in masks],
        frames=frames,
        level=level,
        rungs=reports,
        stability=stability,
        extinction_time=reports[-1].extinction_time,
        extinction_time_limit=extrapolate_limit(config.caps, [r.extinction_time for r in reports]),
    )
