"""Geometry of the evolving graph and monitors of the a-priori estimates.

For ``M_t = graph u(., t)`` in R^{n+1}:

* ``w = d_1 u / sqrt(1 + |Du|^2)``, the first component of the downward normal;
* ``|A|^2 = g^ik g^jl h_ij h_kl`` with ``h_ij = u_ij / W`` and
  ``g^ij = delta_ij - u_i u_j / W^2``, ``W = sqrt(1 + |Du|^2)``;
* the Laplace-Beltrami operator in graph coordinates,
  ``Lap f = g^ij f_ij - (g^ij u_ij) (Du . Df) / W^2``;
* the time derivative following normal trajectories,
  ``d/dt f = f_t - (u_t / W^2) Du . Df``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from .grid import GridSpec, ScalarField, central_gradient, central_hessian


class InsufficientFramesError(ValueError):
    pass


def _metric(Du: np.ndarray):
    W2 = 1.0 + np.sum(Du * Du, axis=0)
    ginv = -np.einsum("i...,j...->ij...", Du, Du) / W2
    for k in range(Du.shape[0]):
        ginv[k, k] += 1.0
    return W2, ginv


def normal_component_w(u: ScalarField) -> ScalarField:
    Du = central_gradient(u)
    W = np.sqrt(1.0 + np.sum(Du * Du, axis=0))
    return u.with_values(Du[0] / W, cap=None)


def second_fundamental_norm(u: ScalarField) -> ScalarField:
    """Pointwise ``|A|^2`` of the graph of ``u``."""
    Du = central_gradient(u)
    D2u = central_hessian(u)
    W2, ginv = _metric(Du)
    h = D2u / np.sqrt(W2)
    # mixed tensor h^i_j = g^ik h_kj, then |A|^2 = trace(h^i_j h^j_i)
    mixed = np.einsum("ik...,kj...->ij...", ginv, h)
    A2 = np.einsum("ij...,ji...->...", mixed, mixed)
    return u.with_values(np.maximum(A2, 0.0), cap=None)


def laplace_beltrami(u: ScalarField, f: np.ndarray) -> np.ndarray:
    """Laplace-Beltrami of the grid function ``f`` on ``graph u``."""
    spec = u.spec
    Du = central_gradient(u)
    D2u = central_hessian(u)
    Df = central_gradient(f, spec)
    D2f = central_hessian(f, spec)
    W2, ginv = _metric(Du)
    trace_u = np.einsum("ij...,ij...->...", ginv, D2u)
    trace_f = np.einsum("ij...,ij...->...", ginv, D2f)
    return trace_f - trace_u * np.sum(Du * Df, axis=0) / W2


def _time_derivative(values: Sequence[np.ndarray], times: Sequence[float]) -> np.ndarray:
    """Derivative at the middle of three times (second order) or at the later
    of two times (first order)."""
    if len(values) == 2:
        return (values[1] - values[0]) / (times[1] - times[0])
    (f0, f1, f2), (t0, t1, t2) = values, times
    a, b = t1 - t0, t2 - t1
    return (-(b / (a * (a + b))) * f0 + ((b - a) / (a * b)) * f1 + (a / (b * (a + b))) * f2)


def normal_time_derivative(frames: Sequence[ScalarField], fvals: Sequence[np.ndarray]) -> np.ndarray:
    """``d/dt f`` along normal trajectories at the middle of three frames
    (or at the second of two)."""
    times = [fr.t for fr in frames]
    u = frames[1]
    u_t = _time_derivative([fr.values for fr in frames], times)
    f_t = _time_derivative(fvals, times)
    Du = central_gradient(u)
    Df = central_gradient(fvals[1], u.spec)
    W2 = 1.0 + np.sum(Du * Du, axis=0)
    return f_t - u_t * np.sum(Du * Df, axis=0) / W2


# -- cut-off function ----------------------------------------------------------

@dataclass(frozen=True)
class CutoffSpec:
    """Shrinking-ball cut-off centred at ``X0 = (R0 + eps, 0, ..., 0)``."""

    R0: float
    eps: float
    dim: int
    delta: float = 0.0

    def __post_init__(self):
        if self.R0 <= 0 or self.eps <= 0 or self.delta < 0:
            raise ValueError("need R0 > 0, eps > 0, delta >= 0")

    @property
    def X0(self) -> np.ndarray:
        X0 = np.zeros(self.dim + 1)
        X0[0] = self.R0 + self.eps
        return X0


def _cutoff_quadratic(X: np.ndarray, t: float, spec: CutoffSpec) -> np.ndarray:
    """``(R0^2 - 2nt - |X - X0|^2) / (2 R0)`` without the positive part;
    ``X`` has the ambient coordinate on its last axis."""
    d2 = np.sum((np.asarray(X, dtype=float) - spec.X0) ** 2, axis=-1)
    return (spec.R0 ** 2 - 2 * spec.dim * t - d2) / (2 * spec.R0)


def cutoff_phi(X, t: float, spec: CutoffSpec):
    q = _cutoff_quadratic(X, t, spec)
    return np.maximum(q, 0.0)


def cutoff_psi(X, t: float, spec: CutoffSpec):
    """``phi - delta t``, the shifted cut-off used in the gradient estimate."""
    return cutoff_phi(X, t, spec) - spec.delta * t


def band_weight(x1: np.ndarray, eps: float) -> np.ndarray:
    """``(x1 - eps)_+``, the large-ball limit of the cut-off."""
    return np.maximum(np.asarray(x1) - eps, 0.0)


def _graph_points(u: ScalarField) -> np.ndarray:
    X = u.spec.mesh()
    return np.stack(X + [u.values], axis=-1)


def _windows(frames: Sequence[ScalarField]):
    """Consecutive triples, or the single pair when only two frames exist."""
    if len(frames) < 2:
        raise InsufficientFramesError("need at least two frames")
    if len(frames) == 2:
        return [list(frames)]
    return [frames[k - 1:k + 2] for k in range(1, len(frames) - 1)]


def _interior(spec: GridSpec, width: int) -> np.ndarray:
    m = np.zeros(spec.shape, dtype=bool)
    m[(slice(width, -width),) * spec.dim] = True
    return m


def heat_residual_phi(frames: Sequence[ScalarField], spec: CutoffSpec,
                      region: np.ndarray | None = None, margin: int = 2) -> float:
    """Max of ``|(d/dt - Lap) phi|`` over the support of the cut-off.

    Uses the middle frame of every consecutive triple (with two frames, a
    one-sided difference at the second). Nodes whose spatial
    stencil or time neighbours leave the support are excluded, so only the
    smooth branch of ``phi`` enters.
    """
    worst = 0.0
    for trip in _windows(frames):
        q = [_cutoff_quadratic(_graph_points(fr), fr.t, spec) for fr in trip]
        res = normal_time_derivative(trip, q) - laplace_beltrami(trip[1], q[1])
        ok = _interior(trip[1].spec, margin)
        pos = np.logical_and.reduce([qq > 0 for qq in q])
        ok &= ndimage.binary_erosion(pos, iterations=margin, border_value=0)
        if region is not None:
            ok &= region
        if ok.any():
            worst = max(worst, float(np.nanmax(np.abs(res[ok]))))
    return worst


def w_evolution_residual(frames: Sequence[ScalarField], region: np.ndarray | None = None,
                         margin: int = 3) -> float:
    """Max of ``|(d/dt - Lap) w - |A|^2 w|`` over ``region`` (all triples)."""
    worst = 0.0
    for trip in _windows(frames):
        w = [normal_component_w(fr).values for fr in trip]
        A2 = second_fundamental_norm(trip[1]).values
        res = normal_time_derivative(trip, w) - laplace_beltrami(trip[1], w[1]) - A2 * w[1]
        ok = _interior(trip[1].spec, margin)
        if region is not None:
            ok &= region
        worst = max(worst, float(np.nanmax(np.abs(res[ok]))))
    return worst


# -- monitors --------------------------------------------------------------------

@dataclass
class DiagnosticsFrame:
    t: float
    w: ScalarField
    A2: ScalarField
    eps: float
    monitors: dict = field(default_factory=dict)
    wbar: float = float("nan")


def curvature_constant(wbar: float, n: int) -> float:
    """``C(wbar, n) = 2 (2 + 2 wbar^-2) n wbar^-2`` bounding ``f^2`` at an
    interior maximum of ``f = |A| phi / (w - wbar)``."""
    return 2 * (2 + 2 / wbar ** 2) * n / wbar ** 2


def diagnose(u: ScalarField, eps: float, region: np.ndarray | None = None) -> DiagnosticsFrame:
    """Geometric fields and monitor suprema of one frame.

    ``region`` restricts every supremum (by default: all nodes). Empty
    suprema are reported as 0.
    """
    spec = u.spec
    if region is None:
        region = np.ones(spec.shape, dtype=bool)
    w = normal_component_w(u)
    A2 = second_fundamental_norm(u)
    A = np.sqrt(A2.values)
    x1 = spec.mesh()[0]
    weight = band_weight(x1, eps)
    band = region & (x1 > eps)
    band2 = region & (x1 > 2 * eps)

    def sup(values, mask):
        vals = values[mask]
        vals = vals[np.isfinite(vals)]
        return float(vals.max()) if vals.size else 0.0

    wv = w.values
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(wv > 0, weight / wv, np.inf)
    violations = int(np.sum(band & (wv <= 0)))
    wbar = 0.5 * float(wv[band].min()) if band.any() else float("nan")
    with np.errstate(divide="ignore", invalid="ignore"):
        f = A * weight / (wv - wbar) if np.isfinite(wbar) else np.zeros_like(A)
    mon = {
        "s_w": sup(ratio, band) if violations == 0 else float("inf"),
        "band_supA": sup(A, band2),
        "global_supA": sup(A, region),
        "weighted_supA": sup(A * weight, band),
        "f_max": sup(np.where(wv > wbar, f, np.nan), band) if np.isfinite(wbar) and wbar > 0 else float("nan"),
        "w_violations": violations,
    }
    if np.isfinite(wbar) and wbar > 0:
        mon["C_bound"] = curvature_constant(wbar, spec.dim)
    return DiagnosticsFrame(u.t, w, A2, eps, mon, wbar)


@dataclass
class MonitorResult:
    times: np.ndarray
    values: np.ndarray
    verdict: bool
    detail: dict = field(default_factory=dict)


def monitor_w_estimate(frames: Sequence[ScalarField], eps: float,
                       regions: Sequence[np.ndarray] | None = None,
                       drift_tol: float = 0.05) -> MonitorResult:
    """Series ``s(t) = sup w^-1 (x1 - eps)_+`` and the verdict
    ``s(t) <= (1 + drift_tol) s(0)`` on every frame."""
    regions = regions if regions is not None else [None] * len(frames)
    diags = [diagnose(fr, eps, reg) for fr, reg in zip(frames, regions)]
    s = np.array([d.monitors["s_w"] for d in diags])
    violations = [d.t for d in diags if d.monitors["w_violations"]]
    verdict = bool(np.all(s <= (1 + drift_tol) * s[0])) and not violations
    return MonitorResult(np.array([d.t for d in diags]), s, verdict,
                         {"hypothesis_violations": violations, "s0": float(s[0])})


def monitor_curvature_estimate(frames: Sequence[ScalarField], eps: float,
                               regions: Sequence[np.ndarray] | None = None,
                               bound: float | None = None) -> MonitorResult:
    """Series of ``sup_{x1 > 2 eps} |A|``; the verdict holds when the band
    supremum stays finite (and below ``bound`` when one is given).
    ``detail`` carries the global supremum and the weighted series."""
    regions = regions if regions is not None else [None] * len(frames)
    diags = [diagnose(fr, eps, reg) for fr, reg in zip(frames, regions)]
    band = np.array([d.monitors["band_supA"] for d in diags])
    glob = np.array([d.monitors["global_supA"] for d in diags])
    weighted = np.array([d.monitors["weighted_supA"] for d in diags])
    verdict = bool(np.all(np.isfinite(band)))
    if bound is not None:
        verdict &= bool(np.all(band <= bound))
    return MonitorResult(np.array([d.t for d in diags]), band, verdict,
                         {"global_supA": glob, "weighted_supA": weighted})


# -- singularity detection ---------------------------------------------------------

@dataclass(frozen=True)
class SingularEvent:
    t: float
    location: tuple[float, ...]
    peak: float
    on_plane: bool
    kind: str  # "curvature" or "extinction"
    peak_location: tuple[float, ...] | None = None


def _centroid(spec: GridSpec, mask: np.ndarray) -> tuple[float, ...]:
    X = spec.mesh()
    return tuple(float(x[mask].mean()) for x in X)


def detect_singularities(frames: Sequence[ScalarField], regions: Sequence[np.ndarray],
                         thresholds: Sequence[float] = (50.0,), diameter: float | None = None,
                         plane_tol: float | None = None,
                         t_min: float | None = None) -> list[SingularEvent]:
    """Curvature-threshold crossings and vanishing components.

    A curvature event is recorded the first time ``sup |A| * diameter``
    exceeds each threshold; its location is the centroid of the connected
    component of the super-threshold set containing the peak. An extinction
    event is recorded when a connected component of the region has no
    overlap with the next frame's region; its location is the component's
    centroid. ``on_plane`` means ``|x1| <= plane_tol`` (default two axis-1
    spacings). Curvature is only tested on frames with ``t > t_min``
    (default: the first frame's time), since initial data need only be
    Lipschitz.
    """
    if list(thresholds) != sorted(thresholds):
        raise ValueError("thresholds must be nondecreasing")
    if not frames:
        return []
    spec = frames[0].spec
    if plane_tol is None:
        plane_tol = 2 * spec.spacing[0]
    if diameter is None:
        diameter = domain_diameter(spec, regions[0])
    if t_min is None:
        t_min = frames[0].t
    events: list[SingularEvent] = []
    pending = list(thresholds)
    for k, (u, reg) in enumerate(zip(frames, regions)):
        if pending and reg.any() and u.t > t_min:
            A = np.sqrt(second_fundamental_norm(u).values)
            A = np.where(reg & np.isfinite(A), A, 0.0)
            peak = float(A.max())
            while pending and peak * diameter > pending[0]:
                tau = pending.pop(0)
                hot = A * diameter > tau
                lab, _ = ndimage.label(hot)
                arg = np.unravel_index(np.argmax(A), A.shape)
                comp = lab == lab[arg]
                loc = _centroid(spec, comp)
                events.append(SingularEvent(u.t, loc, peak, abs(loc[0]) <= plane_tol, "curvature",
                                            tuple(float(c) for c in spec.coords(arg))))
        if k + 1 < len(frames) and reg.any():
            nxt = regions[k + 1]
            lab, ncomp = ndimage.label(reg)
            A = None
            for c in range(1, ncomp + 1):
                comp = lab == c
                if not (comp & nxt).any():
                    if A is None:
                        A = np.sqrt(second_fundamental_norm(u).values)
                    loc = _centroid(spec, comp)
                    vals = A[comp]
                    vals = vals[np.isfinite(vals)]
                    peak = float(vals.max()) if vals.size else float("inf")
                    events.append(SingularEvent(frames[k + 1].t, loc, peak,
                                                abs(loc[0]) <= plane_tol, "extinction"))
    return events


def domain_diameter(spec: GridSpec, mask: np.ndarray) -> float:
    """Largest distance between two nodes of ``mask``."""
    if not mask.any():
        return 0.0
    pts = np.stack([x[mask] for x in spec.mesh()], axis=1)
    if spec.dim > 1 and len(pts) > spec.dim + 1:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass
    return float(pdist(pts).max()) if len(pts) > 1 else 0.0
