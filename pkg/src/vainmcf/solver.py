"""Explicit time stepping of graphical mean curvature flow.

The PDE is ``u_t = (delta_ij - u_i u_j / (1 + |Du|^2)) u_ij`` on the nodes of
an active set, with Dirichlet data on every other node. Forward Euler with
``dt = cfl * (sum_k h_k^-2)^-1 / 2``; ``cfl = 1`` is the linear stability
limit of the nine-point operator.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .grid import ConfigurationError, GridSpec, ScalarField

log = logging.getLogger(__name__)


class InstabilityError(RuntimeError):
    """Raised when a step produces non-finite or runaway values."""

    def __init__(self, message, node=None, t=None):
        super().__init__(message)
        self.node = node
        self.t = t


@njit(cache=True, nogil=True)
def _rhs_kernel(u, active, strides, inv2h, invh2, inv4hh, out):
    n = strides.size
    p = np.empty(n)
    H = np.empty((n, n))
    for a in range(active.size):
        i = active[a]
        for k in range(n):
            s = strides[k]
            p[k] = (u[i + s] - u[i - s]) * inv2h[k]
            H[k, k] = ((u[i + s] + u[i - s]) - 2.0 * u[i]) * invh2[k]
        for k in range(n):
            sk = strides[k]
            for l in range(k + 1, n):
                sl = strides[l]
                v = ((u[i + sk + sl] - u[i + sk - sl]) - (u[i - sk + sl] - u[i - sk - sl])) * inv4hh[k, l]
                H[k, l] = v
                H[l, k] = v
        q = 1.0
        for k in range(n):
            q += p[k] * p[k]
        acc = 0.0
        for k in range(n):
            acc += H[k, k]
            for l in range(n):
                acc -= p[k] * p[l] * H[k, l] / q
        out[i] = acc


@njit(cache=True, nogil=True)
def _euler_kernel(u, active, strides, inv2h, invh2, inv4hh, dt, cap, use_cap, limit, rhs, new):
    """Write ``u + dt * rhs`` into ``new`` on active nodes.

    Returns ``(clamped, bad)`` where ``bad`` is the flat index of the first
    non-finite or runaway value, or -1.
    """
    _rhs_kernel(u, active, strides, inv2h, invh2, inv4hh, rhs)
    clamped = 0
    bad = -1
    for a in range(active.size):
        i = active[a]
        v = u[i] + dt * rhs[i]
        if use_cap and v > cap:
            v = cap
            clamped += 1
        if bad < 0 and not (abs(v) <= limit):
            bad = i
        new[i] = v
    return clamped, bad


class _Stencil:
    """Precomputed flat-index data for the numba kernels."""

    def __init__(self, spec: GridSpec, active: np.ndarray):
        interior = np.zeros(spec.shape, dtype=bool)
        interior[(slice(1, -1),) * spec.dim] = True
        if np.any(active & ~interior):
            raise ConfigurationError("active nodes must not touch the grid edge")
        self.active = np.flatnonzero(active).astype(np.int64)
        self.strides = np.array(
            [int(np.prod(spec.shape[k + 1:])) for k in range(spec.dim)], dtype=np.int64
        )
        h = np.array(spec.spacing)
        self.inv2h = 1.0 / (2 * h)
        self.invh2 = 1.0 / (h * h)
        self.inv4hh = 1.0 / (4 * np.outer(h, h))


def mcf_rhs(u: ScalarField, active: np.ndarray | None = None) -> ScalarField:
    """Graphical mean curvature operator applied to ``u``.

    Evaluated on ``active`` nodes (default: all interior nodes); every other
    node, and any node whose stencil touches a non-finite value, is nan.
    """
    spec = u.spec
    if active is None:
        active = np.zeros(spec.shape, dtype=bool)
        active[(slice(1, -1),) * spec.dim] = True
    st = _Stencil(spec, active)
    flat = np.ascontiguousarray(u.values, dtype=np.float64).ravel()
    out = np.full(flat.size, np.nan)
    _rhs_kernel(flat, st.active, st.strides, st.inv2h, st.invh2, st.inv4hh, out)
    out[~np.isfinite(out)] = np.nan
    return u.with_values(out.reshape(spec.shape), cap=None)


@dataclass(frozen=True)
class StepControl:
    cfl: float = 0.5

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ConfigurationError(f"cfl must lie in (0, 1], got {self.cfl}")

    def dt(self, spec: GridSpec) -> float:
        return self.cfl / sum(h ** -2 for h in spec.spacing) / 2


@dataclass(frozen=True)
class FlowState:
    """Snapshot of the flow.

    ``active`` marks the nodes that evolve. All other nodes carry Dirichlet
    data: the constant ``a`` unless ``boundary`` is given, in which case
    ``boundary(t)`` returns the full-grid array whose inactive entries are
    imposed at time ``t``.
    """

    u: ScalarField
    active: np.ndarray
    a: float | None = None
    t: float = 0.0
    step_count: int = 0
    clamp_count: int = 0
    ball: tuple[tuple[float, ...], float] | None = None
    boundary: Callable[[float], np.ndarray] | None = field(default=None, compare=False)

    @property
    def spec(self) -> GridSpec:
        return self.u.spec


def dirichlet_ball(spec: GridSpec, margin: int = 2, center=None, radius=None):
    """Active mask of the ball inscribed in the grid box minus ``margin`` cells.

    Returns ``(active, (center, radius))``.
    """
    if center is None:
        center = tuple(0.0 if k == 0 else 0.5 * (lo + hi) for k, (lo, hi) in enumerate(spec.extent))
    if radius is None:
        radius = min(
            min(c - lo, hi - c) - margin * h
            for c, (lo, hi), h in zip(center, spec.extent, spec.spacing)
        )
    if radius <= 0:
        raise ConfigurationError("Dirichlet ball is empty; grid too small for margin")
    active = spec.radius_squared(center) < radius ** 2
    edge = np.ones(spec.shape, dtype=bool)
    edge[(slice(1, -1),) * spec.dim] = False
    active &= ~edge
    return active, (tuple(center), float(radius))


def initial_state(u: ScalarField, a: float | None, active=None, margin: int = 2, boundary=None) -> FlowState:
    """Flow state with constant Dirichlet data ``a`` outside a ball.

    When ``active`` is omitted the Dirichlet ball inscribed in the grid is
    used. The data are pinned to ``a`` off the active set and clamped to
    ``u <= a``.
    """
    ball = None
    if active is None:
        active, ball = dirichlet_ball(u.spec, margin)
    values = np.array(u.values, dtype=np.float64)
    if boundary is not None:
        bvals = boundary(u.t)
        values[~active] = bvals[~active]
    elif a is not None:
        values[~active] = a
        np.minimum(values, a, out=values)
    if not np.all(np.isfinite(values)):
        raise ConfigurationError("initial data must be finite (cap infinite values first)")
    return FlowState(u.with_values(values, cap=a), active, a=a, t=u.t, ball=ball, boundary=boundary)


class Stepper:
    """Reusable stepping context; holds the flat stencil and work buffers."""

    def __init__(self, state: FlowState, ctl: StepControl):
        self.ctl = ctl
        self.spec = state.spec
        self.dt = ctl.dt(self.spec)
        self.stencil = _Stencil(self.spec, state.active)
        self.inactive = np.flatnonzero(~state.active.ravel())
        self.a = state.a
        self.boundary = state.boundary
        self.rhs = np.zeros(self.spec.size)
        self.limit = None if state.a is None else 10.0 * max(abs(state.a), 1.0)

    def advance(self, u: np.ndarray, t: float, dt: float | None = None) -> tuple[np.ndarray, int]:
        """One Euler step on flat array ``u``; returns a fresh array."""
        dt = self.dt if dt is None else dt
        st = self.stencil
        new = u.copy()
        use_cap = self.a is not None and self.boundary is None
        cap = self.a if use_cap else 0.0
        limit = np.inf if self.limit is None else self.limit
        clamped, bad = _euler_kernel(u, st.active, st.strides, st.inv2h, st.invh2, st.inv4hh,
                                     dt, cap, use_cap, limit, self.rhs, new)
        if bad >= 0:
            node = np.unravel_index(bad, self.spec.shape)
            raise InstabilityError(
                f"instability at node {tuple(int(j) for j in node)}, t={t + dt:.6g}, value={new[bad]!r}",
                node=node, t=t + dt,
            )
        if self.boundary is not None:
            new[self.inactive] = self.boundary(t + dt).ravel()[self.inactive]
        return new, clamped


def step(state: FlowState, ctl: StepControl, dt: float | None = None) -> FlowState:
    """Advance ``state`` by one forward-Euler step (returns a new state)."""
    stepper = Stepper(state, ctl)
    new, clamped = stepper.advance(state.u.values.ravel(), state.t, dt)
    t = state.t + (stepper.dt if dt is None else dt)
    return replace(
        state,
        u=state.u.with_values(new.reshape(state.spec.shape), t=t),
        t=t,
        step_count=state.step_count + 1,
        clamp_count=state.clamp_count + clamped,
    )


def run_until(state: FlowState, ctl: StepControl, t_end: float,
              observers: Sequence[Callable[[FlowState], object]] = (),
              every: float | None = None,
              times: Sequence[float] | None = None,
              stop: Callable[[FlowState], bool] | None = None):
    """Step ``state`` to ``t_end``.

    Observers are called with the state at the start, at each requested
    ``times`` entry (or every ``every`` time units) and at ``t_end``; steps
    are shortened so those times are hit exactly. Returns the final state
    and the list of observer records ``(t, [result per observer])``.
    ``stop(state)`` returning True ends the run early after an observation.
    """
    if t_end < state.t:
        raise ValueError("t_end precedes the current time")
    if times is None:
        if every is not None and every > 0:
            k = int(np.floor((t_end - state.t) / every + 1e-9))
            times = [state.t + every * (j + 1) for j in range(k)]
        else:
            times = []
    marks = sorted({float(s) for s in times if state.t < s < t_end} | {float(t_end)})
    records = []

    def observe(s):
        out = []
        for obs in observers:
            try:
                out.append(obs(s))
            except Exception as exc:
                raise RuntimeError(f"observer {obs!r} failed at t={s.t:.6g}: {exc}") from exc
        records.append((s.t, out))

    if observers:
        observe(state)
    if t_end == state.t:
        return state, records

    stepper = Stepper(state, ctl)
    u = np.ascontiguousarray(state.u.values, dtype=np.float64).ravel().copy()
    t, nsteps, clamps = state.t, state.step_count, state.clamp_count
    dt = stepper.dt
    for mark in marks:
        while t < mark:
            remaining = mark - t
            if remaining <= dt * (1 + 1e-9):
                u, c = stepper.advance(u, t, remaining)
                t = mark
            else:
                u, c = stepper.advance(u, t, dt)
                t += dt
            nsteps += 1
            clamps += c
        state = replace(state, u=state.u.with_values(u.reshape(state.spec.shape).copy(), t=t),
                        t=t, step_count=nsteps, clamp_count=clamps)
        if observers:
            observe(state)
        if stop is not None and stop(state):
            break
    if clamps:
        log.info("clamp to cap triggered %d times; run is under-resolved", clamps)
    return state, records


def flow_monitor_row(state: FlowState) -> dict:
    """Scalars for the solver time series: ``t``, ``max_A`` (max |A| over
    active nodes), ``clamp_count`` and ``vanity_residual``."""
    from .diagnostics import second_fundamental_norm
    from .vanity import vanity_residual

    A = np.sqrt(second_fundamental_norm(state.u).values[state.active])
    A = A[np.isfinite(A)]
    return {
        "t": state.t,
        "max_A": float(A.max()) if A.size else 0.0,
        "clamp_count": state.clamp_count,
        "vanity_residual": vanity_residual(state.u),
    }


class CsvMonitor:
    """Observer appending :func:`flow_monitor_row` to a CSV file."""

    fields = ("t", "max_A", "clamp_count", "vanity_residual")

    def __init__(self, path):
        self.path = path
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(self.fields)

    def __call__(self, state: FlowState) -> dict:
        row = flow_monitor_row(state)
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(
                [format(float(row[k]), ".17g") if k != "clamp_count" else row[k] for k in self.fields])
        return row
