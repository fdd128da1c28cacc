"""Acceptance criteria as runnable checks.

Each ``criterion_*`` function computes its metrics, applies the stated
tolerance and returns a :class:`CriterionResult`. ``run_all`` prints one
PASS/FAIL line per criterion.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import ScenarioConfig, parse_config
from .diagnostics import CutoffSpec, heat_residual_phi, w_evolution_residual
from .grid import ScalarField, make_grid
from .mollifier import make_vain_kernel, mollify, two_point_kernel, evaluation_mask
from .resolver import graph_domain
from .runner import RunResult, run_scenario
from .solver import StepControl, initial_state, run_until
from .vanity import DomainMask, is_vain_function, is_vain_set

SCENARIOS = {
    "disc": """\
[grid]
dim = 2
extent = -1.5 1.5
points = 257

[domain]
shape = disc
radius = 1.0

[ladder]
caps = 10 20 40
theta = 0.5

[solver]
cfl = 0.5
t_end = 0.6
dt_out = 0.005

[diagnostics]
eps_fraction = 0.1
thresholds = 50 100 200

[output]
dir = runs/disc
snapshot_every = 4

[run]
workers = 1
""",
    "ellipse": """\
[grid]
dim = 2
extent = -1.6 1.6
points = 129

[domain]
shape = ellipse
semi_axes = 0.6 1.1

[ladder]
caps = 10 20 40

[solver]
t_end = 1.0
dt_out = 0.01

[diagnostics]
eps_fraction = 0.1
thresholds = 50 100 200

[output]
dir = runs/ellipse
snapshot_every = 2

[run]
workers = 1
""",
    "dumbbell": """\
[grid]
dim = 2
extent = -2.0 2.0
points = 129

[domain]
shape = dumbbell
lobe_radius = 0.7
separation = 0.7
neck = 0.25
fillet = 0.2

[ladder]
caps = 10 20 40

[solver]
t_end = 1.0
dt_out = 0.01

[diagnostics]
eps_fraction = 0.1
thresholds = 50 100 200

[output]
dir = runs/dumbbell
snapshot_every = 2

[run]
workers = 1
""",
}


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    message: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number}: {self.name}: {self.message}"


def scenario(name: str) -> ScenarioConfig:
    return parse_config(SCENARIOS[name], f"<{name}>")


_RUNS: dict[str, RunResult] = {}


def scenario_run(name: str) -> RunResult:
    """Run (once per process) one of the built-in scenarios."""
    if name not in _RUNS:
        t0 = time.perf_counter()
        res = run_scenario(scenario(name))
        res.extras["runtime"] = time.perf_counter() - t0
        _RUNS[name] = res
    return _RUNS[name]


# -- exact flows -------------------------------------------------------------------

def grim_reaper_frames(cells_per_unit: int, t_end: float = 0.1, dt_out: float | None = None,
                       cfl: float = 0.5):
    """``u = t - log cos x`` on (-1.5, 1.5) with exact Dirichlet data.

    Returns ``(frames, exact)`` where ``frames`` are the observed fields.
    """
    spec = make_grid(1, (-1.5, 1.5), 3 * cells_per_unit + 1)
    x = spec.axis(0)

    def exact(t):
        return t - np.log(np.cos(x))

    active = np.zeros(spec.shape, dtype=bool)
    active[1:-1] = True
    st = initial_state(ScalarField(spec, exact(0.0)), None, active=active, boundary=exact)
    _, rec = run_until(st, StepControl(cfl), t_end, [lambda s: s.u], every=dt_out)
    return [r[0] for _, r in rec], exact


def hemisphere_frames(points: int, dt_out: float, t_end: float = 0.05, R0: float = 1.5):
    """Lower hemisphere ``u = -sqrt(R0^2 - 2 n t - |x|^2)`` (n = 2) with exact
    Dirichlet data outside ``|x| < 0.65``; returns frames and the region
    ``|x| < 0.55`` used for residuals."""
    spec = make_grid(2, (-0.7, 0.7), points)
    r2 = spec.radius_squared()

    def exact(t):
        return -np.sqrt(R0 ** 2 - 4 * t - r2)

    active = r2 < 0.65 ** 2
    active[0, :] = active[-1, :] = active[:, 0] = active[:, -1] = False
    st = initial_state(ScalarField(spec, exact(0.0)), None, active=active, boundary=exact)
    _, rec = run_until(st, StepControl(0.5), t_end, [lambda s: s.u], every=dt_out)
    return [r[0] for _, r in rec], r2 < 0.55 ** 2


# -- random vain data --------------------------------------------------------------

def random_vain_case(seed: int, points: int = 65):
    """Random vain domain (graph over the plane) with a random vain field that
    is ``< a`` inside and ``a`` outside. Returns ``(spec, omega, u, a)``."""
    rng = np.random.default_rng(seed)
    spec = make_grid(2, (-1.2, 1.2), points)
    X, Y = spec.mesh()
    base = rng.uniform(0.5, 0.8)
    amp = rng.uniform(-0.15, 0.15, 3)
    ph = rng.uniform(0, 2 * np.pi, 3)
    half_len = rng.uniform(0.6, 0.95)

    def profile(y):
        wave = sum(c * np.cos((k + 1) * np.pi * y / 2 + p) for k, (c, p) in enumerate(zip(amp, ph)))
        return (base + wave) * (np.abs(y) < half_len)

    omega = graph_domain(spec, profile)
    a = float(rng.uniform(2.0, 6.0))
    coef = rng.uniform(0.2, 2.0, 2)
    powers = rng.uniform(1.0, 3.0, 2)
    b = rng.uniform(-0.3, 0.3, 3)
    phb = rng.uniform(0, 2 * np.pi, 3)
    F = sum(c * np.abs(X) ** p for c, p in zip(coef, powers))
    F = F + sum(bi * np.cos((k + 1) * Y + q) for k, (bi, q) in enumerate(zip(b, phb)))
    F = F - F[omega.inside].min() + rng.uniform(0.0, 0.5)
    u = np.where(omega.inside, np.minimum(F, a), a)
    return spec, omega, ScalarField(spec, u), a


def random_vain_grid_function(rng: np.random.Generator, spec) -> np.ndarray:
    """Mirror-symmetric grid function nondecreasing in ``|x1|`` on every fiber:
    random nonnegative increments accumulated outward from the plane."""
    m = spec.shape[0]
    half = (m + 1) // 2
    inc = rng.exponential(1.0, (half,) + spec.shape[1:]) * (rng.random((half,) + spec.shape[1:]) < 0.6)
    base = rng.normal(0.0, 1.0, spec.shape[1:])
    pos = base + np.cumsum(inc, axis=0)
    if m % 2:
        full = np.concatenate([pos[:0:-1], pos], axis=0)
    else:
        full = np.concatenate([pos[::-1], pos], axis=0)
    return full


def _fmt(x, spec=".4f") -> str:
    return "none" if x is None else format(x, spec)


# -- criteria --------------------------------------------------------------------------

def criterion_1() -> CriterionResult:
    t0 = time.perf_counter()
    fr, exact = grim_reaper_frames(256)
    runtime = time.perf_counter() - t0
    e1 = float(np.abs(fr[-1].values - exact(fr[-1].t)).max())
    fr2, exact2 = grim_reaper_frames(512)
    e2 = float(np.abs(fr2[-1].values - exact2(fr2[-1].t)).max())
    ratio = e1 / e2
    ok = e1 <= 5e-4 and ratio >= 3.5 and runtime < 10.0
    return CriterionResult(1, "grim reaper convergence", ok,
                           {"error_h256": e1, "error_h512": e2, "ratio": ratio, "runtime_s": runtime},
                           f"L_inf error {e1:.3e} (<= 5e-4), halving ratio {ratio:.2f} (>= 3.5), "
                           f"runtime {runtime:.1f}s (< 10s)")


def criterion_2() -> CriterionResult:
    res = scenario_run("disc")
    sl = res.slices
    T = sl.extinction_time_limit
    rel = abs(T - 0.5) / 0.5 if T is not None else float("inf")
    last = sl.extinction_time
    rel_last = abs(last - 0.5) / 0.5 if last is not None else float("inf")
    spec = res.config.grid()
    ext = [e for e in res.events if e.kind == "extinction"]
    on_plane = bool(ext) and all(abs(e.location[0]) <= 2 * spec.spacing[0] for e in ext)
    runtime = res.extras.get("runtime", float("nan"))
    ok = rel <= 0.10 and on_plane and runtime < 300.0
    rungs = ", ".join(f"a={r.a:g}: {r.extinction_time:.4f}" for r in sl.rungs if r.extinction_time is not None)
    return CriterionResult(2, "circle law", ok,
                           {"extinction_time_limit": T, "relative_error": rel,
                            "last_rung_extinction": last, "last_rung_relative_error": rel_last,
                            "extinction_events": len(ext), "on_plane": on_plane, "runtime_s": runtime},
                           f"ladder limit {_fmt(T)} (rel. error {rel:.3f} <= 0.10; rungs {rungs}; "
                           f"last rung alone off by {rel_last:.3f}), {len(ext)} extinction event(s) "
                           f"on plane={on_plane}, runtime {runtime:.0f}s (< 300s)")


def criterion_3(seed: int = 0, cases: int = 20) -> CriterionResult:
    t0 = time.perf_counter()
    worst_drop = 0.0
    worst_sym = 0.0
    failures = []
    frames_checked = 0
    for j in range(cases):
        spec, omega, u, a = random_vain_case(seed + j)
        if not is_vain_set(omega):
            failures.append((seed + j, "domain not vain"))
            continue
        h = max(spec.spacing)
        full = DomainMask(spec, np.ones(spec.shape, dtype=bool))
        st = initial_state(u, a, active=omega.inside)
        _, rec = run_until(st, StepControl(0.5), 0.1, [lambda s: s.u], every=0.01)
        for _, (fr,) in rec:
            v = fr.values
            chk = is_vain_function(fr, full, tol=10 * h * h)
            sym = float(np.abs(v - v[::-1]).max())
            pos = v[spec.shape[0] // 2:]
            worst_drop = max(worst_drop, float(np.max(pos[:-1] - pos[1:])))
            worst_sym = max(worst_sym, sym)
            frames_checked += 1
            if not chk or sym > 1e-12:
                failures.append((seed + j, fr.t, chk.reason if not chk else f"asymmetry {sym:.2e}"))
    runtime = time.perf_counter() - t0
    ok = not failures and runtime < 120.0
    return CriterionResult(3, "vanity preservation", ok,
                           {"cases": cases, "frames": frames_checked, "worst_drop": worst_drop,
                            "worst_asymmetry": worst_sym, "failures": failures, "runtime_s": runtime},
                           f"{cases} fields, {frames_checked} frames, largest decrease along a "
                           f"half-fiber {worst_drop:.2e} (tol 10h^2), asymmetry {worst_sym:.1e} "
                           f"(<= 1e-12), {len(failures)} failure(s), runtime {runtime:.1f}s (< 120s)")


def sqrt_counterexample(points: int = 41, offset_nodes: int = 4):
    """``sqrt|x1|`` convolved with ``(delta_eps + delta_-eps) / 2``."""
    spec = make_grid(1, (-1.0, 1.0), points)
    u = ScalarField(spec, np.sqrt(np.abs(spec.axis(0))))
    k = two_point_kernel(offset_nodes, spec)
    out = mollify(u, k)
    return u, out, evaluation_mask(spec, k)


def criterion_4(seed: int = 0, cases: int = 50) -> CriterionResult:
    rng = np.random.default_rng(seed)
    failures = []
    for j in range(cases):
        dim = 1 + j % 3
        m = int(rng.integers(9, 26 if dim < 3 else 14))
        spec = make_grid(dim, (-1.0, 1.0), m)
        v = random_vain_grid_function(rng, spec)
        u = ScalarField(spec, v)
        full = DomainMask(spec, np.ones(spec.shape, dtype=bool))
        assert is_vain_function(u, full, tol=0.0)
        eps = float(rng.uniform(2.0, 3.5)) * max(spec.spacing)
        out = mollify(u, make_vain_kernel(eps, spec))
        mask = evaluation_mask(spec, make_vain_kernel(eps, spec))
        chk = is_vain_function(out, mask, tol=1e-12)
        vals = np.where(mask.inside, out.values, 0.0)
        sym = float(np.abs(vals - vals[::-1]).max())
        if not chk or sym > 1e-12:
            failures.append((j, chk.reason or f"asymmetry {sym:.2e}"))
    u, out, mask = sqrt_counterexample()
    chk = is_vain_function(out, mask, tol=1e-12)
    witness = None
    if not chk:
        x, xl = chk.witness
        witness = {"x": u.spec.coords(x).tolist(), "x_lambda": u.spec.coords(xl).tolist(),
                   "u(x)": float(out.values[x]), "u(x_lambda)": float(out.values[xl])}
    ok = not failures and witness is not None
    wtxt = (f"witness u({witness['x'][0]:+.3f})={witness['u(x)']:.4f} < "
            f"u({witness['x_lambda'][0]:+.3f})={witness['u(x_lambda)']:.4f}") if witness else "no witness"
    return CriterionResult(4, "mollification", ok,
                           {"cases": cases, "failures": failures, "counterexample_witness": witness},
                           f"{cases - len(failures)}/{cases} mollified fields vain to 1e-12; "
                           f"two-point kernel on sqrt|x1|: {wtxt}")


def criterion_5() -> CriterionResult:
    parts, ok, metrics = [], True, {}
    for name in ("ellipse", "dumbbell"):
        res = scenario_run(name)
        s = res.w_monitor.values
        ratio = float(np.max(s / s[0]))
        good = bool(np.all(s <= 1.05 * s[0]))
        ok &= good
        metrics[name] = {"s0": float(s[0]), "max_ratio": ratio, "frames": len(s), "eps": res.eps}
        parts.append(f"{name}: max s(t)/s(0) = {ratio:.4f} over {len(s)} frames")
    return CriterionResult(5, "w-estimate monitor", ok, metrics, "; ".join(parts) + " (<= 1.05)")


def criterion_6() -> CriterionResult:
    parts, ok, metrics = [], True, {}
    for name in ("disc", "ellipse", "dumbbell"):
        res = scenario_run(name)
        h1 = res.config.grid().spacing[0]
        off = [e for e in res.events if abs(e.location[0]) > 2 * h1 or not e.on_plane]
        good = bool(res.events) and not off
        info = {"events": len(res.events), "off_plane": len(off)}
        txt = f"{name}: {len(res.events)} events, {len(off)} off plane"
        if name != "disc":
            k = res.pre_event_index
            r = res.band_ratio(k) if k is not None else float("nan")
            good &= k is not None and r < 0.10
            # the last frame on which the band is still populated, for context
            nonempty = [i for i, mon in zip(res.live, res.monitors) if mon["band_supA"] > 0 and i != res.live[0]]
            r_last = res.band_ratio(nonempty[-1]) if nonempty else float("nan")
            info.update(pre_event_t=res.slices.times[k] if k is not None else None, band_ratio=r,
                        last_band_frame_ratio=r_last)
            txt += (f", band/global |A| at t={info['pre_event_t']} is {r:.3f} (< 0.10; "
                    f"last populated band frame {r_last:.3f})")
        ok &= good
        metrics[name] = info
        parts.append(txt)
    return CriterionResult(6, "singularities on the plane", ok, metrics, "; ".join(parts))


def criterion_7() -> CriterionResult:
    cells = (32, 64, 128, 256)
    dts = (0.02, 0.01, 0.005, 0.0025)
    spec = CutoffSpec(R0=1.0, eps=0.2, dim=1)
    res = []
    for k, dt in zip(cells, dts):
        fr, _ = grim_reaper_frames(k, dt_out=dt)
        res.append(heat_residual_phi(fr, spec))
    ratios = [a / b for a, b in zip(res, res[1:])]
    ok = all(r >= 2.0 for r in ratios)
    return CriterionResult(7, "cut-off heat identity", ok, {"residuals": res, "ratios": ratios},
                           "residuals " + ", ".join(f"{r:.2e}" for r in res)
                           + "; ratios " + ", ".join(f"{r:.2f}" for r in ratios) + " (>= 2)")


def criterion_8() -> CriterionResult:
    levels = ((33, 0.01), (65, 0.005), (129, 0.0025))
    res = []
    for m, dt in levels:
        fr, region = hemisphere_frames(m, dt)
        res.append(w_evolution_residual(fr, region))
    ratios = [a / b for a, b in zip(res, res[1:])]
    ok = all(r >= 2.0 for r in ratios)
    return CriterionResult(8, "w evolution residual", ok, {"residuals": res, "ratios": ratios},
                           "residuals " + ", ".join(f"{r:.2e}" for r in res)
                           + "; ratios " + ", ".join(f"{r:.2f}" for r in ratios) + " (>= 2)")


CRITERIA: dict[int, Callable[..., CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
    5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8,
}


def run_all(only=None, seed: int = 0, echo=print) -> list[CriterionResult]:
    out = []
    for k, fn in CRITERIA.items():
        if only and k not in only:
            continue
        res = fn(seed=seed) if k in (3, 4) else fn()
        echo(res.line())
        out.append(res)
    return out
