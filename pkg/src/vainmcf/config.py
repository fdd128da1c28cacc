"""Scenario files: sectioned ``key = value`` text, validated before any compute.

Schema (all sections optional except ``[grid]`` and ``[domain]``)::

    [grid]
    dim = 2                    # n
    extent = -1.5 1.5          # one pair for every axis, or n pairs "lo hi; lo hi"
    points = 257               # one count for every axis, or n counts

    [domain]
    shape = disc               # disc | ellipse | band | dumbbell
    radius = 1.0               # disc
    semi_axes = 0.6 1.1        # ellipse, one per axis
    half_width = 0.3           # band
    half_length = 1.0          # band
    lobe_radius = 0.7          # dumbbell: balls at x2 = +-separation on the plane
    separation = 0.7
    neck = 0.25
    fillet = 0.2

    [ladder]
    caps = 10 20 40            # strictly increasing
    eps =                      # mollification radii, one per cap (default 2 h)
    theta = 0.5                # Omega_t = {u < theta a}

    [solver]
    cfl = 0.5
    t_end = 0.6
    dt_out = 0.01
    ball_margin = 2

    [diagnostics]
    eps_fraction = 0.1         # band offset as a fraction of diam(Omega_0)
    eps =                      # absolute band offset; overrides eps_fraction
    thresholds = 50            # |A| * diameter triggers
    drift_tol = 0.05

    [output]
    dir = runs/disc
    snapshot_every = 1         # write every k-th output frame, 0 = none

    [run]
    seed = 0
    workers = 1

``VAINMCF_OUTPUT_DIR`` overrides ``[output] dir`` and ``VAINMCF_THREADS``
overrides ``[run] workers``.
"""

from __future__ import annotations

import configparser
import hashlib
import os
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .grid import ConfigurationError, GridSpec, make_grid
from . import resolver as R
from .vanity import DomainMask

ENV_OUTPUT = "VAINMCF_OUTPUT_DIR"
ENV_THREADS = "VAINMCF_THREADS"

SHAPES = {
    "disc": {"radius"},
    "ellipse": {"semi_axes"},
    "band": {"half_width", "half_length"},
    "dumbbell": {"lobe_radius", "separation", "neck"},
}
OPTIONAL_SHAPE_KEYS = {"dumbbell": {"fillet"}}

SCHEMA = {
    "grid": {"dim", "extent", "points"},
    "domain": {"shape"} | set().union(*SHAPES.values()) | {"fillet"},
    "ladder": {"caps", "eps", "theta"},
    "solver": {"cfl", "t_end", "dt_out", "ball_margin"},
    "diagnostics": {"eps_fraction", "eps", "thresholds", "drift_tol"},
    "output": {"dir", "snapshot_every"},
    "run": {"seed", "workers"},
}
REQUIRED = {"grid": {"dim", "extent", "points"}, "domain": {"shape"}}


class ConfigError(ConfigurationError):
    """Invalid scenario file; ``line`` is 1-based when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = f"{path}:{line}: " if path is not None and line else f"{path}: " if path else ""
        super().__init__(where + message)
        self.line = line


@dataclass
class ScenarioConfig:
    dim: int
    extent: tuple[tuple[float, float], ...]
    points: tuple[int, ...]
    shape: str
    shape_params: dict
    caps: tuple[float, ...] = (10.0, 20.0, 40.0)
    eps: tuple[float, ...] | None = None
    theta: float = 0.5
    cfl: float = 0.5
    t_end: float = 1.0
    dt_out: float = 0.01
    ball_margin: int = 2
    diag_eps: float | None = None
    eps_fraction: float = 0.1
    thresholds: tuple[float, ...] = (50.0,)
    drift_tol: float = 0.05
    output_dir: str = "runs/scenario"
    snapshot_every: int = 1
    seed: int = 0
    workers: int = 1
    source_hash: str = field(default="", compare=False)

    def grid(self) -> GridSpec:
        return make_grid(self.dim, self.extent, self.points)

    def domain(self, spec: GridSpec | None = None) -> DomainMask:
        spec = spec or self.grid()
        p = self.shape_params
        if self.shape == "disc":
            return R.disc(spec, p["radius"])
        if self.shape == "ellipse":
            return R.ellipse(spec, p["semi_axes"])
        if self.shape == "band":
            return R.band(spec, p["half_width"], p["half_length"])
        return R.dumbbell(spec, p["lobe_radius"], p["separation"], p["neck"], p.get("fillet", 0.0))

    def output_times(self) -> list[float]:
        k = int(np.floor(self.t_end / self.dt_out + 1e-9))
        times = [round(j * self.dt_out, 12) for j in range(k + 1)]
        if times[-1] < self.t_end - 1e-12:
            times.append(self.t_end)
        return times

    def resolver_config(self, spec: GridSpec | None = None) -> R.ResolverConfig:
        return R.ResolverConfig(
            omega0=self.domain(spec), caps=self.caps, eps=self.eps, theta=self.theta,
            times=self.output_times(), cfl=self.cfl, ball_margin=self.ball_margin,
        )

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("source_hash")
        return d


def _line_index(text: str) -> dict:
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    out = {}
    section = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            out.setdefault((section, None), no)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", line)
        if m and section is not None:
            out.setdefault((section, m.group(1).strip().lower()), no)
    return out


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise ValueError(f"{what}: expected numbers, got {text!r}") from None


def load_config(path, env: dict | None = None) -> ScenarioConfig:
    """Parse and validate a scenario file. Raises :class:`ConfigError`."""
    env = os.environ if env is None else env
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    text = raw.decode("utf-8", errors="replace")
    return parse_config(text, path, env, hashlib.sha256(raw).hexdigest())


def parse_config(text: str, path="<config>", env: dict | None = None, digest: str | None = None) -> ScenarioConfig:
    env = {} if env is None else env
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", path, exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", path, exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", path, exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", path, lineno) from None
    lines = _line_index(text)

    def fail(msg, section, key=None):
        raise ConfigError(msg, path, lines.get((section, key)) or lines.get((section, None)))

    for section in cp.sections():
        if section not in SCHEMA:
            fail(f"unknown section [{section}]", section)
        for key in cp[section]:
            if key not in SCHEMA[section]:
                fail(f"unknown key {key!r} in [{section}]", section, key)
    for section, keys in REQUIRED.items():
        if not cp.has_section(section):
            raise ConfigError(f"missing section [{section}]", path)
        for key in keys:
            if key not in cp[section]:
                fail(f"missing key {key!r} in [{section}]", section)

    def get(section, key, conv, default=None, empty_ok=False):
        if not cp.has_section(section) or key not in cp[section]:
            return default
        val = cp[section][key].strip()
        if val == "" and empty_ok:
            return default
        try:
            return conv(val)
        except (ValueError, TypeError) as exc:
            fail(f"[{section}] {key}: {exc}", section, key)

    def nums(what):
        return lambda s: _floats(s, what)

    dim = get("grid", "dim", int)
    if dim < 1:
        fail("dim must be >= 1", "grid", "dim")
    ext = get("grid", "extent", lambda s: [_floats(part, "extent") for part in s.split(";")])
    if len(ext) == 1 and len(ext[0]) == 2:
        ext = ext * dim
    if len(ext) != dim or any(len(pair) != 2 for pair in ext):
        fail(f"extent needs one pair or {dim} pairs", "grid", "extent")
    pts = get("grid", "points", nums("points"))
    if len(pts) == 1:
        pts = pts * dim
    if len(pts) != dim or any(p != int(p) for p in pts):
        fail(f"points needs one or {dim} integers", "grid", "points")
    extent = tuple((float(lo), float(hi)) for lo, hi in ext)
    points = tuple(int(p) for p in pts)
    try:
        make_grid(dim, extent, points)
    except ConfigurationError as exc:
        fail(str(exc), "grid", "extent")

    shape = get("domain", "shape", str).lower()
    if shape not in SHAPES:
        fail(f"unknown shape {shape!r}; expected one of {sorted(SHAPES)}", "domain", "shape")
    allowed = SHAPES[shape] | OPTIONAL_SHAPE_KEYS.get(shape, set()) | {"shape"}
    for key in cp["domain"]:
        if key not in allowed:
            fail(f"key {key!r} does not apply to shape {shape!r}", "domain", key)
    params = {}
    for key in SHAPES[shape]:
        if key not in cp["domain"]:
            fail(f"shape {shape!r} needs {key!r}", "domain", "shape")
        vals = get("domain", key, nums(key))
        if key == "semi_axes":
            if len(vals) != dim:
                fail(f"semi_axes needs {dim} values", "domain", key)
            params[key] = tuple(vals)
        else:
            if len(vals) != 1:
                fail(f"{key} takes one value", "domain", key)
            params[key] = vals[0]
        if any(v <= 0 for v in np.atleast_1d(params[key])):
            fail(f"{key} must be positive", "domain", key)
    if shape == "dumbbell":
        if dim < 2:
            fail("dumbbell needs dim >= 2", "domain", "shape")
        params["fillet"] = get("domain", "fillet", float, 0.0)
        if params["fillet"] < 0:
            fail("fillet must be >= 0", "domain", "fillet")

    caps = tuple(get("ladder", "caps", nums("caps"), [10.0, 20.0, 40.0]))
    if not caps or any(b <= a for a, b in zip(caps, caps[1:])) or caps[0] <= 0:
        fail("caps must be positive and strictly increasing", "ladder", "caps")
    eps = get("ladder", "eps", nums("eps"), None, empty_ok=True)
    if eps is not None:
        eps = tuple(eps)
        if len(eps) == 1:
            eps = eps * len(caps)
        if len(eps) != len(caps):
            fail("eps needs one value or one per cap", "ladder", "eps")
    theta = get("ladder", "theta", float, 0.5)
    if not 0 < theta < 1:
        fail("theta must lie in (0, 1)", "ladder", "theta")

    cfl = get("solver", "cfl", float, 0.5)
    if not 0 < cfl <= 1:
        fail("cfl must lie in (0, 1]", "solver", "cfl")
    t_end = get("solver", "t_end", float, 1.0)
    dt_out = get("solver", "dt_out", float, 0.01)
    if t_end <= 0 or dt_out <= 0 or dt_out > t_end:
        fail("need 0 < dt_out <= t_end", "solver", "t_end" if t_end <= 0 else "dt_out")
    margin = get("solver", "ball_margin", int, 2)
    if margin < 1:
        fail("ball_margin must be >= 1", "solver", "ball_margin")

    diag_eps = get("diagnostics", "eps", float, None, empty_ok=True)
    frac = get("diagnostics", "eps_fraction", float, 0.1)
    if (diag_eps is not None and diag_eps <= 0) or frac <= 0:
        fail("band offset must be positive", "diagnostics", "eps" if diag_eps is not None else "eps_fraction")
    thresholds = tuple(get("diagnostics", "thresholds", nums("thresholds"), [50.0]))
    if not thresholds or list(thresholds) != sorted(thresholds):
        fail("thresholds must be nondecreasing", "diagnostics", "thresholds")
    drift = get("diagnostics", "drift_tol", float, 0.05)

    out_dir = get("output", "dir", str, f"runs/{Path(str(path)).stem}")
    if env.get(ENV_OUTPUT):
        out_dir = env[ENV_OUTPUT]
    snap = get("output", "snapshot_every", int, 1)
    if snap < 0:
        fail("snapshot_every must be >= 0", "output", "snapshot_every")
    seed = get("run", "seed", int, 0)
    workers = get("run", "workers", int, 1)
    if env.get(ENV_THREADS):
        try:
            workers = int(env[ENV_THREADS])
        except ValueError:
            raise ConfigError(f"{ENV_THREADS} must be an integer", path) from None
    if workers < 1:
        raise ConfigError("worker count must be >= 1", path, lines.get(("run", "workers")))

    cfg = ScenarioConfig(
        dim=dim, extent=extent, points=points, shape=shape, shape_params=params,
        caps=caps, eps=eps, theta=theta, cfl=cfl, t_end=t_end, dt_out=dt_out,
        ball_margin=margin, diag_eps=diag_eps,
        eps_fraction=frac, thresholds=thresholds, drift_tol=drift,
        output_dir=out_dir, snapshot_every=snap, seed=seed, workers=workers,
        source_hash=digest or hashlib.sha256(text.encode()).hexdigest(),
    )
    # geometric checks that need the grid
    spec = cfg.grid()
    omega = cfg.domain(spec)
    if omega.empty:
        fail("initial domain has no grid nodes", "domain", "shape")
    rc = cfg.resolver_config(spec)
    try:
        rc.validate()
        for j in range(len(caps)):
            if rc.eps_for(j) < 2 * max(spec.spacing) * (1 - 1e-12):
                fail("mollification radius below two grid spacings", "ladder", "eps")
    except (ConfigurationError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        fail(str(exc), "domain", "shape")
    return cfg
