"""Uniform Cartesian grids, extended-real scalar fields and central differences.

Axis 0 of every array is the coordinate ``x1``, the direction of the mirror
reflection. Grids are required to be symmetric along that axis so the
reflection maps nodes onto nodes; node coordinates on axis 0 are stored
exactly antisymmetric so reflected quantities agree bitwise.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"MCFS"
FORMAT_VERSION = 1


class ConfigurationError(ValueError):
    """Invalid grid, kernel or scenario configuration."""


class SnapshotFormatError(ValueError):
    """A snapshot file could not be decoded."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid on a box in R^n.

    Attributes
    ----------
    extent : tuple of (lo, hi) per axis
    points : tuple of node counts per axis
    """

    extent: tuple[tuple[float, float], ...]
    points: tuple[int, ...]

    def __post_init__(self):
        if len(self.extent) != len(self.points) or len(self.points) < 1:
            raise ConfigurationError("extent and points must have the same length >= 1")
        for k, ((lo, hi), m) in enumerate(zip(self.extent, self.points)):
            if m < 3:
                raise ConfigurationError(f"axis {k + 1}: need at least 3 points, got {m}")
            if not hi > lo:
                raise ConfigurationError(f"axis {k + 1}: empty extent [{lo}, {hi}]")
        lo, hi = self.extent[0]
        if lo != -hi:
            raise ConfigurationError(
                f"axis 1 extent must be symmetric about 0, got [{lo}, {hi}]"
            )

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (m - 1) for (lo, hi), m in zip(self.extent, self.points))

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    def axis(self, k: int) -> np.ndarray:
        """Node coordinates along axis ``k`` (0-based)."""
        lo, hi = self.extent[k]
        x = np.linspace(lo, hi, self.points[k])
        if k == 0:
            x = 0.5 * (x - x[::-1])
            if self.points[0] % 2 == 1:
                x[self.points[0] // 2] = 0.0
        return x

    def axes(self) -> list[np.ndarray]:
        return [self.axis(k) for k in range(self.dim)]

    def mesh(self) -> list[np.ndarray]:
        """Coordinate arrays, one per axis, each of grid shape."""
        return list(np.meshgrid(*self.axes(), indexing="ij"))

    def radius_squared(self, center: Sequence[float] | None = None) -> np.ndarray:
        X = self.mesh()
        if center is None:
            center = (0.0,) * self.dim
        return sum((x - c) ** 2 for x, c in zip(X, center))

    def reflect_index(self, index: Sequence[int]) -> tuple[int, ...]:
        return (self.points[0] - 1 - index[0],) + tuple(index[1:])

    def coords(self, index: Sequence[int]) -> np.ndarray:
        return np.array([self.axis(k)[i] for k, i in enumerate(index)])


def make_grid(dim: int, extent, points) -> GridSpec:
    """Build a validated :class:`GridSpec`.

    ``extent`` is one ``(lo, hi)`` pair (used for every axis) or a sequence of
    ``dim`` pairs; ``points`` is an int or a sequence of ``dim`` ints.
    """
    if dim < 1:
        raise ConfigurationError(f"dimension must be >= 1, got {dim}")
    ext = np.asarray(extent, dtype=float)
    if ext.shape == (2,):
        ext = np.tile(ext, (dim, 1))
    if ext.shape != (dim, 2):
        raise ConfigurationError(f"extent must be a pair or {dim} pairs")
    if np.isscalar(points):
        pts = (int(points),) * dim
    else:
        pts = tuple(int(p) for p in points)
    if len(pts) != dim:
        raise ConfigurationError(f"points must have {dim} entries")
    return GridSpec(tuple((float(lo), float(hi)) for lo, hi in ext), pts)


@dataclass(frozen=True)
class ScalarField:
    """Grid function with an optional cap standing in for +inf.

    Values at or above ``cap`` are read as the capped value ``a``. Without a
    cap, ``+inf`` entries are allowed. ``nan`` marks invalid nodes.
    """

    spec: GridSpec
    values: np.ndarray
    cap: float | None = None
    t: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.spec.shape:
            if v.size != self.spec.size:
                raise ValueError(f"values have {v.size} entries, grid has {self.spec.size}")
            v = v.reshape(self.spec.shape)
        if self.cap is not None and np.isposinf(v).any():
            raise ValueError("+inf values are only allowed when cap is None")
        object.__setattr__(self, "values", v)

    def with_values(self, values, **changes) -> "ScalarField":
        kw = dict(cap=self.cap, t=self.t)
        kw.update(changes)
        return ScalarField(self.spec, values, **kw)

    def capped_mask(self) -> np.ndarray:
        if self.cap is None:
            return np.isposinf(self.values)
        return self.values >= self.cap


def _check_finite_for_stencil(u: np.ndarray) -> np.ndarray:
    """Work copy with non-finite entries replaced by nan so they propagate."""
    v = np.array(u, dtype=np.float64)
    v[~np.isfinite(v)] = np.nan
    return v


def _diff1(v: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Second-order first derivative: central inside, one-sided at the ends."""
    out = np.empty_like(v)
    s = [slice(None)] * v.ndim

    def sl(a, b=None):
        t = list(s)
        t[axis] = slice(a, b)
        return tuple(t)

    out[sl(1, -1)] = (v[sl(2, None)] - v[sl(None, -2)]) / (2 * h)
    out[sl(0, 1)] = (-3 * v[sl(0, 1)] + 4 * v[sl(1, 2)] - v[sl(2, 3)]) / (2 * h)
    out[sl(-1, None)] = (3 * v[sl(-1, None)] - 4 * v[sl(-2, -1)] + v[sl(-3, -2)]) / (2 * h)
    return out


def _diff2(v: np.ndarray, h: float, axis: int) -> np.ndarray:
    out = np.empty_like(v)
    s = [slice(None)] * v.ndim

    def sl(a, b=None):
        t = list(s)
        t[axis] = slice(a, b)
        return tuple(t)

    out[sl(1, -1)] = ((v[sl(2, None)] + v[sl(None, -2)]) - 2 * v[sl(1, -1)]) / (h * h)
    m = v.shape[axis]
    if m >= 4:
        out[sl(0, 1)] = (2 * v[sl(0, 1)] - 5 * v[sl(1, 2)] + 4 * v[sl(2, 3)] - v[sl(3, 4)]) / (h * h)
        out[sl(-1, None)] = (
            2 * v[sl(-1, None)] - 5 * v[sl(-2, -1)] + 4 * v[sl(-3, -2)] - v[sl(-4, -3)]
        ) / (h * h)
    else:
        out[sl(0, 1)] = out[sl(1, 2)]
        out[sl(-1, None)] = out[sl(1, 2)]
    return out


def central_gradient(u: ScalarField | np.ndarray, spec: GridSpec | None = None) -> np.ndarray:
    """Gradient as an array of shape ``(n, *grid)``.

    Nodes whose stencil touches a non-finite value come out as nan.
    """
    if isinstance(u, ScalarField):
        spec, u = u.spec, u.values
    v = _check_finite_for_stencil(u)
    return np.stack([_diff1(v, h, k) for k, h in enumerate(spec.spacing)])


def central_hessian(u: ScalarField | np.ndarray, spec: GridSpec | None = None) -> np.ndarray:
    """Hessian as an array of shape ``(n, n, *grid)``.

    Mixed entries use the 4-point cross stencil in the interior and are
    assigned to both ``[k, l]`` and ``[l, k]`` so symmetry is exact.
    """
    if isinstance(u, ScalarField):
        spec, u = u.spec, u.values
    v = _check_finite_for_stencil(u)
    n = spec.dim
    h = spec.spacing
    H = np.empty((n, n) + v.shape)
    for k in range(n):
        H[k, k] = _diff2(v, h[k], k)
        for l in range(k + 1, n):
            # differentiate the one-sided-at-the-ends first derivative; in the
            # interior this reduces to the cross stencil, grouped so that
            # reflection along either axis negates it exactly
            d = np.empty_like(v)
            d[...] = _diff1(_diff1(v, h[l], l), h[k], k)
            inner = [slice(1, -1)] * n
            pp = _shift(v, k, 1, l, 1)
            pm = _shift(v, k, 1, l, -1)
            mp = _shift(v, k, -1, l, 1)
            mm = _shift(v, k, -1, l, -1)
            d[tuple(inner)] = ((pp - pm) - (mp - mm)) / (4 * h[k] * h[l])
            H[k, l] = d
            H[l, k] = d
    return H


def _shift(v: np.ndarray, k: int, dk: int, l: int, dl: int) -> np.ndarray:
    """Interior view of ``v`` offset by ``dk`` on axis k and ``dl`` on axis l."""
    idx = []
    for ax, m in enumerate(v.shape):
        off = dk if ax == k else dl if ax == l else 0
        idx.append(slice(1 + off, m - 1 + off))
    return v[tuple(idx)]


# -- snapshots ---------------------------------------------------------------

def write_snapshot(path, spec: GridSpec, values, t: float = 0.0, cap: float | None = None) -> None:
    """Write a grid function in the MCFS binary format (little-endian)."""
    values = np.asarray(values, dtype="<f8")
    if values.shape != spec.shape:
        raise ValueError("values do not match the grid shape")
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<I", spec.dim)]
    parts.append(struct.pack(f"<{spec.dim}I", *spec.points))
    for lo, hi in spec.extent:
        parts.append(struct.pack("<2d", lo, hi))
    parts.append(struct.pack("<d", t))
    parts.append(struct.pack("<d", float("nan") if cap is None else cap))
    parts.append(np.ascontiguousarray(values).tobytes(order="C"))
    Path(path).write_bytes(b"".join(parts))


def save_field(path, u: ScalarField) -> None:
    write_snapshot(path, u.spec, u.values, u.t, u.cap)


def read_snapshot(path) -> ScalarField:
    """Read an MCFS file; raises :class:`SnapshotFormatError` or
    :class:`ConfigurationError` (e.g. asymmetric axis 1)."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != MAGIC:
        raise SnapshotFormatError("bad magic, not an MCFS snapshot")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    (dim,) = struct.unpack_from("<I", data, 8)
    off = 12
    try:
        points = struct.unpack_from(f"<{dim}I", data, off)
        off += 4 * dim
        ext = struct.unpack_from(f"<{2 * dim}d", data, off)
        off += 16 * dim
        t, cap = struct.unpack_from("<2d", data, off)
        off += 16
    except struct.error as exc:
        raise SnapshotFormatError(f"truncated header: {exc}") from None
    count = int(np.prod(points))
    if len(data) - off != 8 * count:
        raise SnapshotFormatError(
            f"payload has {len(data) - off} bytes, expected {8 * count}"
        )
    spec = GridSpec(tuple((ext[2 * k], ext[2 * k + 1]) for k in range(dim)), tuple(points))
    values = np.frombuffer(data, dtype="<f8", offset=off).reshape(spec.shape).astype(np.float64)
    return ScalarField(spec, values, cap=None if np.isnan(cap) else cap, t=t)
