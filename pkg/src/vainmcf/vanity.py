"""Vanity of grid sets and grid functions.

A set is vain when every point ``x`` sees its mirror image, i.e. the whole
segment ``x_lam = (lam*x1, x2, ..., xn)``, ``lam in [-1, 1]``, lies in the
set. A function ``u`` on a vain set is vain when ``u(x_lam) <= u(x)``.
On a grid only the nodes of the axis-1 fiber through ``x`` are checked.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .grid import GridSpec, ScalarField


class PreconditionError(ValueError):
    """An operation was called on data violating its preconditions."""


class DomainError(ValueError):
    """Empty or degenerate domain."""


class VanityCheck(NamedTuple):
    """Verdict of a vanity test.

    ``witness`` is ``(x, x_lam)`` as node index tuples on failure: ``x`` is a
    node of the set and ``x_lam`` a node of its fiber segment violating the
    definition.
    """

    ok: bool
    witness: tuple | None = None
    reason: str = ""

    def __bool__(self):
        return self.ok


def reflect(x):
    x = np.array(x, dtype=float)
    x[0] = -x[0]
    return x


def interpolate_lambda(x, lam: float):
    if not -1.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [-1, 1], got {lam}")
    x = np.array(x, dtype=float)
    x[0] = lam * x[0]
    return x


@dataclass(frozen=True)
class DomainMask:
    spec: GridSpec
    inside: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.inside, dtype=bool)
        if m.shape != self.spec.shape:
            raise ValueError("mask shape does not match the grid")
        object.__setattr__(self, "inside", m)

    @property
    def empty(self) -> bool:
        return not self.inside.any()

    def volume(self) -> float:
        return float(self.inside.sum() * np.prod(self.spec.spacing))

    def as_field(self, t: float = 0.0) -> ScalarField:
        return ScalarField(self.spec, self.inside.astype(float), t=t)


def _folded(mask: np.ndarray):
    """Pairs of mirror fibers, outermost first: arrays of shape (half, ...)."""
    m = mask.shape[0]
    half = (m + 1) // 2
    return mask[:half], mask[::-1][:half]


def is_vain_set(omega: DomainMask) -> VanityCheck:
    inside = omega.inside
    m = inside.shape[0]
    lo, hi = _folded(inside)
    both = lo & hi
    outer_any = np.logical_or.accumulate(lo | hi, axis=0)
    bad = outer_any & ~both
    if not bad.any():
        return VanityCheck(True)
    idx = np.argwhere(bad)
    # pick the violation closest to the outer edge for a stable witness
    i, *rest = idx[0]
    rest = tuple(int(r) for r in rest)
    col_lo = lo[(slice(None),) + rest]
    col_hi = hi[(slice(None),) + rest]
    j = int(np.argmax((col_lo | col_hi)[: i + 1]))
    x = (j,) + rest if col_lo[j] else (m - 1 - j,) + rest
    hole = (int(i),) + rest if not col_lo[i] else (m - 1 - int(i),) + rest
    return VanityCheck(False, (x, hole), "fiber segment leaves the set")


def is_vain_function(u: ScalarField | np.ndarray, omega: DomainMask, tol: float = 1e-10) -> VanityCheck:
    """Mirror symmetry plus monotonicity along the half-fibers ``x1 >= 0``."""
    if not is_vain_set(omega):
        raise PreconditionError("domain is not vain")
    v = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
    inside = omega.inside
    m = v.shape[0]
    if np.isnan(v[inside]).any():
        raise ValueError("function has invalid (nan) values on the domain")
    with np.errstate(invalid="ignore"):
        vr = v[::-1]
        asym = inside & ~((v == vr) | (np.abs(v - vr) <= tol)) & (v < vr)
        if asym.any():
            x = tuple(int(j) for j in np.argwhere(asym)[0])
            return VanityCheck(False, (x, omega.spec.reflect_index(x)), "not mirror-symmetric")
        start = m // 2
        pos = v[start:]
        ins = inside[start:]
        pair = ins[1:] & ins[:-1]
        drop = pair & (pos[1:] < pos[:-1] - tol)
    if drop.any():
        k, *rest = np.argwhere(drop)[0]
        x = (start + int(k) + 1,) + tuple(int(r) for r in rest)
        xl = (start + int(k),) + tuple(int(r) for r in rest)
        return VanityCheck(False, (x, xl), "decreasing along a half-fiber")
    return VanityCheck(True)


def vanity_residual(u: ScalarField | np.ndarray, omega: DomainMask | None = None) -> float:
    """Smallest ``tol`` for which :func:`is_vain_function` passes: the larger
    of the mirror asymmetry and the largest decrease along a half-fiber."""
    v = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
    inside = np.ones(v.shape, dtype=bool) if omega is None else omega.inside
    both = inside & inside[::-1]
    asym = np.abs(v - v[::-1])[both]
    start = v.shape[0] // 2
    pos, ins = v[start:], inside[start:]
    pair = ins[1:] & ins[:-1]
    drop = (pos[:-1] - pos[1:])[pair]
    vals = [0.0]
    if asym.size:
        vals.append(float(np.max(asym)))
    if drop.size:
        vals.append(float(np.max(drop)))
    return max(vals)


def compose_monotone(fields: Sequence[ScalarField], m: Callable, cap: float | None = None) -> ScalarField:
    """Pointwise ``m(u1(x), ..., uk(x))``; ``m`` must be nondecreasing in
    each argument for the result to be vain."""
    first = fields[0]
    out = m(*(f.values for f in fields))
    return ScalarField(first.spec, np.asarray(out, dtype=float), cap=cap, t=first.t)


def sublevel_mask(u: ScalarField, a: float, strict: bool = True) -> DomainMask:
    with np.errstate(invalid="ignore"):
        inside = u.values < a if strict else u.values <= a
    return DomainMask(u.spec, inside & ~np.isnan(u.values))


def distance_field(omega: DomainMask) -> ScalarField:
    """Euclidean distance from each inside node to the nearest outside node.

    Outside nodes get 0. Measuring to the outside node set (rather than to
    the last inside layer) keeps ``d > 0`` on the set and makes ``-d``
    exactly vain on vain masks.
    """
    if omega.empty:
        raise DomainError("distance to the boundary of an empty set")
    if omega.inside.all():
        raise DomainError("set fills the whole grid; boundary not resolved")
    d = ndimage.distance_transform_edt(omega.inside, sampling=omega.spec.spacing)
    return ScalarField(omega.spec, d)


@dataclass(frozen=True)
class GraphForm:
    """``|x1| < height(xhat)`` over the base nodes where ``defined``."""

    base: list[np.ndarray]
    height: np.ndarray
    defined: np.ndarray

    def to_csv(self, path) -> None:
        grids = np.meshgrid(*self.base, indexing="ij") if self.base else []
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{k + 2}" for k in range(len(self.base))] + ["h", "defined"])
            for idx in np.ndindex(self.height.shape):
                coords = [f"{g[idx]:.17g}" for g in grids]
                w.writerow(coords + [f"{self.height[idx]:.17g}", int(self.defined[idx])])


def extract_graph_form(omega: DomainMask) -> GraphForm:
    """Half-width of every axis-1 fiber, padded by half a cell."""
    check = is_vain_set(omega)
    if not check:
        raise PreconditionError(f"domain is not vain: fiber through {check.witness[0]} is not a segment")
    spec = omega.spec
    x1 = np.abs(spec.axis(0))
    shape = (-1,) + (1,) * (spec.dim - 1)
    reach = np.where(omega.inside, x1.reshape(shape), -np.inf).max(axis=0)
    defined = omega.inside.any(axis=0)
    height = np.where(defined, reach + 0.5 * spec.spacing[0], 0.0)
    return GraphForm([spec.axis(k) for k in range(1, spec.dim)], height, defined)
