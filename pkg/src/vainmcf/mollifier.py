"""Vanity-preserving mollification.

A kernel ``eta`` preserves vanity under convolution when it is mirror
symmetric and nondecreasing in ``x1`` on ``{x1 < 0}``; a radial bump has both
properties. The discrete convolution inherits the preservation exactly: the
difference of the output between neighbouring nodes on a half-fiber pairs
each input node with its mirror image about the midpoint of the two nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ConfigurationError, GridSpec, ScalarField, write_snapshot
from .vanity import DomainMask


@dataclass(frozen=True)
class Kernel:
    """Convolution weights on node offsets ``-r_k .. r_k`` per axis."""

    weights: np.ndarray
    spacing: tuple[float, ...]
    eps: float

    @property
    def radius_nodes(self) -> tuple[int, ...]:
        return tuple((s - 1) // 2 for s in self.weights.shape)

    def is_mirror_symmetric(self) -> bool:
        return bool(np.array_equal(self.weights, self.weights[::-1]))

    def save(self, path) -> None:
        """Dump the weights as a snapshot on the offset grid ``[-r h, r h]``."""
        r = self.radius_nodes
        # snapshots need three nodes per axis; one-node axes get zero padding
        w = np.pad(self.weights, [(1, 1) if ri == 0 else (0, 0) for ri in r])
        extent = tuple((-max(ri, 1) * h, max(ri, 1) * h) for ri, h in zip(r, self.spacing))
        write_snapshot(path, GridSpec(extent, w.shape), w)

    def is_vain_profile(self) -> bool:
        """Discrete ``d/dx1 eta >= 0`` on ``{x1 < 0}`` plus symmetry."""
        r = self.radius_nodes[0]
        neg = self.weights[: r + 1]
        return self.is_mirror_symmetric() and bool(np.all(np.diff(neg, axis=0) >= 0))


def _bump(s2: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s2)
    inside = s2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s2[inside]))
    return out


def make_vain_kernel(eps: float, spec: GridSpec) -> Kernel:
    """Radial bump ``exp(-1/(1-(|x|/eps)^2))`` sampled on node offsets,
    truncated at ``|x| = eps`` and normalised to unit discrete mass."""
    hmax = max(spec.spacing)
    if eps < 2 * hmax * (1 - 1e-12):
        raise ConfigurationError(f"kernel radius {eps:g} below two grid spacings ({2 * hmax:g})")
    radii = [int(np.floor(eps / h * (1 + 1e-12))) for h in spec.spacing]
    offs = [np.arange(-r, r + 1) * h for r, h in zip(radii, spec.spacing)]
    X = np.meshgrid(*offs, indexing="ij")
    s2 = sum(x * x for x in X) / (eps * eps)
    w = _bump(s2)
    w /= w.sum()
    return Kernel(w, spec.spacing, float(eps))


def two_point_kernel(offset_nodes: int, spec: GridSpec) -> Kernel:
    """``(delta_eps + delta_-eps) / 2`` along axis 1; mirror symmetric but
    with ``-eta`` not vain, so it does not preserve vanity."""
    r = int(offset_nodes)
    shape = (2 * r + 1,) + (1,) * (spec.dim - 1)
    w = np.zeros(shape)
    w[0] = w[-1] = 0.5
    return Kernel(w, spec.spacing, r * spec.spacing[0])


def _view(v: np.ndarray, off, r) -> np.ndarray:
    return v[tuple(slice(ri + o, v.shape[k] - ri + o) for k, (o, ri) in enumerate(zip(off, r)))]


def mollify(u: ScalarField, kernel: Kernel) -> ScalarField:
    """Discrete convolution ``sum_k K(k) u(x - k h)``.

    Only nodes whose full kernel support lies in the grid are evaluated;
    the remaining frame of width ``kernel.radius_nodes`` is nan and that
    width is reported as ``meta["margin_nodes"]``. Values at or
    above the cap take part as the cap value. Offsets are summed in mirror
    pairs so the output is exactly mirror symmetric for symmetric input.
    """
    v = u.values
    if u.cap is not None:
        v = np.minimum(v, u.cap)
    w = kernel.weights
    r = kernel.radius_nodes
    if w.ndim != u.spec.dim or any(s % 2 == 0 for s in w.shape):
        raise ConfigurationError("kernel must have odd extent on every grid axis")
    if not kernel.is_mirror_symmetric():
        raise ConfigurationError("kernel is not mirror symmetric in x1")
    if any(2 * ri + 1 > m for ri, m in zip(r, v.shape)):
        raise ConfigurationError("kernel support exceeds the grid")
    acc = np.zeros(tuple(m - 2 * ri for m, ri in zip(v.shape, r)))
    for idx in np.ndindex(w.shape):
        off = tuple(i - ri for i, ri in zip(idx, r))
        if off[0] < 0:
            continue
        wk = w[idx]
        if wk == 0.0:
            continue
        # convolution reads u(x - k h)
        a = _view(v, tuple(-o for o in off), r)
        if off[0] > 0:
            mirror = (off[0],) + tuple(-o for o in off[1:])
            b = _view(v, mirror, r)
            acc += wk * (a + b)
        else:
            acc += wk * a
    out = np.full(v.shape, np.nan)
    out[tuple(slice(ri, m - ri) for ri, m in zip(r, v.shape))] = acc
    return u.with_values(out, meta={**u.meta, "margin_nodes": r})


def evaluation_mask(spec: GridSpec, kernel: Kernel) -> DomainMask:
    """Nodes where :func:`mollify` produces a value."""
    inside = np.zeros(spec.shape, dtype=bool)
    inside[tuple(slice(ri, m - ri) for ri, m in zip(kernel.radius_nodes, spec.shape))] = True
    return DomainMask(spec, inside)


def prepare_initial_data(u0: ScalarField, omega0: DomainMask, a: float, eps: float) -> ScalarField:
    """Cut ``u0`` (extended by +inf off ``omega0``) at height ``a`` and mollify.

    The result carries ``cap=a``, is vain when ``u0`` is, and equals ``a``
    outside a ball. Raises :class:`ConfigurationError` when ``{u0 < a}``
    comes closer to the grid edge than the kernel radius plus one node.
    """
    spec = u0.spec
    kernel = make_vain_kernel(eps, spec)
    with np.errstate(invalid="ignore"):
        below = omega0.inside & (u0.values < a)
    r = kernel.radius_nodes
    guard = np.ones(spec.shape, dtype=bool)
    guard[tuple(slice(2 * ri + 1, m - 2 * ri - 1) for ri, m in zip(r, spec.shape))] = False
    if (below & guard).any():
        raise ConfigurationError(
            f"sublevel set {{u0 < {a:g}}} reaches within the kernel margin of the grid edge; "
            "enlarge the grid"
        )
    capped = np.where(omega0.inside, np.minimum(u0.values, a), a)
    out = mollify(ScalarField(spec, capped, cap=a, t=u0.t), kernel).values
    out[np.isnan(out)] = a
    return ScalarField(spec, out, cap=a, t=u0.t, meta={"eps": eps, "a": a})
