import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_vain_function, random_vain_field
from vainmcf.grid import ConfigurationError, ScalarField, make_grid, read_snapshot
from vainmcf.mollifier import (
    Kernel, evaluation_mask, make_vain_kernel, mollify, prepare_initial_data, two_point_kernel,
)
from vainmcf.resolver import build_initial, disc
from vainmcf.vanity import DomainMask, is_vain_function


def brute_convolve(v, w):
    """sum_k w(k) v(x - k), evaluated only where the support fits."""
    r = [(s - 1) // 2 for s in w.shape]
    out = np.full(v.shape, np.nan)
    for x in itertools.product(*[range(ri, m - ri) for ri, m in zip(r, v.shape)]):
        acc = 0.0
        for k in itertools.product(*[range(-ri, ri + 1) for ri in r]):
            acc += w[tuple(ki + ri for ki, ri in zip(k, r))] * v[tuple(xi - ki for xi, ki in zip(x, k))]
        out[x] = acc
    return out


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_kernel_invariants(dim):
    spec = make_grid(dim, (-1, 1), 21)
    k = make_vain_kernel(2.5 * spec.spacing[0], spec)
    assert abs(k.weights.sum() - 1.0) < 1e-14
    assert np.all(k.weights >= 0)
    assert k.radius_nodes == (2,) * dim
    assert k.is_mirror_symmetric() and k.is_vain_profile()
    # radial: symmetric in every axis
    for ax in range(dim):
        np.testing.assert_allclose(k.weights, np.flip(k.weights, ax), rtol=0, atol=1e-18)


def test_kernel_eps_too_small():
    spec = make_grid(2, (-1, 1), 21)
    with pytest.raises(ConfigurationError):
        make_vain_kernel(1.5 * spec.spacing[0], spec)
    make_vain_kernel(2 * spec.spacing[0], spec)


def test_two_point_kernel_is_symmetric_but_not_vain():
    spec = make_grid(1, (-1, 1), 41)
    k = two_point_kernel(4, spec)
    assert k.is_mirror_symmetric() and not k.is_vain_profile()


def test_constants_preserved():
    spec = make_grid(2, (-1, 1), 25)
    k = make_vain_kernel(3 * spec.spacing[0], spec)
    out = mollify(ScalarField(spec, np.full(spec.shape, 2.5)), k)
    inner = evaluation_mask(spec, k).inside
    np.testing.assert_allclose(out.values[inner], 2.5, rtol=1e-14)
    assert np.isnan(out.values[~inner]).all()
    assert out.meta["margin_nodes"] == k.radius_nodes


def test_matches_brute_force_convolution():
    rng = np.random.default_rng(4)
    spec = make_grid(2, (-1, 1), (13, 11))
    v = rng.normal(size=spec.shape)
    w = rng.random((5, 3))
    w = 0.5 * (w + w[::-1])
    out = mollify(ScalarField(spec, v), Kernel(w, spec.spacing, 0.0)).values
    np.testing.assert_allclose(out, brute_convolve(v, w), rtol=1e-12, equal_nan=True)


def test_cap_participates_as_cap_value():
    spec = make_grid(1, (-1, 1), 11)
    v = np.linspace(0, 5, 11)
    k = make_vain_kernel(2 * spec.spacing[0], spec)
    a = mollify(ScalarField(spec, v, cap=2.0), k).values
    b = mollify(ScalarField(spec, np.minimum(v, 2.0)), k).values
    np.testing.assert_array_equal(a, b)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3), st.floats(2.0, 3.5))
def test_vanity_preserved_against_oracle(seed, dim, eps_nodes):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(9, 20 if dim < 3 else 12))
    spec = make_grid(dim, (-1, 1), m)
    v = random_vain_field(rng, spec.shape)
    k = make_vain_kernel(eps_nodes * max(spec.spacing), spec)
    out = mollify(ScalarField(spec, v), k)
    mask = evaluation_mask(spec, k)
    assert is_vain_function(out, mask, tol=1e-12)
    ok, wit = brute_vain_function(out.values, mask.inside, tol=1e-12)
    assert ok, wit
    vals = np.where(mask.inside, out.values, 0.0)
    assert np.array_equal(vals, vals[::-1])


def test_counterexample_breaks_vanity():
    spec = make_grid(1, (-1, 1), 41)
    u = ScalarField(spec, np.sqrt(np.abs(spec.axis(0))))
    k = two_point_kernel(4, spec)
    out = mollify(u, k)
    mask = evaluation_mask(spec, k)
    chk = is_vain_function(out, mask, tol=1e-12)
    assert not chk
    x, xl = chk.witness
    assert abs(spec.axis(0)[xl[0]]) < abs(spec.axis(0)[x[0]])
    assert out.values[xl] > out.values[x]
    # the witness at the plane is the explicit value sqrt(eps) vs its neighbour
    c = 20
    assert out.values[c] == pytest.approx(np.sqrt(4 * spec.spacing[0]))


def test_asymmetric_and_oversized_kernels_rejected():
    spec = make_grid(1, (-1, 1), 9)
    u = ScalarField(spec, np.zeros(9))
    with pytest.raises(ConfigurationError):
        mollify(u, Kernel(np.array([0.2, 0.3, 0.5]), spec.spacing, 0.0))
    with pytest.raises(ConfigurationError):
        mollify(u, Kernel(np.array([0.5, 0.5]), spec.spacing, 0.0))
    with pytest.raises(ConfigurationError):
        mollify(u, Kernel(np.ones(11) / 11, spec.spacing, 0.0))


def test_kernel_save_roundtrip(tmp_path):
    spec = make_grid(2, (-1, 1), 21)
    k = make_vain_kernel(2.2 * spec.spacing[0], spec)
    k.save(tmp_path / "k.mcfs")
    back = read_snapshot(tmp_path / "k.mcfs")
    np.testing.assert_array_equal(back.values, k.weights)
    assert back.spec.spacing == pytest.approx(spec.spacing)
    k1 = two_point_kernel(2, spec)
    k1.save(tmp_path / "k1.mcfs")
    back = read_snapshot(tmp_path / "k1.mcfs")
    assert back.values.shape == (5, 3)
    np.testing.assert_array_equal(back.values[:, 1], k1.weights[:, 0])


# -- initial data --------------------------------------------------------------------

def _disc_setup(points=65, L=1.5):
    spec = make_grid(2, (-L, L), points)
    om = disc(spec, 1.0)
    return spec, om, build_initial(om)


def test_prepare_initial_data_frame_and_vanity():
    spec, om, u0 = _disc_setup()
    a = 10.0
    u = prepare_initial_data(u0, om, a, 2 * spec.spacing[0])
    assert u.cap == a and np.isfinite(u.values).all()
    assert np.all(u.values <= a + 1e-12)
    X, Y = spec.mesh()
    far = X ** 2 + Y ** 2 > 1.2 ** 2
    np.testing.assert_allclose(u.values[far], a, rtol=0, atol=1e-12)
    full = DomainMask(spec, np.ones(spec.shape, dtype=bool))
    assert is_vain_function(u, full, tol=1e-12)
    assert np.array_equal(u.values, u.values[::-1])


def test_prepare_initial_data_locality():
    """As eps -> 0 the mollified data approaches min(u0, a) away from the edge."""
    spec, om, u0 = _disc_setup(points=129)
    a = 10.0
    ref = np.where(om.inside, np.minimum(u0.values, a), a)
    X, Y = spec.mesh()
    probe = X ** 2 + Y ** 2 < 0.5 ** 2
    errs = []
    for f in (8, 4, 2):
        u = prepare_initial_data(u0, om, a, f * spec.spacing[0])
        errs.append(np.abs(u.values - ref)[probe].max())
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.05


def test_prepare_initial_data_edge_error():
    spec = make_grid(2, (-1.05, 1.05), 43)
    om = disc(spec, 1.0)
    with pytest.raises(ConfigurationError):
        prepare_initial_data(build_initial(om), om, 50.0, 2 * spec.spacing[0])
