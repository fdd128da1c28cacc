import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_distance, brute_vain_function, brute_vain_set, fiber_partners, random_vain_field
from vainmcf.grid import ScalarField, make_grid, read_snapshot, save_field
from vainmcf.vanity import (
    DomainError, DomainMask, PreconditionError, compose_monotone, distance_field,
    extract_graph_form, interpolate_lambda, is_vain_function, is_vain_set, reflect,
    sublevel_mask, vanity_residual,
)

seeds = st.integers(0, 2 ** 32 - 1)


def disc_mask(spec, r, center=None):
    return DomainMask(spec, spec.radius_squared(center) < r * r)


# -- reflections -------------------------------------------------------------------

def test_reflect_examples():
    np.testing.assert_array_equal(reflect((1, 2)), (-1, 2))
    np.testing.assert_array_equal(reflect((0, 5, 7)), (0, 5, 7))


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=5))
def test_reflect_involution(x):
    np.testing.assert_array_equal(reflect(reflect(x)), x)


def test_interpolate_lambda_examples():
    np.testing.assert_array_equal(interpolate_lambda((2, 3), 0.5), (1, 3))
    x = np.array([1.5, -2.0, 4.0])
    np.testing.assert_array_equal(interpolate_lambda(x, 1.0), x)
    np.testing.assert_array_equal(interpolate_lambda(x, -1.0), reflect(x))
    np.testing.assert_array_equal(interpolate_lambda(x, 0.0), (0.0, -2.0, 4.0))
    for bad in (1.01, -2.0):
        with pytest.raises(ValueError):
            interpolate_lambda(x, bad)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=4), st.floats(-1, 1), st.floats(-1, 1))
def test_interpolate_lambda_linear(x, a, b):
    xa, xb, xm = (interpolate_lambda(x, s) for s in (a, b, 0.5 * (a + b)))
    assert abs(xm[0] - 0.5 * (xa[0] + xb[0])) <= 1e-9 * (1 + abs(x[0]))
    np.testing.assert_array_equal(xa[1:], x[1:])


def test_fiber_partners_oracle():
    assert fiber_partners(5, 0) == [0, 1, 2, 3, 4]
    assert fiber_partners(5, 3) == [1, 2, 3]
    assert fiber_partners(4, 1) == [1, 2]


# -- vain sets ---------------------------------------------------------------------

def test_centered_disc_is_vain():
    spec = make_grid(2, (-1.5, 1.5), 41)
    assert is_vain_set(disc_mask(spec, 1.0))


def test_offset_disc_not_vain_with_witness():
    spec = make_grid(2, (-2.5, 2.5), 41)
    om = disc_mask(spec, 1.0, (1.0, 0.0))
    chk = is_vain_set(om)
    assert not chk
    x, hole = chk.witness
    assert om.inside[x] and not om.inside[hole]
    assert hole[1:] == x[1:] and hole[0] in fiber_partners(spec.shape[0], x[0])
    assert not brute_vain_set(om.inside)[0]


def test_two_discs_off_plane_not_vain():
    spec = make_grid(2, (-2.5, 2.5), 41)
    om = DomainMask(spec, disc_mask(spec, 0.5, (1.0, 0.0)).inside | disc_mask(spec, 0.5, (-1.0, 0.0)).inside)
    assert not is_vain_set(om)
    assert not brute_vain_set(om.inside)[0]


def random_graph_mask(rng, shape):
    """Vain mask from a random fiber half-width (in nodes)."""
    m = shape[0]
    c = (m - 1) / 2
    width = rng.integers(-1, m // 2 + 1, size=shape[1:])
    dist = np.abs(np.arange(m) - c).reshape((-1,) + (1,) * (len(shape) - 1))
    return dist <= width


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(3, 9), st.integers(3, 6), st.booleans())
def test_is_vain_set_matches_brute_force(seed, m, k, structured):
    rng = np.random.default_rng(seed)
    shape = (m, k)
    mask = random_graph_mask(rng, shape) if structured else rng.random(shape) < 0.6
    if structured and rng.random() < 0.5:
        mask = mask.copy()
        mask[rng.integers(m), rng.integers(k)] ^= True
    spec = make_grid(2, (-1, 1), shape)
    ok, _ = brute_vain_set(mask)
    assert bool(is_vain_set(DomainMask(spec, mask))) == ok


# -- vain functions -------------------------------------------------------------------

def test_abs_x1_vain_and_x1_not():
    spec = make_grid(1, (-1, 1), 21)
    full = DomainMask(spec, np.ones(spec.shape, dtype=bool))
    x = spec.axis(0)
    assert is_vain_function(ScalarField(spec, np.abs(x)), full)
    chk = is_vain_function(ScalarField(spec, x), full)
    assert not chk and chk.reason == "not mirror-symmetric"


def test_quadratic_plus_y_on_rectangle_matches_brute_force():
    spec = make_grid(2, [(-1, 1), (-0.5, 2.0)], (11, 9))
    X, Y = spec.mesh()
    rect = DomainMask(spec, (np.abs(X) < 0.75) & (Y > 0))
    v = X ** 2 + Y
    assert is_vain_function(v, rect, tol=0.0)
    assert brute_vain_function(v, rect.inside)[0]


def test_vain_function_requires_vain_domain():
    spec = make_grid(2, (-2.5, 2.5), 21)
    with pytest.raises(PreconditionError):
        is_vain_function(np.zeros(spec.shape), disc_mask(spec, 1.0, (1.0, 0.0)))


def test_vain_function_rejects_nan():
    spec = make_grid(1, (-1, 1), 5)
    with pytest.raises(ValueError):
        is_vain_function(np.array([1, 0, np.nan, 0, 1.0]), DomainMask(spec, np.ones(5, bool)))


@settings(max_examples=80, deadline=None)
@given(seeds, st.integers(3, 9), st.integers(3, 5), st.sampled_from(["vain", "bump", "swap", "random"]))
def test_characterization_matches_definition(seed, m, k, kind):
    """Symmetry plus half-fiber monotonicity agrees with the raw definition."""
    rng = np.random.default_rng(seed)
    spec = make_grid(2, (-1, 1), (m, k))
    v = random_vain_field(rng, spec.shape)
    if kind == "bump":
        v[rng.integers(m), rng.integers(k)] += rng.normal()
    elif kind == "swap":
        j = rng.integers(k)
        v[:, j] = v[::-1, j] if m % 2 == 0 else np.roll(v[:, j], 1)
    elif kind == "random":
        v = rng.normal(size=spec.shape)
    mask = random_graph_mask(rng, spec.shape)
    omega = DomainMask(spec, mask)
    ours = is_vain_function(v, omega, tol=0.0)
    ok, _ = brute_vain_function(v, mask, 0.0)
    assert bool(ours) == ok
    if not ours:
        x, xl = ours.witness
        assert omega.inside[x] and omega.inside[xl]
        assert v[xl] > v[x]


def test_vanity_residual():
    spec = make_grid(2, (-1, 1), 9)
    v = random_vain_field(np.random.default_rng(3), spec.shape)
    assert vanity_residual(v) == 0.0
    v[6, 2] -= 0.25
    assert vanity_residual(v) >= 0.25


# -- constructions ------------------------------------------------------------------------

def test_compose_monotone_examples():
    spec = make_grid(2, (-1, 1), 9)
    rng = np.random.default_rng(5)
    full = DomainMask(spec, np.ones(spec.shape, dtype=bool))
    u = ScalarField(spec, random_vain_field(rng, spec.shape))
    v = ScalarField(spec, random_vain_field(rng, spec.shape))
    capped = compose_monotone([u], lambda a: np.minimum(a, 0.5), cap=0.5)
    assert capped.cap == 0.5 and is_vain_function(capped, full, 0.0)
    s = compose_monotone([u, v], lambda a, b: a + b)
    assert is_vain_function(s, full, 0.0)
    np.testing.assert_array_equal(compose_monotone([u], lambda a: a).values, u.values)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(3, 11), st.integers(3, 5), st.floats(-2, 4))
def test_compose_and_sublevel_properties(seed, m, k, level):
    rng = np.random.default_rng(seed)
    spec = make_grid(2, (-1, 1), (m, k))
    u = ScalarField(spec, random_vain_field(rng, spec.shape))
    v = ScalarField(spec, random_vain_field(rng, spec.shape))
    w = compose_monotone([u, v], lambda a, b: np.maximum(a, 2 * b) + np.tanh(a))
    assert brute_vain_function(w.values, np.ones(spec.shape, bool))[0]
    for strict in (True, False):
        mask = sublevel_mask(u, level, strict)
        assert brute_vain_set(mask.inside)[0]
        assert is_vain_set(mask)


def test_sublevel_examples():
    spec = make_grid(2, (-1, 1), 21)
    X, _ = spec.mesh()
    u = ScalarField(spec, np.abs(X))
    band = sublevel_mask(u, 0.5)
    np.testing.assert_array_equal(band.inside, np.abs(X) < 0.5)
    assert is_vain_set(band)
    assert sublevel_mask(u, -1.0).empty and is_vain_set(sublevel_mask(u, -1.0))


# -- distance ----------------------------------------------------------------------------

def test_distance_disc_center():
    spec = make_grid(2, (-1.5, 1.5), 61)
    d = distance_field(disc_mask(spec, 1.0))
    c = spec.shape[0] // 2
    assert abs(d.values[c, c] - 1.0) <= spec.spacing[0]


def test_distance_matches_brute_force():
    rng = np.random.default_rng(2)
    spec = make_grid(2, [(-1, 1), (0, 3)], (13, 17))
    inside = rng.random(spec.shape) < 0.7
    d = distance_field(DomainMask(spec, inside)).values
    np.testing.assert_allclose(d[inside], brute_distance(inside, spec.spacing)[inside], rtol=1e-12)


def test_distance_strip():
    spec = make_grid(2, (-1, 1), 21)
    X, _ = spec.mesh()
    h = spec.spacing[0]
    strip = DomainMask(spec, np.abs(X) < 1.5 * h)
    d = distance_field(strip).values
    c = spec.shape[0] // 2
    # nearest outside nodes sit at x1 = +-2h
    np.testing.assert_allclose(d[c, 2:-2], 2 * h, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(3, 13), st.integers(3, 6))
def test_negative_distance_vain(seed, m, k):
    rng = np.random.default_rng(seed)
    spec = make_grid(2, (-1, 1), (m, k))
    mask = random_graph_mask(rng, spec.shape)
    if not mask.any() or mask.all():
        return
    om = DomainMask(spec, mask)
    d = distance_field(om)
    assert is_vain_function(-d.values, om, tol=0.0)
    assert brute_vain_function(-d.values, mask)[0]


def test_distance_errors():
    spec = make_grid(1, (-1, 1), 5)
    with pytest.raises(DomainError):
        distance_field(DomainMask(spec, np.zeros(5, bool)))
    with pytest.raises(DomainError):
        distance_field(DomainMask(spec, np.ones(5, bool)))


# -- graph form ---------------------------------------------------------------------------

def test_graph_form_parabola_and_disc():
    spec = make_grid(2, (-1.2, 1.2), 97)
    X, Y = spec.mesh()
    h = spec.spacing[0]
    gf = extract_graph_form(DomainMask(spec, np.abs(X) < 1 - Y ** 2))
    y = spec.axis(1)
    sel = gf.defined
    assert np.all(np.abs(gf.height[sel] - (1 - y[sel] ** 2)) <= h)
    gd = extract_graph_form(disc_mask(spec, 1.0))
    sel = gd.defined
    assert np.all(np.abs(gd.height[sel] - np.sqrt(np.maximum(1 - y[sel] ** 2, 0))) <= h)
    assert not gd.defined[0] and not gd.defined[-1]


def test_graph_form_reconstructs_mask():
    spec = make_grid(2, (-1, 1), 33)
    om = disc_mask(spec, 0.8)
    gf = extract_graph_form(om)
    X, _ = spec.mesh()
    rebuilt = gf.defined[None, :] & (np.abs(X) < gf.height[None, :])
    assert np.array_equal(rebuilt, om.inside)


def test_graph_form_errors_and_csv(tmp_path):
    spec = make_grid(2, (-2.5, 2.5), 21)
    with pytest.raises(PreconditionError):
        extract_graph_form(disc_mask(spec, 1.0, (1.0, 0.0)))
    gf = extract_graph_form(disc_mask(spec, 1.0))
    gf.to_csv(tmp_path / "g.csv")
    rows = list(csv.reader(open(tmp_path / "g.csv")))
    assert rows[0] == ["x2", "h", "defined"] and len(rows) == 1 + spec.shape[1]


def test_mask_snapshot_values(tmp_path):
    spec = make_grid(2, (-1, 1), 9)
    om = disc_mask(spec, 0.6)
    save_field(tmp_path / "m.mcfs", om.as_field())
    back = read_snapshot(tmp_path / "m.mcfs")
    assert set(np.unique(back.values)) <= {0.0, 1.0}
    assert np.array_equal(back.values.astype(bool), om.inside)
