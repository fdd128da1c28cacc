import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_vain_function, brute_vain_set
from vainmcf.grid import ConfigurationError, ScalarField, make_grid
from vainmcf.resolver import (
    ResolverConfig, _extinction_time, band, build_initial, contact_angle, disc, dumbbell,
    dumbbell_profile, ellipse, extract_boundary, extrapolate_limit, resolve, smooth_max,
)
from vainmcf.vanity import (
    DomainError, DomainMask, PreconditionError, extract_graph_form, is_vain_function, is_vain_set,
)


def test_build_initial_disc():
    spec = make_grid(2, (-1.5, 1.5), 97)
    om = disc(spec, 1.0)
    u0 = build_initial(om)
    c = 48
    assert u0.values[c, c] == pytest.approx(1.0, abs=0.05)
    assert np.isinf(u0.values[~om.inside]).all()
    assert is_vain_function(np.where(om.inside, u0.values, 0.0), om, tol=0.0)
    with pytest.raises(DomainError):
        build_initial(DomainMask(spec, np.zeros(spec.shape, bool)))


@pytest.mark.parametrize("shape", ["disc", "ellipse", "band", "dumbbell", "dumbbell_fillet"])
def test_shapes_are_vain(shape):
    spec = make_grid(2, (-2, 2), 41)
    om = {
        "disc": lambda: disc(spec, 1.0),
        "ellipse": lambda: ellipse(spec, (0.6, 1.1)),
        "band": lambda: band(spec, 0.5, 1.5),
        "dumbbell": lambda: dumbbell(spec, 0.7, 0.7, 0.25),
        "dumbbell_fillet": lambda: dumbbell(spec, 0.7, 0.7, 0.25, 0.2),
    }[shape]()
    assert not om.empty and is_vain_set(om)
    assert brute_vain_set(om.inside)[0]
    u0 = build_initial(om)
    assert brute_vain_function(np.where(om.inside, u0.values, 0.0), om.inside)[0]


def test_dumbbell_needs_two_dims():
    with pytest.raises(ConfigurationError):
        dumbbell(make_grid(1, (-1, 1), 9), 0.7, 0.7, 0.25)


def test_dumbbell_profile_neck_and_lobes():
    h = dumbbell_profile(0.7, 0.7, 0.25)
    assert h(np.array(0.0)) == pytest.approx(0.25)
    assert h(np.array(0.7)) == pytest.approx(0.7)
    assert h(np.array(1.5)) == 0.0


@settings(max_examples=50)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 2))
def test_smooth_max_properties(a, b, k):
    m = smooth_max(a, b, k)
    assert m >= max(a, b) - 1e-12
    assert m <= max(a, b) + 0.25 * k + 1e-12
    if abs(a - b) >= k:
        assert m == max(a, b)


@settings(max_examples=50)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.01, 2), st.floats(0, 1))
def test_smooth_max_monotone(a, b, k, da):
    assert smooth_max(a + da, b, k) >= smooth_max(a, b, k) - 1e-12


# -- boundary ------------------------------------------------------------------------

def test_extract_boundary_level_set_of_field():
    spec = make_grid(2, (-1, 1), 65)
    h = spec.spacing[0]
    u = ScalarField(spec, spec.radius_squared())
    om = DomainMask(spec, u.values < 0.25)
    b = extract_boundary(om, u, 0.25)
    r = np.linalg.norm(b.points, axis=1)
    assert len(b) > 20
    assert np.all(np.abs(r - 0.5) < 1.5 * h)
    assert np.all(b.points[:, 0] > 0)
    # outward normal is radial
    assert np.all(np.einsum("ij,ij->i", b.normals, b.points / r[:, None]) > 0.99)


def test_extract_boundary_mask_only_matches_graph_form():
    spec = make_grid(2, (-1.5, 1.5), 49)
    om = disc(spec, 1.0)
    b = extract_boundary(om)
    gf = extract_graph_form(om)
    y = spec.axis(1)
    on_x = b.axis == 0
    assert np.all(b.points[:, 0] > 0)
    # one axis-1 crossing per nonempty fiber, at the graph height
    for j in np.flatnonzero(gf.defined):
        pts = b.points[on_x & np.isclose(b.points[:, 1], y[j])]
        assert len(pts) == 1
        assert pts[0, 0] == pytest.approx(gf.height[j])


def test_extract_boundary_empty():
    spec = make_grid(2, (-1, 1), 9)
    assert len(extract_boundary(DomainMask(spec, np.zeros(spec.shape, bool)))) == 0


def test_contact_angle_disc_is_right_angle():
    spec = make_grid(2, (-1, 1), 129)
    u = ScalarField(spec, spec.radius_squared())
    om = DomainMask(spec, u.values < 0.36)
    rep = contact_angle(extract_boundary(om, u, 0.36), 4 * spec.spacing[0])
    assert rep.count > 0
    assert abs(rep.mean - 90.0) < 5.0
    assert contact_angle(extract_boundary(om, u, 0.36), 0.0).count == 0


# -- ladder --------------------------------------------------------------------------

def test_config_validation():
    spec = make_grid(2, (-2, 2), 33)
    om = disc(spec, 1.0)
    bad = [
        dict(theta=1.0), dict(caps=(20.0, 10.0)), dict(caps=(10.0, 10.0)),
        dict(eps=(0.2,)), dict(times=(0.1, 0.0)), dict(times=(-0.1, 0.0)),
    ]
    for kw in bad:
        with pytest.raises(ConfigurationError):
            ResolverConfig(om, **kw).validate()
    with pytest.raises(DomainError):
        ResolverConfig(DomainMask(spec, np.zeros(spec.shape, bool))).validate()
    with pytest.raises(PreconditionError):
        ResolverConfig(disc(spec, 0.5, (1.0, 0.0))).validate()
    assert ResolverConfig(om).eps_for(0) == pytest.approx(2 * spec.spacing[0])
    assert ResolverConfig(om, caps=(5.0,), eps=(0.3,)).eps_for(0) == 0.3


def test_extinction_time_and_limit():
    assert _extinction_time([0, 1, 2, 3], [4.0, 2.0, 1.0, 0.0]) == pytest.approx(3.0)
    assert _extinction_time([0, 1, 2, 3], [3.0, 2.0, 1.0, 0.0]) == pytest.approx(3.0)
    assert _extinction_time([0, 1, 2, 3], [3.0, 2.5, 2.0, 0.0]) == pytest.approx(3.0)
    assert _extinction_time([0, 1, 2, 3], [3.0, 2.0, 0.5, 0.0]) == pytest.approx(2 + 0.5 / 1.5)
    assert _extinction_time([0, 1], [1.0, 1.0]) is None
    assert extrapolate_limit([10, 20], [0.3, 0.4]) == pytest.approx(0.5)
    assert extrapolate_limit([10], [0.3]) is None
    assert extrapolate_limit([10, 20], [0.3, None]) is None


def test_small_disc_resolve():
    spec = make_grid(2, (-1.5, 1.5), 65)
    rc = ResolverConfig(disc(spec, 1.0), caps=(10.0, 20.0), times=list(np.arange(0, 0.6, 0.02)))
    s = resolve(rc)
    assert len(s.masks) == len(s.times) == len(rc.times)
    assert s.level == 10.0
    for m in s.masks:
        assert is_vain_set(m)
        assert np.array_equal(m.inside, m.inside[::-1])
    vols = [m.volume() for m in s.masks]
    assert all(b <= a for a, b in zip(vols, vols[1:]))
    assert s.extinct[-1] and not s.extinct[0]
    k = s.extinct.index(True)
    assert all(s.extinct[k:])
    assert s.extinction_time is not None and s.extinction_time <= s.times[k]
    assert s.rung_stable and len(s.stability) == 1
    assert all(r.error is None for r in s.rungs)
    assert len(s.rungs[-1].frame_clamps) == len(s.times)


def test_workers_do_not_change_results():
    spec = make_grid(2, (-1.5, 1.5), 33)
    kw = dict(caps=(10.0, 20.0), times=[0.0, 0.05, 0.1])
    a = resolve(ResolverConfig(disc(spec, 1.0), **kw), workers=1)
    b = resolve(ResolverConfig(disc(spec, 1.0), **kw), workers=2)
    for x, y in zip(a.frames, b.frames):
        assert np.array_equal(x.values, y.values)


@pytest.mark.slow
def test_circle_law_extinction():
    """A disc of radius 1 in the plane vanishes at t = 1/2."""
    spec = make_grid(2, (-1.5, 1.5), 129)
    rc = ResolverConfig(disc(spec, 1.0), caps=(10.0, 20.0, 40.0),
                        times=list(np.arange(0, 0.7, 0.01)), keep_frames=False)
    s = resolve(rc)
    ts = [r.extinction_time for r in s.rungs]
    assert ts == sorted(ts)
    assert abs(s.extinction_time_limit - 0.5) / 0.5 < 0.05
