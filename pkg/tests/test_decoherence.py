import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from donorsim import decoherence as dc
from donorsim.spin import DEFAULT_SYSTEM

GE = DEFAULT_SYSTEM.gamma_e


def test_id_rate_linear_in_sin2():
    th = np.linspace(0, np.pi, 7)
    r = dc.id_rate(1e22, 0.5 * GE, th, gamma_res=10.0)
    s2 = np.sin(th / 2) ** 2
    slope = (r[-1] - r[0]) / (s2[-1] - s2[0])
    np.testing.assert_allclose(r, 10.0 + slope * s2, rtol=1e-12)
    assert slope == pytest.approx(1e22 * (0.5 * GE) ** 2 * dc.ID_CONSTANT, rel=1e-12)
    with pytest.raises(ValueError):
        dc.id_rate(1e22, GE, 4.0)
    with pytest.raises(ValueError):
        dc.id_rate(-1.0, GE, 1.0)


def test_id_rate_bandwidth_limit():
    full = dc.id_rate(1e22, GE, np.pi)
    assert dc.id_rate(1e22, GE, np.pi, bandwidth=1.0, broadening=4.0) == pytest.approx(full / 4)
    assert dc.id_rate(1e22, GE, np.pi, bandwidth=4.0, broadening=1.0) == pytest.approx(full)


def test_effective_noise():
    assert dc.effective_noise(1e-3, GE) == pytest.approx(2 * np.pi / (GE * 1e-3))
    with pytest.raises(dc.UndefinedNoiseError):
        dc.effective_noise(1e-3, 0.0)
    with pytest.raises(ValueError):
        dc.effective_noise(0.0, GE)


def test_closed_form_laws():
    assert dc.flip_flop_limit(1e3) == 1.0
    n = np.array([1, 2, 8])
    np.testing.assert_allclose(dc.dd_scaling(1.0, n, 3.0), n**0.75)
    f, g = dc.thermal_scaling(np.array([0.0, 1.0]))
    np.testing.assert_allclose(f, [1.0, 1 / 3])
    np.testing.assert_array_equal(f, g)
    with pytest.raises(ValueError):
        dc.dd_scaling(1.0, 0, 1.0)
    with pytest.raises(ValueError):
        dc.thermal_scaling(-0.1)


def test_charge_noise_t2():
    t = dc.charge_noise_t2(1e5, 10.0)
    rate = 10 * abs(DEFAULT_SYSTEM.stark_eta) * DEFAULT_SYSTEM.hyperfine_A * 1e5 * 10.0
    assert t == pytest.approx(2 * np.pi / rate)
    assert dc.charge_noise_t2(1e5, 0.0) == math.inf
    assert dc.charge_noise_t2(2e5, 10.0) == pytest.approx(t / 2)


def test_bath_density_profile():
    b = dc.SurfaceBath(sigma1=4.0, sigma2=1.0, wire_width=2.0, width=0.5)
    assert b.sigma(0.0) == 1.0
    assert b.sigma(1.0) == pytest.approx(2.5)
    assert b.sigma(5.0) == 4.0
    assert b.sigma(-5.0) == 4.0
    xs = np.linspace(0, 3, 301)
    assert np.all(np.diff(b.sigma(xs)) >= 0)
    with pytest.raises(ValueError):
        dc.SurfaceBath(sigma1=-1.0, sigma2=1.0)


def test_bath_sampling_reproducible_and_poisson():
    b = dc.SurfaceBath(sigma1=1e16, sigma2=1e16, seed=7)
    d1 = dc.sample_bath(b, (-1e-6, 1e-6), 1e-6, realization=3)
    d2 = dc.sample_bath(b, (-1e-6, 1e-6), 1e-6, realization=3)
    np.testing.assert_array_equal(d1.x, d2.x)
    np.testing.assert_array_equal(d1.m, d2.m)
    assert not np.array_equal(d1.x, dc.sample_bath(b, (-1e-6, 1e-6), 1e-6, realization=4).x)
    counts = [len(dc.sample_bath(b, (-1e-6, 1e-6), 1e-6, realization=r)) for r in range(50)]
    assert np.mean(counts) == pytest.approx(4e4, rel=0.01)
    np.testing.assert_allclose(np.linalg.norm(d1.m, axis=1), b.moment)


def test_thinning_follows_density():
    b = dc.SurfaceBath(sigma1=4e16, sigma2=1e16, wire_width=1e-6, width=1e-7, seed=1)
    d = dc.sample_bath(b, (-3e-6, 3e-6), 1e-6)
    under = np.sum(np.abs(d.x) < 0.4e-6) / 0.8e-6
    outside = np.sum(np.abs(d.x) > 0.6e-6) / 4.8e-6
    assert outside / under == pytest.approx(4.0, rel=0.1)


def test_orientation_average():
    rng = np.random.default_rng(0)
    v = rng.normal(size=(200000, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    dip = dc.Dipoles(x=np.zeros(len(v)), z=np.zeros(len(v)), m=dc.MU_B * v)
    # point straight below and diagonally offset along the wire axis
    for px, py, dz in ((0.0, 20e-9, 0.0), (5e-9, 10e-9, 15e-9)):
        dip.z[:] = dz
        bz = dc.dipole_bz(dip, px, py)
        ref = dc.orientation_avg_bz2(dc.MU_B, px, py, -dz)
        assert np.mean(bz**2) == pytest.approx(ref, rel=0.02)


def test_monte_carlo_agrees_with_expectation():
    b = dc.SurfaceBath(sigma1=4e16, sigma2=4e16, realizations=100, seed=3)
    y = np.array([20e-9, 80e-9])
    mc = dc.noise_map(b, np.array([0.0]), y, cutoff=10)
    ex = dc.noise_map(b, np.array([0.0]), y, method="expected")
    np.testing.assert_allclose(mc.db, ex.db, rtol=4 * mc.stderr.max() / mc.db.min() + 0.005)
    assert mc.meta["seed"] == 3
    again = dc.noise_map(b, np.array([0.0]), y, cutoff=10)
    np.testing.assert_array_equal(mc.db, again.db)


def test_expected_noise_closed_form_for_uniform_sheet():
    # uniform sheet: db^2 = (mu0 m / 4 pi)^2 * pi sigma / (4 y^4)
    s = 4e16
    b = dc.SurfaceBath(sigma1=s, sigma2=s)
    y = np.array([10e-9, 75e-9, 300e-9])
    ref = np.sqrt((dc.mu_0 * dc.MU_B / (4 * np.pi)) ** 2 * np.pi * s / (4 * y**4))
    np.testing.assert_allclose(dc.expected_noise(b, np.array([0.0]), y)[0], ref, rtol=1e-6)
    with pytest.raises(ValueError):
        dc.noise_map(b, [0.0], [0.0])
    with pytest.raises(ValueError):
        dc.noise_map(b, [0.0], [1e-8], method="bogus")


def test_t2_map():
    db = np.array([[1e-7, 2e-7]])
    t = dc.t2_map(db, 0.9 * GE, gamma_non=5.0, c_t2=2.0)
    np.testing.assert_allclose(1 / t, 5.0 + 0.9 * GE * db / (4 * np.pi))
    assert np.all(np.isinf(dc.t2_map(np.zeros(2), GE, gamma_non=0.0)))
    np.testing.assert_allclose(dc.t2_map(np.zeros(2), GE), 0.2)
    with pytest.raises(ValueError):
        dc.t2_map(db, GE, c_t2=0.0)


def test_strip_field_shape():
    x = np.linspace(-3e-6, 3e-6, 121)
    s = dc.strip_field_shape(x, np.array([75e-9]), 2e-6)[:, 0]
    assert s[60] == pytest.approx(1.0)
    np.testing.assert_allclose(s, s[::-1], rtol=1e-12)
    assert s[np.argmin(np.abs(x - 1e-6))] > 1.1 * s[60]
    assert s[0] < s[60]


def test_uniform_population_recovers_t2():
    c = dc.aggregate_decay(np.ones(50), np.full(50, 3e-3))
    assert c.model == "gaussian"
    assert c.t2 == pytest.approx(3e-3, rel=1e-6)
    assert c.amplitude[0] <= 1


def test_decay_curve_normalised():
    w = np.array([1.0, 3.0])
    T = np.array([1e-3, 2e-3])
    a = dc.decay_curve(w, T, np.array([0.0, 1e-3]))
    assert a[0] == 1.0
    assert a[1] == pytest.approx((np.exp(-1) + 3 * np.exp(-0.25)) / 4)
    with pytest.raises(dc.EmptyRegionError):
        dc.decay_curve(np.zeros(2), T, np.array([0.0]))
    with pytest.raises(dc.EmptyRegionError):
        dc.aggregate_decay(np.zeros(3), np.ones(3))


@given(st.lists(st.floats(0.1, 10.0), min_size=2, max_size=20), st.floats(1e-4, 1e-1))
@settings(max_examples=30, deadline=None)
def test_decay_monotone_and_bounded(t2s, t):
    T = np.asarray(t2s) * 1e-3
    taus = np.linspace(0, 5 * t, 20)
    a = dc.decay_curve(np.ones_like(T), T, taus)
    assert np.all(np.diff(a) <= 1e-15)
    assert np.all((a >= 0) & (a <= 1))
