"""Acceptance suite: one PASS/FAIL line per criterion in the terminal summary.

Criteria that the model cannot meet are marked ``xfail(strict=True)``: they
still print FAIL, and the run turns red if they ever start passing.
"""

import math
import time

import numpy as np
import pytest

from donorsim import config, decoherence as dc, meissner as ms, scenario as sc, spectroscopy as sp
from donorsim import strain as st
from donorsim.spin import (
    DEFAULT_SYSTEM,
    TWO_PI,
    build_hamiltonian,
    effective_gamma,
    energy_levels,
    find_clock_transition,
    group_lines,
    line_members,
    list_transitions,
    low_field_slope,
    sx_element,
)

CT_LINES = (5, 6)


# 1 -------------------------------------------------------------------------

def test_01_zero_field_splitting(report):
    t = time.perf_counter()
    w = np.linalg.eigvalsh(build_hamiltonian(DEFAULT_SYSTEM, 0.0))
    zfs = (w[9:].mean() - w[:9].mean()) / TWO_PI
    err = abs(zfs - 7.375e9) / 7.375e9
    low_deg = np.ptp(w[:9]) <= 1e-9 * abs(w[0])
    high_deg = np.ptp(w[9:]) <= 1e-9 * abs(w[-1])
    gap = w[9] - w[8] > 1e3 * max(np.ptp(w[:9]), np.ptp(w[9:]), 1.0)
    dt = time.perf_counter() - t
    ok = err < 1e-9 and low_deg and high_deg and gap and dt < 1
    assert report("1 zero-field splitting", ok, f"ZFS {zfs / 1e9:.9f} GHz, rel err {err:.1e}, "
                  f"degeneracies 9/11 {low_deg and high_deg}, {dt:.2f} s")


# 2 -------------------------------------------------------------------------

def test_02_clock_transition(report):
    t = time.perf_counter()
    ct = find_clock_transition(5)
    dt = time.perf_counter() - t
    slope = abs(ct.gamma_eff) / (TWO_PI * 1e3 / 1e-3)
    ok = 26e-3 <= ct.field_B0 <= 28e-3 and slope < 1 and dt < 5
    assert report("2 clock transition", ok,
                  f"B0 {ct.field_B0 * 1e3:.3f} mT, |gamma_eff| {slope:.1e} x 2pi kHz/mT, {dt:.2f} s")


# 3 -------------------------------------------------------------------------

def test_03_matrix_elements(report):
    t = time.perf_counter()
    ct = find_clock_transition(5)
    ct_sx = [sx_element(5, ct.field_B0, branch=b) for b, _, _ in line_members(5)]
    B = 1.4e-3
    end_sx = [sx_element(1, B), sx_element(10, B)]
    worst = 0.0
    for B0 in (1e-3, 4e-3, ct.field_B0, 50e-3):
        groups = group_lines(list_transitions(energy_levels(DEFAULT_SYSTEM, B0)))
        for i in range(2, 10):
            worst = max(worst, abs(sum(tr.sx_element for tr in groups[i]) - 0.5))
    dt = time.perf_counter() - t
    ok = (all(abs(s - 0.25) <= 0.005 for s in ct_sx) and all(abs(s - 0.48) <= 0.01 for s in end_sx)
          and worst <= 0.01 and dt < 5)
    assert report("3 matrix elements", ok,
                  f"CT pair {ct_sx[0]:.4f}/{ct_sx[1]:.4f}, lines 1/10 at 1.4 mT {end_sx[0]:.4f}/{end_sx[1]:.4f}, "
                  f"worst pair-sum error {worst:.1e}")


# 4 -------------------------------------------------------------------------

LOW_FIELDS = np.geomspace(0.2e-3, 3e-3, 60)


def _low_field_mismatch(reference):
    out = {}
    for i in range(1, 11):
        if i in CT_LINES:
            continue
        for b, _, _ in line_members(i):
            g = np.array([effective_gamma(i, B, branch=b) for B in LOW_FIELDS])
            out[(i, b)] = np.abs(g / reference(i, b) - 1)
    return out


def test_04a_low_field_law(report):
    t = time.perf_counter()
    mm = _low_field_mismatch(lambda i, b: low_field_slope(i))
    worst = max(v.max() for v in mm.values())
    # convergence towards the exact zero-field slope, which includes the nuclear Zeeman term
    exact = _low_field_mismatch(lambda i, b: effective_gamma(i, 1e-7, branch=b))
    mono = all(np.all(np.diff(v) > 0) for v in exact.values())
    dt = time.perf_counter() - t
    ok = worst < 0.05 and mono and dt < 10
    assert report("4a low-field law within 5%", ok,
                  f"worst mismatch {worst:.2%} over 0.2-3 mT (lines 5, 6 excluded); "
                  f"monotone vs exact zero-field slope {mono}")


@pytest.mark.xfail(strict=True, reason="nuclear Zeeman offset makes one branch cross zero mismatch")
def test_04b_low_field_mismatch_monotone(report):
    mm = _low_field_mismatch(lambda i, b: low_field_slope(i))
    bad = {k: LOW_FIELDS[np.argmin(v)] for k, v in mm.items() if not np.all(np.diff(v) > 0)}
    detail = "mismatch to (2m+1) gamma_e / 10 shrinks monotonically as B0 -> 0"
    if bad:
        detail += "; violated by " + ", ".join(f"line {i} {b} (minimum at {B * 1e3:.2f} mT)"
                                             for (i, b), B in bad.items())
    assert report("4b low-field mismatch monotone", not bad, detail)


# 5 -------------------------------------------------------------------------

def test_05_strain_ratio(report):
    p = config.load_config(preset="res1")
    wire, sub = sc.materials(p)
    vals, times = {}, []
    for w in (1e-6, 5e-6):
        t = time.perf_counter()
        f = st.solve_thermoelastic(st.DeviceGeometry(wire_width=w, T_dep=300.0), wire=wire, substrate=sub)
        vals[w] = float(st.hydrostatic(f.resample(np.array([0.0]), np.array([75e-9])))[0, 0])
        times.append(time.perf_counter() - t)
    ratio = vals[1e-6] / vals[5e-6]
    ok = abs(ratio - 5) <= 1.5 and max(times) < 60
    assert report("5 strain ratio", ok, f"hydrostatic(w=1um)/hydrostatic(w=5um) = {ratio:.2f}, "
                  f"slowest solve {max(times):.1f} s")


# 6 -------------------------------------------------------------------------

def _spectrum_peaks(p):
    model = sc.spectroscopy_model(p)
    b1, b2 = sc.pulses(p, model)
    B = sc.field_sweep(p)
    w = sc.line_weights(p)
    mag = p("spectrum.detection") == "magnitude"
    s1 = model.total_spectrum(B, w, b1, magnitude=mag).components[1]
    s2 = model.total_spectrum(B, w, b2, magnitude=mag).components[1]
    peaks = {k: sp.find_peaks(B, s) for k, s in (("b1", s1), ("b2", s2))}
    idx = [int(np.argmin(np.abs(B - b))) for b in peaks["b2"]]
    ratios = [s2[k] / s1[k] for k in idx]
    return peaks, ratios


@pytest.fixture(scope="module")
def spectra():
    t = time.perf_counter()
    out = {name: _spectrum_peaks(config.load_config(preset=name)) for name in ("res1", "res3")}
    return out, time.perf_counter() - t


def test_06_spectrum_morphology(report, spectra):
    out, dt = spectra
    lines, ok = [], dt < 300
    for name, target in (("res1", 0.1e-3), ("res3", 0.5e-3)):
        peaks, ratios = out[name]
        seps = {k: float(np.diff(v)[0]) if len(v) == 2 else float("nan") for k, v in peaks.items()}
        sep_ok = all(abs(s - target) <= 0.3 * target for s in seps.values())
        low, high = ratios
        amp_ok = abs(low - 1) < 0.3 and (high > 2 or high < 0.5)
        ok = ok and sep_ok and amp_ok
        lines.append(f"{name} split {seps['b1'] * 1e3:.3f}/{seps['b2'] * 1e3:.3f} mT, "
                     f"beta2/beta1 low {low:.2f} high {high:.2f}")
    assert report("6 spectrum morphology", ok, "; ".join(lines) + f"; {dt:.0f} s")


def test_06_info_library_defaults(report):
    """Same protocol with the library defaults ([100] wire, solver frame); informational."""
    info = []
    for name in ("res1", "res3"):
        over = ["strain.wire_axis='100'", "strain.shift_frame='solver'", "coherence.c_T2=1.0"]
        p = config.load_config(preset=name, overrides=over)
        peaks, ratios = _spectrum_peaks(p)
        sep = np.diff(peaks["b1"])[0] * 1e3 if len(peaks["b1"]) == 2 else float("nan")
        info.append(f"{name} split {sep:.3f} mT, beta2/beta1 " + "/".join(f"{r:.2f}" for r in ratios))
    report("6 (info) [100] wire, solver-frame shifts", None, "; ".join(info))


# 7 -------------------------------------------------------------------------

def test_07_surface_noise_scaling(report):
    t = time.perf_counter()
    n = 200
    y = np.array([20e-9, 30e-9, 45e-9, 70e-9])
    m = dc.noise_map(dc.SurfaceBath(sigma1=1e16, sigma2=1e16, realizations=n, seed=1), [0.0], y)
    depth_slope = np.polyfit(np.log(y), np.log(m.db[0]), 1)[0]
    sig = np.array([1e15, 1e16, 1e17])
    db = [dc.noise_map(dc.SurfaceBath(sigma1=s, sigma2=s, realizations=n, seed=10 + k), [0.0], [30e-9]).db[0, 0]
          for k, s in enumerate(sig)]
    sigma_slope = np.polyfit(np.log(sig), np.log(db), 1)[0]
    dt = time.perf_counter() - t
    ok = abs(depth_slope + 2) <= 0.1 and abs(sigma_slope - 0.5) <= 0.05 and dt < 120
    assert report("7 surface-noise scaling", ok, f"depth slope {depth_slope:.3f}, sigma slope {sigma_slope:.3f}, "
                  f"{n} realizations, {dt:.0f} s")


# 8 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def coherence():
    t = time.perf_counter()
    p = config.load_config(preset="res1")
    setup = sc.coherence_setup(p)
    return p, setup, t


def test_08a_coherence_calibration(report, coherence):
    p, setup, t0 = coherence
    bath_ok = (p("bath.sigma1_per_cm2") == 4e12 and p("bath.sigma2_per_cm2") == 1e12
               and p("coherence.gamma_non_per_s") == 5)
    t1 = setup.decay(1, -2.5e6).t2
    t4 = setup.decay(4, -2.5e6).t2
    far = sc.far_field_t2(p, 1, setup.model).t2
    dt = time.perf_counter() - t0

    def within(v, ref):
        return ref / 2 <= v <= 2 * ref

    ok = bath_ok and within(t1, 7.5e-3) and within(t4, 24e-3) and within(far, 3e-3) and dt < 600
    assert report("8a coherence calibration", ok,
                  f"T2(i=1) {t1 * 1e3:.2f} ms, T2(i=4) {t4 * 1e3:.2f} ms, far-field T2(i=1) {far * 1e3:.2f} ms, "
                  f"c_T2 {setup.c_t2}, {dt:.0f} s")


@pytest.mark.xfail(strict=True, reason="uniform under-wire bath: T2 tracks depth, not distance to the edge")
def test_08b_t2_falls_towards_edge(report, coherence):
    p, setup, _ = coherence
    m = setup.model
    smap = st.ShiftMap(m.x, m.y, m.f_delta)
    rho = m.profile(m.y)
    edge = p("resonator.width_um") * 1e-6 / 2
    rows = []
    for f in -np.array([2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 15.0, 18.0, 22.0]) * 1e6:
        reg = st.iso_shift_region(smap, f, m.half_band, rho)
        if reg.empty:
            continue
        rows.append((reg.mean_x, setup.decay(1, f).t2, f))
    rows.sort(key=lambda r: -abs(r[0] - edge))  # far from the edge first
    t2 = np.array([r[1] for r in rows])
    ok = bool(np.all(np.diff(t2) <= 0))
    trend = ", ".join(f"{r[2] / 1e6:.0f} MHz <x> {r[0] * 1e6:.2f} um T2 {r[1] * 1e3:.2f} ms" for r in rows)
    assert report("8b T2 falls monotonically towards the edge", ok, trend)


# 9 -------------------------------------------------------------------------

def test_09_decay_shape(report):
    t = time.perf_counter()
    y = np.linspace(20e-9, 200e-9, 200)
    rho = np.exp(-0.5 * ((y - 75e-9) / 25e-9) ** 2)
    hetero = dc.aggregate_decay(rho, 5e-3 * (y / 75e-9) ** 2)
    uniform = dc.aggregate_decay(rho, np.full_like(y, 5e-3))
    dt = time.perf_counter() - t
    ok = (hetero.residual_exponential < hetero.residual_gaussian and uniform.model == "gaussian"
          and abs(uniform.t2 / 5e-3 - 1) < 0.01 and dt < 60)
    assert report("9 aggregate decay shape", ok,
                  f"heterogeneous RSS exp {hetero.residual_exponential:.2e} < gauss {hetero.residual_gaussian:.2e}; "
                  f"uniform fit {uniform.model} T2 {uniform.t2 * 1e3:.4f} ms")


# 10 ------------------------------------------------------------------------

def test_10_id_closed_form(report):
    rho = 3.7e22
    g = 0.9 * DEFAULT_SYSTEM.gamma_e
    th = np.array([np.pi / 3, np.pi])
    rate = dc.id_rate(rho, g, th, gamma_res=40.0)
    s2 = np.sin(th / 2) ** 2
    slope = (rate[1] - rate[0]) / (s2[1] - s2[0])
    rho_fit = slope / (g**2 * dc.ID_CONSTANT)
    err = abs(rho_fit / rho - 1)
    k = [dc.id_rate(rho, r * DEFAULT_SYSTEM.gamma_e, np.pi) for r in (0.9, 0.3)]
    ratio = k[0] / k[1]
    ok = err <= 1e-12 and abs(ratio - 9) <= 1e-12
    assert report("10 ID closed form", ok, f"rho recovered to {err:.1e}, slope ratio {ratio:.12f}")


# 11 ------------------------------------------------------------------------

def test_11_scaling_laws(report):
    dd = dc.dd_scaling(1.0, 4, 1.0) / dc.dd_scaling(1.0, 1, 1.0)
    th = dc.thermal_scaling(0.5)[0]
    ff = dc.flip_flop_limit(4e4)
    dd, th = float(dd), float(th)
    ok = dd == 2.0 and th == 0.5 and ff == 0.025
    assert report("11 scaling laws", ok, f"DD {dd!r}, thermal {th!r}, flip-flop {ff!r} s")


# 12 ------------------------------------------------------------------------

def test_12_meissner_limits(report):
    t = time.perf_counter()
    free = ms.ScreeningConfig(london_depth=math.inf)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        m = rng.normal(size=3) * ms.MU_B
        off = np.array([rng.uniform(-100e-9, 100e-9), rng.uniform(10e-9, 200e-9), rng.uniform(-100e-9, 100e-9)])
        ref = ms.free_dipole_field(m, off)
        worst = max(worst, np.linalg.norm(ms.screened_dipole_field(free, m, off) - ref) / np.linalg.norm(ref))
    film = ms.ScreeningConfig(london_depth=50e-9)
    depths = np.array([20e-9, 75e-9, 150e-9])
    fac = ms.orientation_factors(film, depths)
    orient_ok = np.all(fac["perpendicular"] < 1) and np.all(fac["parallel"] > 1)
    lams = [20e-9, 50e-9, 100e-9, 300e-9, 1e-6]
    enh = [ms.averaged_noise_vs_depth(ms.ScreeningConfig(london_depth=lam), 1e16, [75e-9])["enhancement"][0]
           for lam in lams]
    mono = bool(np.all(np.diff(enh) < 0))
    mc, se = ms.monte_carlo_noise(film, 1e16, 75e-9, n_samples=2000, seed=1)
    q = ms.averaged_noise_vs_depth(film, 1e16, [75e-9])["db"][0]
    agree = abs(mc / q - 1)
    dt = time.perf_counter() - t
    ok = worst < 0.01 and orient_ok and mono and agree < 0.03 and dt < 120
    assert report("12 Meissner limits", ok,
                  f"free-limit error {worst:.1e}, perp {fac['perpendicular'][1]:.3f} par {fac['parallel'][1]:.3f} "
                  f"at 75 nm, enhancement monotone {mono}, MC vs quadrature {agree:.1%}, {dt:.0f} s")


# 13 ------------------------------------------------------------------------

def test_13_determinism(report, tmp_path):
    from donorsim import cli

    t = time.perf_counter()
    args = ["coherence-map", "--preset", "res1", "--seed", "7"]
    for o in ["grid.dx_nm=50.0", "grid.dy_nm=50.0", "grid.y_max_nm=200.0", "grid.x_extent_w=1.2",
              "coherence.noise_dx_nm=500.0", "bath.method='monte_carlo'", "bath.realizations=8"]:
        args += ["--override", o]
    codes = [cli.main(args + ["--out", str(tmp_path / f"run{k}")]) for k in range(2)]
    same = all((tmp_path / "run0" / n).read_bytes() == (tmp_path / "run1" / n).read_bytes()
               for n in ("coherence_map.csv", "coherence_map.grid"))
    for cmd in (["levels"], ["dd"], ["meissner"]):
        codes += [cli.main(cmd + ["--out", str(tmp_path / f"{cmd[0]}{k}")]) for k in range(2)]
        name = {"levels": "levels.csv", "dd": "dd.csv", "meissner": "meissner.csv"}[cmd[0]]
        same = same and (tmp_path / f"{cmd[0]}0" / name).read_bytes() == (tmp_path / f"{cmd[0]}1" / name).read_bytes()
    dt = time.perf_counter() - t
    ok = all(c == 0 for c in codes) and same and dt < 60
    assert report("13 determinism", ok, f"byte-identical CSVs across repeated runs {same}, {dt:.0f} s")
