"""Build model objects from a resolved :class:`~donorsim.config.Params`.

Unit-suffixed configuration values are converted to SI here and nowhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import decoherence as dc
from . import device as dv
from . import meissner as ms
from . import spectroscopy as sp
from . import strain as st
from .config import ConfigError, Params
from .spin import TWO_PI, SpinSystem, effective_gamma, line_members

NM, UM, MT = 1e-9, 1e-6, 1e-3


def spin_system(p: Params) -> SpinSystem:
    return SpinSystem(
        hyperfine_A=TWO_PI * p("spin.hyperfine_A_GHz") * 1e9,
        gamma_e=TWO_PI * p("spin.gamma_e_GHz_per_T") * 1e9,
        gamma_n=TWO_PI * p("spin.gamma_n_MHz_per_T") * 1e6,
        strain_K=p("spin.strain_K"),
        strain_L=p("spin.strain_L"),
        stark_eta=p("spin.stark_eta_um2_per_V2") * 1e-12,
    )


def resonator(p: Params) -> dv.ResonatorParams:
    return dv.ResonatorParams(
        omega0=TWO_PI * p("resonator.f0_GHz") * 1e9,
        Z0=p("resonator.Z0_ohm"),
        kappa_i=p("resonator.kappa_i_per_s"),
        kappa_c=p("resonator.kappa_c_per_s"),
        wire_width=p("resonator.width_um") * UM,
        wire_thickness=p("resonator.thickness_nm") * NM,
        wire_length=p("resonator.length_um") * UM,
        london_depth=p("resonator.london_depth_nm") * NM,
    )


def materials(p: Params) -> tuple[st.MaterialProps, st.MaterialProps]:
    gpa = 1e9
    sub = st.MaterialProps(
        thermal_expansion=p("materials.substrate_alpha_per_K"),
        cubic=(p("materials.substrate_C11_GPa") * gpa, p("materials.substrate_C12_GPa") * gpa,
               p("materials.substrate_C44_GPa") * gpa),
    )
    model = p("materials.wire_model")
    alpha = p("materials.wire_alpha_per_K")
    if model == "isotropic":
        wire = st.MaterialProps(thermal_expansion=alpha, youngs_modulus=p("materials.wire_E_GPa") * gpa,
                                poisson_ratio=p("materials.wire_nu"))
    elif model == "cubic":
        wire = st.MaterialProps(thermal_expansion=alpha,
                                cubic=(p("materials.wire_C11_GPa") * gpa, p("materials.wire_C12_GPa") * gpa,
                                       p("materials.wire_C44_GPa") * gpa))
    else:
        raise ConfigError("materials.wire_model must be 'isotropic' or 'cubic'", ["materials.wire_model"])
    return wire, sub


def geometry(p: Params) -> st.DeviceGeometry:
    w = p("resonator.width_um") * UM
    axis = p("strain.wire_axis")
    if axis not in st.WIRE_AXIS_ROTATION:
        raise ConfigError(f"strain.wire_axis must be one of {sorted(st.WIRE_AXIS_ROTATION)}",
                          ["strain.wire_axis"])
    return st.DeviceGeometry(
        wire_width=w,
        wire_thickness=p("resonator.thickness_nm") * NM,
        wire_length=p("resonator.length_um") * UM,
        domain_half_width=p("strain.domain_half_width_w") * w,
        domain_depth=p("strain.domain_depth_w") * w,
        T_dep=p("strain.T_dep_K"),
        T_op=p("strain.T_op_K"),
        mesh_h_min=p("strain.mesh_h_min_nm") * NM,
        mesh_fine_radius=p("strain.mesh_fine_radius_nm") * NM,
        mesh_growth=p("strain.mesh_growth"),
        wire_axis=axis,
    )


def strain_field(p: Params) -> st.StrainField:
    wire, sub = materials(p)
    return st.solve_thermoelastic(geometry(p), wire=wire, substrate=sub)


def model_grid(p: Params) -> tuple[np.ndarray, np.ndarray]:
    """Uniform (x, y) grid for spectra and noise maps, inside the strain domain."""
    w = p("resonator.width_um") * UM
    ext = min(p("grid.x_extent_w"), 0.99 * p("strain.domain_half_width_w")) * w
    dx, dy = p("grid.dx_nm") * NM, p("grid.dy_nm") * NM
    y_max = min(p("grid.y_max_nm") * NM, 0.99 * p("strain.domain_depth_w") * w)
    n = int(round(ext / dx))
    x = dx * np.arange(-n, n + 1)
    y = dy * np.arange(0, int(round(y_max / dy)) + 1)
    return x, y


def shift_on_grid(p: Params, field: st.StrainField | None = None) -> st.ShiftMap:
    field = field or strain_field(p)
    x, y = model_grid(p)
    frame = p("strain.shift_frame")
    if frame not in ("solver", "crystal"):
        raise ConfigError("strain.shift_frame must be 'solver' or 'crystal'", ["strain.shift_frame"])
    return st.shift_map(field.resample(x, y), spin_system(p), frame=frame)


def donor_profile(p: Params) -> dv.DonorProfile:
    depth, dens = p("profile.depth_nm"), p("profile.density_per_um3")
    if len(depth) or len(dens):
        try:
            return dv.DonorProfile(np.asarray(depth, float) * NM, np.asarray(dens, float) / dv.MICRON3)
        except ValueError as exc:
            raise ConfigError(f"profile table: {exc}", ["profile.depth_nm", "profile.density_per_um3"]) from exc
    return dv.gaussian_profile(center=p("profile.center_nm") * NM, sigma=p("profile.sigma_nm") * NM,
                               peak=p("profile.peak_per_um3") / dv.MICRON3)


def vacuum_field(p: Params, x: np.ndarray, y: np.ndarray) -> dv.FieldMap:
    res = resonator(p)
    cur = dv.current_distribution(res.wire_width, res.wire_thickness, res.london_depth,
                                  mode=p("resonator.current_mode"))
    return dv.vacuum_field(res, cur, x, y)


def spectroscopy_model(p: Params, smap: st.ShiftMap | None = None) -> sp.SpectroscopyModel:
    smap = smap or shift_on_grid(p)
    res = resonator(p)
    field = vacuum_field(p, smap.x, smap.y)
    mask = sp.schottky_mask(smap.x, smap.y, res.wire_width, p("spectrum.schottky"))
    return sp.SpectroscopyModel(smap.x, smap.y, smap.f_delta, field.magnitude, donor_profile(p), res,
                                system=spin_system(p), mask=mask)


def reference_beta(p: Params, model: sp.SpectroscopyModel) -> float:
    """beta1: a pi/2 rotation for the dominant branch of the reference line at (0, depth)."""
    value = p("pulse.beta1")
    if value != "auto":
        if isinstance(value, str):
            raise ConfigError("pulse.beta1 must be a number or 'auto'", ["pulse.beta1"])
        return float(value)
    line = int(p("pulse.reference_line"))
    members = line_members(line, model.system)
    sx = max(model.branch_sx(line, b) for b, _, _ in members)
    i = int(np.argmin(np.abs(model.x)))
    j = int(np.argmin(np.abs(model.y - p("pulse.reference_depth_nm") * NM)))
    g0 = model.system.gamma_e * sx * model.dB1[i, j]
    return dv.calibrate_beta(g0, p("pulse.t_p_us") * UM, model.params.kappa)


def pulses(p: Params, model: sp.SpectroscopyModel) -> tuple[sp.PulseParams, sp.PulseParams]:
    b1 = reference_beta(p, model)
    t_p, t_rep = p("pulse.t_p_us") * UM, p("pulse.t_rep_s")
    ratio = p("pulse.beta_ratio")
    return sp.PulseParams(b1, t_p, t_rep), sp.PulseParams(ratio * b1, t_p, t_rep)


def field_sweep(p: Params) -> np.ndarray:
    lo, hi = p("spectrum.B_min_mT") * MT, p("spectrum.B_max_mT") * MT
    step = p("spectrum.B_step_uT") * 1e-6
    if not 0 < lo < hi or step <= 0:
        raise ConfigError("field sweep needs 0 < B_min < B_max and a positive step",
                          ["spectrum.B_min_mT", "spectrum.B_max_mT", "spectrum.B_step_uT"])
    return lo + step * np.arange(int(math.floor((hi - lo) / step + 1e-9)) + 1)


def line_weights(p: Params) -> dict[int, float]:
    return {int(k): float(v) for k, v in p("spectrum.weights").items()}


def surface_bath(p: Params) -> dc.SurfaceBath:
    cm2 = dc.CM2
    return dc.SurfaceBath(
        sigma1=p("bath.sigma1_per_cm2") * cm2,
        sigma2=p("bath.sigma2_per_cm2") * cm2,
        wire_width=p("resonator.width_um") * UM,
        width=p("bath.width_nm") * NM,
        realizations=int(p("bath.realizations")),
        seed=p.seed,
    )


def gamma_non_map(p: Params, x: np.ndarray, y: np.ndarray):
    """Constant non-magnetic rate, plus the charge-noise map when enabled."""
    g = p("coherence.gamma_non_per_s")
    if not p("coherence.charge_noise"):
        return g
    yy = np.maximum(y, 1e-12)
    return g + dc.charge_noise_rate_map(
        x, yy, p("resonator.width_um") * UM, p("charge.E_r_V_per_m"), p("charge.sqrt_S_V_mV") * 1e-3,
        p("charge.field_per_volt_per_m"), spin_system(p))


def screening(p: Params, london_depth_nm: float) -> ms.ScreeningConfig:
    lam = math.inf if london_depth_nm in (math.inf, 0) else london_depth_nm * NM
    return ms.ScreeningConfig(thickness=p("meissner.thickness_nm") * NM, gap=p("meissner.gap_nm") * NM,
                              london_depth=lam)


@dataclass
class CoherenceSetup:
    """Everything needed to evaluate echo decays of spins at a given shift."""

    model: sp.SpectroscopyModel
    pulse: sp.PulseParams
    noise: dc.NoiseMap
    gamma_non: object
    c_t2: float

    def decay(self, index: int, f_delta: float, two_tau=None) -> dc.EchoCurve:
        return dc.aggregate_echo_decay(self.model, index, f_delta, self.pulse, self.noise,
                                       gamma_non=self.gamma_non, c_t2=self.c_t2, two_tau=two_tau)


def coherence_setup(p: Params, model: sp.SpectroscopyModel | None = None) -> CoherenceSetup:
    """Noise map on the spectroscopy grid (first row moved off the surface)."""
    model = model or spectroscopy_model(p)
    x, y = model.x, np.maximum(model.y, 0.5 * (model.y[1] - model.y[0]))
    method = p("bath.method")
    if method not in ("expected", "monte_carlo"):
        raise ConfigError("bath.method must be 'expected' or 'monte_carlo'", ["bath.method"])
    noise = dc.noise_map(surface_bath(p), x, y, method=method, cutoff=p("bath.cutoff"))
    b1, _ = pulses(p, model)
    return CoherenceSetup(model=model, pulse=b1, noise=noise, gamma_non=gamma_non_map(p, x, y),
                          c_t2=p("coherence.c_T2"))


def far_field_t2(p: Params, index: int, model: sp.SpectroscopyModel, c_t2: float | None = None) -> dc.EchoCurve:
    """Aggregate decay of spins far from the wire: uniform far-field sheet over the donor profile."""
    bath = surface_bath(p)
    far = dc.SurfaceBath(sigma1=bath.sigma1, sigma2=bath.sigma1, width=bath.width)
    y = model.y[model.y > 0]
    db = dc.noise_map(far, np.zeros(1), y, method="expected").db[0]
    weights = model.profile(y)
    ws, ts = [], []
    c = p("coherence.c_T2") if c_t2 is None else c_t2
    for branch, _, _ in line_members(index, model.system):
        b0 = model.resonance_field(index, branch, 0.0)
        g = float(effective_gamma(index, b0, model.system, branch))
        ws.append(weights * model.branch_sx(index, branch))
        ts.append(dc.t2_map(db, g, p("coherence.gamma_non_per_s"), c))
    return dc.aggregate_decay(np.concatenate(ws), np.concatenate(ts))
