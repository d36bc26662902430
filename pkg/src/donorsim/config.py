"""Scenario configuration: defaults, presets, TOML loading and a parameter registry.

Keys carry their unit as a suffix (``width_um``, ``T_dep_K``) and are
converted to SI by the consumers. Every key read through :class:`Params`
is recorded so that run manifests list exactly the parameters used.
"""

from __future__ import annotations

import copy
import difflib
import sys
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid scenario configuration; ``paths`` lists offending keys."""

    def __init__(self, message: str, paths: list[str] | None = None):
        super().__init__(message)
        self.paths = paths or []


DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "spin": {
        "hyperfine_A_GHz": 1.475,
        "gamma_e_GHz_per_T": 28.0,
        "gamma_n_MHz_per_T": 7.0,
        "strain_K": 19.1,
        "strain_L": 9720.0,
        "stark_eta_um2_per_V2": -0.26e-3,
    },
    "field": {"B0_mT": 1.0, "window_mT": [0.1, 100.0]},
    "resonator": {
        "f0_GHz": 7.338,
        "Z0_ohm": 40.0,
        "kappa_i_per_s": 4.6e5,
        "kappa_c_per_s": 4.6e5,
        "width_um": 5.0,
        "thickness_nm": 50.0,
        "length_um": 700.0,
        "london_depth_nm": 50.0,
        "current_mode": "strip",
    },
    "materials": {
        "substrate_alpha_per_K": 0.7e-6,
        "substrate_C11_GPa": 166.0,
        "substrate_C12_GPa": 64.0,
        "substrate_C44_GPa": 80.0,
        "wire_alpha_per_K": 14.3e-6,
        "wire_model": "isotropic",
        "wire_E_GPa": 70.0,
        "wire_nu": 0.33,
        "wire_C11_GPa": 103.0,
        "wire_C12_GPa": 51.0,
        "wire_C44_GPa": 26.0,
    },
    "strain": {
        "T_dep_K": 300.0,
        "T_op_K": 0.015,
        "wire_axis": "100",
        "shift_frame": "solver",
        "domain_half_width_w": 10.0,
        "domain_depth_w": 5.0,
        "mesh_h_min_nm": 10.0,
        "mesh_fine_radius_nm": 200.0,
        "mesh_growth": 0.15,
    },
    "grid": {"x_extent_w": 3.0, "dx_nm": 10.0, "y_max_nm": 300.0, "dy_nm": 5.0},
    "profile": {"center_nm": 75.0, "sigma_nm": 25.0, "peak_per_um3": 4e4,
                "depth_nm": [], "density_per_um3": []},
    "pulse": {"t_p_us": 2.0, "t_rep_s": 10.0, "beta1": "auto", "beta_ratio": 3.0,
              "reference_line": 1, "reference_depth_nm": 75.0},
    "spectrum": {"B_min_mT": 0.9, "B_max_mT": 2.4, "B_step_uT": 2.0, "rel_width": 0.2,
                 "detection": "magnitude", "schottky": "none", "beta": "beta1",
                 "weights": {"1": 1.0}},
    "rabi": {"line": 1, "B0_mT": 1.36, "beta_max": 3e6, "n_beta": 61},
    "bath": {"sigma1_per_cm2": 4e12, "sigma2_per_cm2": 1e12, "width_nm": 500.0,
             "realizations": 200, "method": "expected", "cutoff": 10.0},
    "coherence": {"gamma_non_per_s": 5.0, "c_T2": 1.0, "line": 1, "f_delta_MHz": -2.5,
                  "noise_dx_nm": 50.0, "charge_noise": False},
    "charge": {"E_r_V_per_m": 1e5, "sqrt_S_V_mV": 1.5, "field_per_volt_per_m": 5.8e3},
    "id": {"rho_per_cm3": 5e14, "gamma_ratios": [0.9, 0.3], "gamma_res_per_s": 0.0,
           "n_theta": 11, "bandwidth_MHz": 0.0, "broadening_MHz": 1.0},
    "dd": {"T2_single_ms": 7.5, "alpha": 1.0, "N": [1, 2, 4, 8, 16, 32]},
    "thermal": {"n_th": [0.0, 0.1, 0.25, 0.5, 1.0, 2.0]},
    "meissner": {"thickness_nm": 50.0, "gap_nm": 5.0, "london_depth_nm": [50.0, 100.0, 200.0],
                 "sigma_per_cm2": 1e12, "depths_nm": [50.0, 75.0, 100.0, 150.0, 200.0, 300.0]},
}

# Device presets: resonator geometry and the deposition temperature fitted per device.
# The inductor runs along [011]; the strain shift is evaluated on the cubic axes.
_DEVICE_COMMON = {"strain": {"wire_axis": "011", "shift_frame": "crystal"},
                  "coherence": {"c_T2": 2.5}}

PRESETS: dict[str, dict[str, Any]] = {
    "res1": {
        "resonator": {"f0_GHz": 7.338, "Z0_ohm": 40.0, "kappa_i_per_s": 4.6e5, "kappa_c_per_s": 4.6e5,
                      "width_um": 5.0, "length_um": 700.0},
        "strain": {"T_dep_K": 300.0},
        "pulse": {"t_rep_s": 10.0},
        "spectrum": {"B_min_mT": 0.9, "B_max_mT": 2.4, "weights": {"1": 1.0, "2": 1.2}},
        "rabi": {"B0_mT": 1.37},
    },
    "res2": {
        "resonator": {"f0_GHz": 7.402, "Z0_ohm": 40.0, "kappa_i_per_s": 4.6e5, "kappa_c_per_s": 4.6e5,
                      "width_um": 2.0, "length_um": 450.0},
        "strain": {"T_dep_K": 270.0},
        "pulse": {"t_rep_s": 2.0, "reference_line": 10},
        "grid": {"dx_nm": 5.0},
        "spectrum": {"B_min_mT": 0.3, "B_max_mT": 3.0,
                     "weights": {"10": 1.0, "9": 1.2, "8": 1.5, "7": 1.8}},
        "rabi": {"line": 10, "B0_mT": 1.2},
    },
    "res3": {
        "resonator": {"f0_GHz": 6.945, "Z0_ohm": 45.0, "kappa_i_per_s": 5.5e5, "kappa_c_per_s": 1.5e5,
                      "width_um": 1.0, "length_um": 450.0},
        "strain": {"T_dep_K": 250.0},
        "pulse": {"t_rep_s": 0.5},
        "grid": {"dx_nm": 5.0, "x_extent_w": 6.0},
        "spectrum": {"B_min_mT": 15.0, "B_max_mT": 18.2, "weights": {"1": 1.0}},
        "rabi": {"B0_mT": 16.6},
    },
}


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "weights":
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _flatten(d: dict, prefix: str = "") -> dict[str, Any]:
    out = {}
    for k, v in d.items():
        path = f"{prefix}{k}"
        if isinstance(v, dict) and k != "weights":
            out.update(_flatten(v, path + "."))
        else:
            out[path] = v
    return out


def validate(user: dict, schema: dict = DEFAULTS) -> None:
    """Reject unknown keys and type mismatches, listing every offending path."""
    known = _flatten(schema)
    sections = {p.rsplit(".", 1)[0] for p in known if "." in p}
    bad, msgs = [], []
    for path, value in _flatten(user).items():
        if path in ("preset",):
            continue
        if path not in known:
            if path in sections:
                continue
            hint = difflib.get_close_matches(path, list(known), n=1)
            bad.append(path)
            msgs.append(f"unknown key {path!r}" + (f" (did you mean {hint[0]!r}?)" if hint else ""))
            continue
        ref = known[path]
        if isinstance(ref, bool) != isinstance(value, bool):
            bad.append(path)
            msgs.append(f"{path}: expected {type(ref).__name__}, got {type(value).__name__}")
        elif isinstance(ref, (int, float)) and not isinstance(ref, bool):
            if not isinstance(value, (int, float)) and not (path.endswith("beta1") and isinstance(value, str)):
                bad.append(path)
                msgs.append(f"{path}: expected a number, got {value!r}")
        elif isinstance(ref, list) and not isinstance(value, list):
            bad.append(path)
            msgs.append(f"{path}: expected a list, got {value!r}")
    if isinstance(user.get("spectrum", {}).get("weights"), dict):
        for k, v in user["spectrum"]["weights"].items():
            if not str(k).isdigit() or not isinstance(v, (int, float)):
                bad.append(f"spectrum.weights.{k}")
                msgs.append(f"spectrum.weights.{k}: expected line index -> number")
    if bad:
        raise ConfigError("; ".join(msgs), bad)


def parse_override(text: str) -> tuple[list[str], Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value", [text])
    key, raw = text.split("=", 1)
    key = key.strip()
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key.split("."), value


def load_config(path: str | None = None, preset: str | None = None,
                overrides: list[str] | None = None, seed: int | None = None) -> "Params":
    """Resolve defaults < preset < config file < overrides < seed flag."""
    user: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                user = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}", [str(path)]) from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}", [str(path)]) from exc
    name = preset or user.get("preset")
    for text in overrides or []:
        keys, value = parse_override(text)
        node = user
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value
    validate(user)
    cfg = copy.deepcopy(DEFAULTS)
    if name not in (None, "custom"):
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}", ["preset"])
        cfg = deep_merge(cfg, _DEVICE_COMMON)
        cfg = deep_merge(cfg, PRESETS[name])
    cfg = deep_merge(cfg, {k: v for k, v in user.items() if k != "preset"})
    if seed is not None:
        cfg["seed"] = seed
    return Params(cfg, preset=name or "custom")


class Params:
    """Read-only view of a resolved configuration that records every access."""

    def __init__(self, data: dict, preset: str = "custom"):
        self._data = data
        self.preset = preset
        self.accessed: dict[str, Any] = {}

    def __call__(self, path: str):
        node: Any = self._data
        for k in path.split("."):
            if not isinstance(node, dict) or k not in node:
                raise ConfigError(f"missing parameter {path!r}", [path])
            node = node[k]
        self.accessed[path] = copy.deepcopy(node)
        return node

    @property
    def seed(self) -> int:
        return int(self("seed"))

    @property
    def data(self) -> dict:
        return copy.deepcopy(self._data)

    def manifest_params(self) -> dict[str, Any]:
        return dict(sorted(self.accessed.items()))
