"""Command-line front end: ``donorsim <command> [--preset NAME] [--config FILE] ...``.

Every command writes one or more CSV files plus ``manifest.json`` into the
output directory. Exit codes: 0 success, 2 configuration error, 3 numerical
failure; on failure a JSON error object goes to stderr and ``error.json``.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
import traceback
from pathlib import Path

THREADS_ENV = "DONORSIM_THREADS"
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class Run:
    """Collects outputs and results of one command invocation."""

    def __init__(self, out: Path, params, command: str):
        self.out = out
        self.params = params
        self.command = command
        self.files: list[Path] = []
        self.results: dict = {}

    def csv(self, name: str, columns, comments=None):
        from .grids import write_csv

        self.files.append(write_csv(self.out / name, columns, [f"donorsim {self.command}"] + (comments or [])))

    def grid(self, name: str, x, y, fields):
        from .grids import write_grid

        self.files.append(write_grid(self.out / name, x, y, fields))


# ---------------------------------------------------------------------------
# commands


def cmd_levels(run: Run):
    import numpy as np

    from . import scenario as sc
    from .spin import energy_levels

    p = run.params
    system = sc.spin_system(p)
    B0 = p("field.B0_mT") * 1e-3
    lv = energy_levels(system, B0)
    F = np.array([lab[0] for lab in lv.labels])
    m = np.array([lab[1] for lab in lv.labels])
    run.csv("levels.csv", {"level": (np.arange(len(F)), "1"), "F": (F, "1"), "m": (m, "1"),
                           "energy": (lv.eigenvalues / (2 * np.pi * 1e9), "GHz")},
            [f"B0 = {B0 * 1e3:.9g} mT"])
    run.results["zero_field_splitting_GHz"] = system.zero_field_splitting / (2 * np.pi * 1e9)


def _transition_table(system, B0):
    import numpy as np

    from .spin import energy_levels, list_transitions

    ts = list_transitions(energy_levels(system, B0))
    return {
        "line": (np.array([t.index for t in ts]), "1"),
        "branch_up": (np.array([t.branch == "up" for t in ts], float), "1"),
        "m_low": (np.array([t.lower[1] for t in ts]), "1"),
        "m_high": (np.array([t.upper[1] for t in ts]), "1"),
        "frequency": (np.array([t.frequency for t in ts]) / (2 * np.pi * 1e9), "GHz"),
        "sx": (np.array([t.sx_element for t in ts]), "1"),
        "gamma_eff": (np.array([t.gamma_eff for t in ts]) / (2 * np.pi * 1e6), "MHz/T"),
    }


def cmd_transitions(run: Run):
    from . import scenario as sc

    p = run.params
    B0 = p("field.B0_mT") * 1e-3
    run.csv("transitions.csv", _transition_table(sc.spin_system(p), B0),
            [f"B0 = {B0 * 1e3:.9g} mT", "branch_up: 1 for m_high = m_low + 1"])


def cmd_clock(run: Run):
    import numpy as np

    from . import scenario as sc
    from .spin import dominant_branch, find_clock_transition, line_members

    p = run.params
    system = sc.spin_system(p)
    lo, hi = (v * 1e-3 for v in p("field.window_mT"))
    rows = []
    for i in range(1, system.n_lines + 1):
        for branch, _, _ in line_members(i, system):
            ct = find_clock_transition(i, system, branch=branch, window=(lo, hi))
            if ct is not None:
                rows.append(ct)
    if not rows:
        raise ArithmeticError("no clock transition inside the field window")
    run.csv("clock.csv", {
        "line": (np.array([c.index for c in rows]), "1"),
        "branch_up": (np.array([c.branch == "up" for c in rows], float), "1"),
        "B0": (np.array([c.field_B0 for c in rows]) * 1e3, "mT"),
        "frequency": (np.array([c.frequency for c in rows]) / (2 * np.pi * 1e9), "GHz"),
        "gamma_eff": (np.array([c.gamma_eff for c in rows]) / (2 * np.pi * 1e6), "MHz/T"),
    })
    main_rows = [c for c in rows if c.branch == dominant_branch(c.index, system)] or rows
    first = min(main_rows, key=lambda c: c.field_B0)
    run.results["B0_CT_mT"] = first.field_B0 * 1e3
    run.results["clock_line"] = first.index


def cmd_strain(run: Run):
    import numpy as np

    from . import scenario as sc
    from . import strain as st

    p = run.params
    field = sc.strain_field(p)
    x, y = sc.model_grid(p)
    f = field.resample(x, y)
    smap = sc.shift_on_grid(p, field)
    fields = {"exx": f.exx, "eyy": f.eyy, "ezz": f.ezz, "exy": f.exy, "hydrostatic": st.hydrostatic(f),
              "f_delta": smap.f_delta}
    units = {k: "1" for k in fields} | {"f_delta": "Hz"}
    from .grids import grid_columns

    run.csv("strain.csv", grid_columns(x, y, {k: (v, units[k]) for k, v in fields.items()}))
    run.grid("strain.grid", x, y, fields)
    k = int(np.argmin(np.abs(y - 75e-9)))
    run.results["hydrostatic_center_75nm"] = float(st.hydrostatic(f)[np.argmin(np.abs(x)), k])
    run.results["f_delta_center_75nm_MHz"] = float(smap.f_delta[np.argmin(np.abs(x)), k] / 1e6)
    run.results["solver_residual"] = float(field.meta["residual"])


def cmd_spectrum(run: Run):
    from . import scenario as sc
    from . import spectroscopy as spc

    p = run.params
    model = sc.spectroscopy_model(p)
    b1, b2 = sc.pulses(p, model)
    which = p("spectrum.beta")
    if which not in ("beta1", "beta2"):
        from .config import ConfigError

        raise ConfigError("spectrum.beta must be 'beta1' or 'beta2'", ["spectrum.beta"])
    pulse = b1 if which == "beta1" else b2
    B0 = sc.field_sweep(p)
    detection = p("spectrum.detection")
    if detection not in ("magnitude", "in_phase"):
        from .config import ConfigError

        raise ConfigError("spectrum.detection must be 'magnitude' or 'in_phase'", ["spectrum.detection"])
    rel = p("spectrum.rel_width")
    spec = model.total_spectrum(B0, sc.line_weights(p), pulse, rel_width=rel or None,
                                magnitude=detection == "magnitude")
    cols = {"B0": (B0 * 1e3, "mT"), "total": (spec.total, "arb")}
    for i, c in spec.components.items():
        cols[f"line_{i}"] = (c, "arb")
    run.csv("spectrum.csv", cols, [f"beta = {pulse.beta:.9g} s^-1/2", f"rel_width = {rel:.9g}"])
    run.results["beta_s^-1/2"] = pulse.beta
    run.results["peaks_mT"] = [float(b * 1e3) for b in spc.find_peaks(B0, spec.total)]


def cmd_rabi(run: Run):
    import numpy as np

    from . import scenario as sc

    p = run.params
    model = sc.spectroscopy_model(p)
    b1, _ = sc.pulses(p, model)
    betas = np.linspace(0, p("rabi.beta_max"), int(p("rabi.n_beta")))
    amp = model.rabi_response(int(p("rabi.line")), p("rabi.B0_mT") * 1e-3, betas, b1)
    run.csv("rabi.csv", {"beta": (betas, "s^-1/2"), "echo": (amp, "arb")})
    run.results["beta1_s^-1/2"] = b1.beta
    run.results["beta_at_max"] = float(betas[int(np.argmax(amp))])


def cmd_coherence_map(run: Run):
    import numpy as np

    from . import decoherence as dc
    from . import scenario as sc
    from .grids import grid_columns
    from .spin import effective_gamma, line_members

    p = run.params
    model = sc.spectroscopy_model(p)
    x0, y0 = model.x, model.y
    step = max(1, int(round(p("coherence.noise_dx_nm") * 1e-9 / (x0[1] - x0[0]))))
    x, y = x0[::step], y0[y0 > 0]
    bath = sc.surface_bath(p)
    method = p("bath.method")
    noise = dc.noise_map(bath, x, y, method=method, cutoff=p("bath.cutoff"))
    line = int(p("coherence.line"))
    f_d = p("coherence.f_delta_MHz") * 1e6
    branch_fields = [(b, model.resonance_field(line, b, f_d)) for b, _, _ in line_members(line, model.system)]
    branch, b0 = max(branch_fields, key=lambda t: model.branch_sx(line, t[0]))
    g = float(effective_gamma(line, b0, model.system, branch))
    t2 = dc.t2_map(noise, g, sc.gamma_non_map(p, x, y), p("coherence.c_T2"))
    fields = {"db": (noise.db * 1e9, "nT"), "T2": (t2 * 1e3, "ms")}
    if noise.stderr is not None:
        fields["db_stderr"] = (noise.stderr * 1e9, "nT")
    run.csv("coherence_map.csv", grid_columns(x, y, fields),
            [f"line {line} ({branch}), B0 = {b0 * 1e3:.9g} mT, gamma_eff = {g / (2 * np.pi * 1e6):.9g} MHz/T"])
    run.grid("coherence_map.grid", x, y, {"db": noise.db, "T2": t2})
    run.results["method"] = method
    run.results["gamma_eff_MHz_per_T"] = g / (2 * np.pi * 1e6)


def cmd_decay(run: Run):
    from . import scenario as sc

    p = run.params
    setup = sc.coherence_setup(p)
    line = int(p("coherence.line"))
    curve = setup.decay(line, p("coherence.f_delta_MHz") * 1e6)
    run.csv("decay.csv", {"two_tau": (curve.two_tau * 1e3, "ms"), "echo": (curve.amplitude, "1")})
    run.results.update({
        "model": curve.model, "T2_ms": curve.t2 * 1e3,
        "T2_exponential_ms": curve.t2_exponential * 1e3, "T2_gaussian_ms": curve.t2_gaussian * 1e3,
        "residual_exponential": curve.residual_exponential, "residual_gaussian": curve.residual_gaussian,
    })


def cmd_id_scan(run: Run):
    import numpy as np

    from . import decoherence as dc
    from . import scenario as sc

    p = run.params
    system = sc.spin_system(p)
    rho = p("id.rho_per_cm3") * 1e6
    theta = np.linspace(0, np.pi, int(p("id.n_theta")))
    bw, br = p("id.bandwidth_MHz"), p("id.broadening_MHz")
    kw = {"bandwidth": bw * 1e6, "broadening": br * 1e6} if bw > 0 else {}
    cols = {"sin2_half_theta": (np.sin(theta / 2) ** 2, "1")}
    for r in p("id.gamma_ratios"):
        rate = dc.id_rate(rho, r * system.gamma_e, theta, p("id.gamma_res_per_s"), **kw)
        cols[f"rate_g{r:g}"] = (rate, "1/s")
    run.csv("id_scan.csv", cols)


def cmd_dd(run: Run):
    import numpy as np

    from . import decoherence as dc

    p = run.params
    n = np.asarray(p("dd.N"), float)
    t2 = dc.dd_scaling(p("dd.T2_single_ms") * 1e-3, n, p("dd.alpha"))
    run.csv("dd.csv", {"N": (n, "1"), "T2": (t2 * 1e3, "ms")})


def cmd_thermal(run: Run):
    import numpy as np

    from . import decoherence as dc

    p = run.params
    n = np.asarray(p("thermal.n_th"), float)
    echo, t1 = dc.thermal_scaling(n)
    run.csv("thermal.csv", {"n_th": (n, "1"), "echo_factor": (echo, "1"), "T1_factor": (t1, "1")})


def cmd_meissner(run: Run):
    import numpy as np

    from . import decoherence as dc
    from . import meissner as ms
    from . import scenario as sc

    p = run.params
    depths = np.asarray(p("meissner.depths_nm"), float) * 1e-9
    sigma = p("meissner.sigma_per_cm2") * dc.CM2
    cols = {"y": (depths * 1e9, "nm")}
    free = None
    for lam in p("meissner.london_depth_nm"):
        res = ms.averaged_noise_vs_depth(sc.screening(p, lam), sigma, depths)
        free = res["db_free"]
        cols[f"db_lambda{lam:g}"] = (res["db"] * 1e9, "nT")
        cols[f"enhancement_lambda{lam:g}"] = (res["enhancement"], "1")
    if free is not None:
        cols["db_free"] = (free * 1e9, "nT")
    run.csv("meissner.csv", cols)


COMMANDS = {
    "levels": (cmd_levels, "energy levels at field.B0_mT"),
    "transitions": (cmd_transitions, "EPR transitions, S_x elements and gamma_eff at field.B0_mT"),
    "clock": (cmd_clock, "clock transitions inside field.window_mT"),
    "strain": (cmd_strain, "thermoelastic strain and shift map"),
    "spectrum": (cmd_spectrum, "echo-detected field sweep"),
    "rabi": (cmd_rabi, "echo amplitude versus pulse amplitude"),
    "coherence-map": (cmd_coherence_map, "surface-noise and T2 maps"),
    "decay": (cmd_decay, "aggregate echo decay at coherence.f_delta_MHz"),
    "id-scan": (cmd_id_scan, "instantaneous-diffusion rate versus rotation angle"),
    "dd": (cmd_dd, "dynamical-decoupling T2 scaling"),
    "thermal": (cmd_thermal, "thermal-photon scaling factors"),
    "meissner": (cmd_meissner, "screened surface noise versus depth"),
}


# ---------------------------------------------------------------------------
# plumbing


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="donorsim", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario TOML file")
    common.add_argument("--preset", help="named preset (res1, res2, res3, custom)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="set a dotted config key, value in TOML syntax; repeatable")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, helptext) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=helptext)
    return ap


def _threads(arg: int | None) -> int:
    n = arg if arg is not None else int(os.environ.get(THREADS_ENV, "1") or 1)
    if n < 1:
        raise ValueError("thread count must be >= 1")
    for var in _THREAD_VARS:
        os.environ.setdefault(var, str(n))
    return n


def _versions() -> dict:
    import numpy
    import scipy

    from . import __version__

    return {"donorsim": __version__, "python": platform.python_version(), "numpy": numpy.__version__,
            "scipy": scipy.__version__}


def _fail(out: Path | None, code: int, kind: str, exc: BaseException, paths=None) -> int:
    err = {"error": kind, "message": str(exc), "exit_code": code}
    if paths:
        err["paths"] = list(paths)
    if code == EXIT_NUMERIC:
        err["exception"] = type(exc).__name__
        err["traceback"] = traceback.format_exception_only(type(exc), exc)[-1].strip()
    text = json.dumps(err, indent=2)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    t0 = time.perf_counter()
    from .config import ConfigError, load_config

    try:
        threads = _threads(args.threads)
        params = load_config(args.config, args.preset, args.override, args.seed)
    except ConfigError as exc:
        return _fail(out, EXIT_CONFIG, "config", exc, exc.paths)
    except ValueError as exc:
        return _fail(out, EXIT_CONFIG, "config", exc)

    from numpy.linalg import LinAlgError

    from .decoherence import EmptyRegionError, UndefinedNoiseError
    from .meissner import QuadratureError
    from .strain import StrainSolverError

    numeric = (StrainSolverError, QuadratureError, EmptyRegionError, UndefinedNoiseError, ArithmeticError,
               ValueError, RuntimeError, LinAlgError)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        return _fail(None, EXIT_CONFIG, "output", exc, [str(out)])
    run = Run(out, params, args.command)
    try:
        params.seed  # always recorded
        COMMANDS[args.command][0](run)
    except ConfigError as exc:
        return _fail(out, EXIT_CONFIG, "config", exc, exc.paths)
    except numeric as exc:
        return _fail(out, EXIT_NUMERIC, "numerical", exc)

    from .grids import sha256

    manifest = {
        "command": args.command,
        "preset": params.preset,
        "seed": params.seed,
        "config_file": args.config,
        "overrides": args.override,
        "threads": threads,
        "parameters": params.manifest_params(),
        "results": run.results,
        "outputs": {f.name: sha256(f) for f in run.files},
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - t0,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=float) + "\n")
    err = out / "error.json"
    if err.exists():
        err.unlink()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
