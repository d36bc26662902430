"""Decoherence channels and synthetic Hahn-echo decays.

Covers instantaneous diffusion, magnetic noise from a layer of randomly
oriented surface dipoles, spatial T2 maps, depth-averaged echo decays and a
handful of closed-form scaling laws (flip-flops, charge noise, dynamical
decoupling, thermal photons).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import hbar, mu_0, physical_constants
from scipy.optimize import curve_fit

from .spin import DEFAULT_SYSTEM, SpinSystem

MU_B = physical_constants["Bohr magneton"][0]
ID_CONSTANT = np.pi * hbar * mu_0 / (9 * np.sqrt(3))
CM2 = 1e4  # m^-2 per cm^-2


class UndefinedNoiseError(ValueError):
    """Raised when a noise amplitude cannot be inferred (zero field sensitivity)."""


class EmptyRegionError(ValueError):
    """Raised when no spins sit at the requested strain shift."""


# ---------------------------------------------------------------------------
# closed forms


def id_rate(rho: float, gamma_eff: float, theta, gamma_res: float = 0.0,
            bandwidth: float | None = None, broadening: float | None = None):
    """Echo decay rate (1/s) including instantaneous diffusion.

    ``1/T2 = gamma_res + rho_eff * gamma_eff**2 * pi*hbar*mu0/(9*sqrt(3)) * sin(theta/2)**2``
    with ``rho_eff = rho * min(1, bandwidth / broadening)`` when both are given.
    """
    if rho < 0:
        raise ValueError("density must be non-negative")
    theta = np.asarray(theta, float)
    if np.any(theta < 0) or np.any(theta > np.pi + 1e-12):
        raise ValueError("theta must lie in [0, pi]")
    rho_eff = rho
    if bandwidth is not None and broadening is not None:
        rho_eff = rho * min(1.0, bandwidth / broadening)
    return gamma_res + rho_eff * gamma_eff**2 * ID_CONSTANT * np.sin(theta / 2) ** 2


def effective_noise(t2: float, gamma_eff: float) -> float:
    """Field noise (T) implied by a coherence time: 2 pi / (gamma_eff T2)."""
    if t2 <= 0:
        raise ValueError("T2 must be positive")
    if gamma_eff == 0:
        raise UndefinedNoiseError("gamma_eff = 0 (clock transition): magnetic noise is undefined")
    return 2 * np.pi / (abs(gamma_eff) * t2)


def flip_flop_limit(rho_um3: float) -> float:
    """T2 (s) limited by donor flip-flops, 1e3 / rho with rho in um^-3."""
    if rho_um3 <= 0:
        raise ValueError("density must be positive")
    return 1e3 / rho_um3


def charge_noise_t2(E_r: float, sqrt_S_E: float, system: SpinSystem = DEFAULT_SYSTEM) -> float:
    """T2 (s) from 1/f electric-field noise around a residual field ``E_r`` (V/m).

    ``sqrt_S_E`` is the field noise amplitude at 1 Hz in (V/m)/sqrt(Hz).
    Returns ``inf`` when the noise vanishes.
    """
    if E_r <= 0 or sqrt_S_E < 0:
        raise ValueError("E_r must be positive and sqrt_S_E non-negative")
    rate = 10 * abs(system.stark_eta) * system.hyperfine_A * E_r * sqrt_S_E
    return math.inf if rate == 0 else 2 * np.pi / rate


def dd_scaling(t2_single: float, n_pulses, alpha: float):
    """T2 under N refocusing pulses for 1/f^alpha noise."""
    n = np.asarray(n_pulses, float)
    if np.any(n < 1) or alpha <= 0:
        raise ValueError("need N >= 1 and alpha > 0")
    return t2_single * n ** (alpha / (1 + alpha))


def thermal_scaling(n_th):
    """(echo factor, T1 factor), both 1 / (2 n_th + 1)."""
    n = np.asarray(n_th, float)
    if np.any(n < 0):
        raise ValueError("photon number must be non-negative")
    f = 1.0 / (2 * n + 1)
    return f, f


# ---------------------------------------------------------------------------
# surface dipole bath


def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3 - 2 * t)


@dataclass(frozen=True)
class SurfaceBath:
    """Randomly oriented surface dipoles on the y = 0 plane.

    Densities in m^-2: ``sigma1`` far from the wire, ``sigma2`` below it,
    blended over ``width`` centred on the wire edges.
    """

    sigma1: float
    sigma2: float
    wire_width: float = 0.0
    width: float = 500e-9
    moment: float = MU_B
    realizations: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError("surface densities must be non-negative")
        if self.width <= 0:
            raise ValueError("interpolation width must be positive")
        if self.realizations < 1:
            raise ValueError("need at least one realization")

    def sigma(self, x):
        u = (np.abs(np.asarray(x, float)) - self.wire_width / 2) / self.width + 0.5
        return self.sigma2 + (self.sigma1 - self.sigma2) * smoothstep(u)

    @property
    def sigma_max(self) -> float:
        return max(self.sigma1, self.sigma2)


@dataclass(frozen=True)
class Dipoles:
    x: np.ndarray
    z: np.ndarray
    m: np.ndarray  # (n, 3) moment vectors (x, y, z) in J/T

    def __len__(self):
        return len(self.x)


def realization_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for one realization (Philox keyed by seed, index)."""
    return np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, index]))


def sample_bath(bath: SurfaceBath, x_range: tuple[float, float], z_half: float,
                realization: int = 0) -> Dipoles:
    """One Poisson realization over ``x_range`` x ``[-z_half, z_half]`` by thinning."""
    rng = realization_rng(bath.seed, realization)
    x0, x1 = x_range
    area = (x1 - x0) * 2 * z_half
    smax = bath.sigma_max
    n = rng.poisson(smax * area) if smax > 0 and area > 0 else 0
    x = rng.uniform(x0, x1, n)
    z = rng.uniform(-z_half, z_half, n)
    keep = rng.uniform(0.0, 1.0, n) * smax < bath.sigma(x) if n else np.zeros(0, bool)
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True) if n else 1.0
    order = np.argsort(x[keep], kind="stable")
    return Dipoles(x=x[keep][order], z=z[keep][order], m=bath.moment * v[keep][order])


def dipole_bz(dip: Dipoles, px: float, py: float) -> np.ndarray:
    """z-component of each dipole's field at (px, py, 0); y is depth."""
    rx = px - dip.x
    ry = np.full_like(rx, py)
    rz = -dip.z
    r2 = rx * rx + ry * ry + rz * rz
    r = np.sqrt(r2)
    mdotr = dip.m[:, 0] * rx + dip.m[:, 1] * ry + dip.m[:, 2] * rz
    return mu_0 / (4 * np.pi) * (3 * mdotr * rz / r2 - dip.m[:, 2]) / (r2 * r)


def orientation_avg_bz2(moment: float, rx, ry, rz):
    """<Bz^2> over uniformly random dipole orientations."""
    r2 = rx * rx + ry * ry + rz * rz
    return (mu_0 * moment / (4 * np.pi)) ** 2 * (1 + 3 * rz * rz / r2) / (3 * r2**3)


@dataclass(frozen=True)
class NoiseMap:
    x: np.ndarray
    y: np.ndarray
    db: np.ndarray  # rms z-field (T)
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)


def expected_noise(bath: SurfaceBath, x, y, n_quad: int = 4001) -> np.ndarray:
    """Ensemble mean of the Monte Carlo estimator (Campbell's theorem).

    Integrating the orientation-averaged ``Bz^2`` along the wire axis gives
    ``db^2 = (mu0 m / 4 pi)^2 * 3 pi / 16 * int sigma(x') / a^5 dx'`` with
    ``a^2 = (x - x')^2 + y^2``; the remaining integral is done on a
    substitution grid that resolves the 1/a^5 kernel at every depth.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if np.any(y <= 0):
        raise ValueError("depths must be positive")
    pref = (mu_0 * bath.moment / (4 * np.pi)) ** 2 * 3 * np.pi / 16
    # u = atan((x' - x) / y) maps the line onto (-pi/2, pi/2); dx'/a^5 = cos^3(u) du / y^4
    u = np.linspace(-np.pi / 2, np.pi / 2, n_quad)[1:-1]
    wts = np.full(u.shape, u[1] - u[0])
    cos3 = np.cos(u) ** 3
    out = np.empty((len(x), len(y)))
    for j, yy in enumerate(y):
        xp = x[:, None] + yy * np.tan(u)[None, :]
        out[:, j] = (bath.sigma(xp) * cos3 * wts).sum(axis=1) / yy**4
    return np.sqrt(pref * out)


def noise_map(bath: SurfaceBath, x, y, method: str = "monte_carlo", cutoff: float = 10.0,
              realizations: int | None = None) -> NoiseMap:
    """rms dipole-bath field along the wire axis on the (x, y) grid.

    ``method="monte_carlo"`` averages ``sum Bz^2`` over Poisson realizations,
    counting only dipoles within ``cutoff * y`` of each point.
    ``method="expected"`` returns the exact ensemble mean of that estimator
    without the cutoff.
    """
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    if np.any(y <= 0):
        raise ValueError("depths must be positive")
    if method == "expected":
        return NoiseMap(x=x, y=y, db=expected_noise(bath, x, y), meta={"method": method})
    if method != "monte_carlo":
        raise ValueError("method must be 'monte_carlo' or 'expected'")
    n_real = realizations or bath.realizations
    rmax = cutoff * y.max()
    x_range = (x.min() - rmax, x.max() + rmax)
    acc = np.zeros((n_real, len(x), len(y)))
    for r in range(n_real):
        dip = sample_bath(bath, x_range, rmax, realization=r)
        for j, yy in enumerate(y):
            R = cutoff * yy
            for i, xx in enumerate(x):
                lo, hi = np.searchsorted(dip.x, [xx - R, xx + R])
                if hi <= lo:
                    continue
                sub = Dipoles(dip.x[lo:hi], dip.z[lo:hi], dip.m[lo:hi])
                near = (sub.x - xx) ** 2 + sub.z**2 <= R * R - yy * yy
                if not near.any():
                    continue
                bz = dipole_bz(Dipoles(sub.x[near], sub.z[near], sub.m[near]), xx, yy)
                acc[r, i, j] = np.dot(bz, bz)
    mean = acc.mean(axis=0)
    db = np.sqrt(mean)
    se2 = acc.std(axis=0, ddof=1) / np.sqrt(n_real) if n_real > 1 else np.full_like(mean, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        se = np.where(db > 0, se2 / (2 * db), 0.0)
    return NoiseMap(x=x, y=y, db=db, stderr=se,
                    meta={"method": method, "realizations": n_real, "seed": bath.seed, "cutoff": cutoff})


def t2_map(noise: NoiseMap | np.ndarray, gamma_eff: float, gamma_non=5.0, c_t2: float = 1.0) -> np.ndarray:
    """Per-point Gaussian-decay T2 (s): ``1/T2 = gamma_non + |gamma_eff| db / (2 pi c_t2)``.

    ``gamma_non`` may be a scalar or a map (e.g. the charge-noise rate).
    """
    db = noise.db if isinstance(noise, NoiseMap) else np.asarray(noise, float)
    g = np.asarray(gamma_non, float)
    if np.any(g < 0) or c_t2 <= 0:
        raise ValueError("gamma_non must be >= 0 and c_t2 positive")
    rate = g + abs(gamma_eff) * db / (2 * np.pi * c_t2)
    with np.errstate(divide="ignore"):
        return 1.0 / rate


def strip_field_shape(x, y, wire_width: float, y_ref: float = 75e-9) -> np.ndarray:
    """Field magnitude of a uniformly charged surface strip, 1 at (0, y_ref).

    Stands in for the wire-over-ground electrostatics: nearly uniform below
    the strip and peaked at its edges.
    """
    def mag(X, Y):
        a, b = X + wire_width / 2, X - wire_width / 2
        ex = 0.5 * np.log((a * a + Y * Y) / (b * b + Y * Y))
        ey = np.arctan2(a, Y) - np.arctan2(b, Y)
        return np.hypot(ex, ey)
    X, Y = np.meshgrid(np.asarray(x, float), np.asarray(y, float), indexing="ij")
    return mag(X, Y) / mag(np.zeros(1), np.full(1, y_ref))[0]


def charge_noise_rate_map(x, y, wire_width: float, E_r: float, sqrt_S_V: float,
                          field_per_volt: float, system: SpinSystem = DEFAULT_SYSTEM) -> np.ndarray:
    """Non-magnetic decay rate map (1/s) from gate-voltage noise ``sqrt_S_V`` (V/sqrt(Hz))."""
    s_e = field_per_volt * sqrt_S_V * strip_field_shape(x, y, wire_width)
    rate_per = 10 * abs(system.stark_eta) * system.hyperfine_A * E_r / (2 * np.pi)
    return rate_per * s_e


# ---------------------------------------------------------------------------
# echo decays


@dataclass(frozen=True)
class EchoCurve:
    two_tau: np.ndarray
    amplitude: np.ndarray
    t2: float
    model: str
    residual: float
    t2_exponential: float
    t2_gaussian: float
    residual_exponential: float
    residual_gaussian: float


def _exp(t, a, T):
    return a * np.exp(-t / T)


def _gauss(t, a, T):
    return a * np.exp(-((t / T) ** 2))


def fit_decay(two_tau: np.ndarray, amp: np.ndarray, t2_guess: float):
    """Least-squares exponential and Gaussian fits; returns both (T2, RSS) pairs."""
    out = {}
    for name, f in (("exponential", _exp), ("gaussian", _gauss)):
        p, _ = curve_fit(f, two_tau, amp, p0=[amp[0], t2_guess],
                         bounds=([0, 1e-12], [np.inf, np.inf]), maxfev=20000)
        out[name] = (float(p[1]), float(np.sum((f(two_tau, *p) - amp) ** 2)))
    return out


def decay_curve(weights: np.ndarray, t2: np.ndarray, two_tau: np.ndarray) -> np.ndarray:
    """Sum of per-cell Gaussian decays, normalised to 1 at zero delay."""
    w = np.asarray(weights, float).ravel()
    T = np.asarray(t2, float).ravel()
    total = w.sum()
    if total == 0:
        raise EmptyRegionError("no spins at this shift")
    amp = np.exp(-((np.asarray(two_tau)[:, None] / T[None, :]) ** 2)) @ w
    return amp / total


def aggregate_decay(weights: np.ndarray, t2: np.ndarray, two_tau: np.ndarray | None = None,
                    n_points: int = 200, iterations: int = 3) -> EchoCurve:
    """Aggregate echo decay of a weighted T2 population and fit it.

    Without an explicit delay grid, ``2 tau`` spans [0.1, 3] times the
    current T2 estimate and is refined from the fitted exponential T2.
    """
    w = np.asarray(weights, float).ravel()
    T = np.asarray(t2, float).ravel()
    sel = (w != 0) & np.isfinite(T)
    if not sel.any():
        raise EmptyRegionError("no spins at this shift")
    w, T = w[sel], T[sel]
    est = float(np.sum(np.abs(w) * T) / np.sum(np.abs(w)))
    fixed = two_tau is not None
    for _ in range(1 if fixed else iterations):
        grid = np.asarray(two_tau, float) if fixed else np.linspace(0.1 * est, 3 * est, n_points)
        amp = decay_curve(w, T, grid)
        fits = fit_decay(grid, amp, est)
        est = fits["exponential"][0]
    (te, re), (tg, rg) = fits["exponential"], fits["gaussian"]
    best = "exponential" if re < rg else "gaussian"
    return EchoCurve(two_tau=grid, amplitude=amp, t2=te if best == "exponential" else tg, model=best,
                     residual=min(re, rg), t2_exponential=te, t2_gaussian=tg,
                     residual_exponential=re, residual_gaussian=rg)


def aggregate_echo_decay(model, index: int, f_delta: float, pulse, noise: NoiseMap | np.ndarray,
                         gamma_non=5.0, c_t2: float = 1.0, two_tau=None) -> EchoCurve:
    """Echo decay of line ``index`` for spins whose shift lies within the band around ``f_delta``.

    ``model`` is a :class:`~donorsim.spectroscopy.SpectroscopyModel`; every
    branch of the line contributes with its own coupling and gamma_eff,
    evaluated at the field where the branch meets the band centre.
    """
    from .spin import effective_gamma, line_members

    band = np.abs(model.f_delta - f_delta) <= model.half_band
    if not band.any():
        raise EmptyRegionError("no spins at this shift")
    db = noise.db if isinstance(noise, NoiseMap) else np.asarray(noise, float)
    ws, ts = [], []
    for branch, _, _ in line_members(index, model.system):
        b0 = model.resonance_field(index, branch, f_delta)
        g = float(effective_gamma(index, b0, model.system, branch))
        w = model.cell_weights(model.branch_sx(index, branch), pulse)
        ws.append(w[band])
        ts.append(t2_map(db, g, gamma_non, c_t2)[band])
    w = np.concatenate(ws)
    if np.sum(w) == 0:
        raise EmptyRegionError("no spins at this shift")
    return aggregate_decay(w, np.concatenate(ts), two_tau)
