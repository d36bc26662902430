"""Echo-detected field-swept spectra of strained donors under a resonator wire.

Each grid cell holds donors with a local strain shift ``f_delta``. At field
``B0`` a cell contributes to line ``i`` when its shift matches the detuning
``(omega0 - omega_i(B0)) / 2 pi`` within the resonator linewidth. The
contribution of a cell is its donor number times ``g0 * (1 - exp(-Gamma_P
t_rep)) * sin(theta)**3``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .device import CouplingMap, DonorProfile, ResonatorParams, rabi_angle
from .spin import (
    DEFAULT_SYSTEM,
    TWO_PI,
    SpinSystem,
    effective_gamma,
    line_members,
    sx_element,
    transition_frequency,
)

logger = logging.getLogger(__name__)

SCHOTTKY_SCENARIOS = {"none": 0.0, "0.3eV": 60e-9, "0.7eV": 100e-9}


class ConvolutionWarning(UserWarning):
    """Kernel narrower than the field step; convolution skipped."""


@dataclass(frozen=True)
class PulseParams:
    """Square-pulse Hahn echo settings.

    beta: amplitude of the refocusing pulse in s^-1/2; t_p: pulse length (s);
    t_rep: repetition time (s); bandwidth: excitation bandwidth (rad/s).
    """

    beta: float
    t_p: float = 2e-6
    t_rep: float = 10.0
    bandwidth: float | None = None

    def __post_init__(self):
        if self.beta < 0 or self.t_p <= 0 or self.t_rep <= 0:
            raise ValueError("pulse amplitude must be >= 0 and durations positive")
        if self.t_rep < self.t_p:
            raise ValueError("repetition time must not be shorter than the pulse")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")


@dataclass(frozen=True)
class Spectrum:
    B0: np.ndarray
    total: np.ndarray
    components: dict[int, np.ndarray]
    meta: dict = field(default_factory=dict, compare=False)


def schottky_mask(x: np.ndarray, y: np.ndarray, wire_width: float, depth: float | str = 0.0) -> np.ndarray:
    """1 where donors stay ionised, 0 inside the depletion region below the wire.

    The depleted set is every point within ``depth`` of the wire footprint,
    i.e. a rectangle under the strip with quarter-circle corners.
    """
    if isinstance(depth, str):
        if depth not in SCHOTTKY_SCENARIOS:
            raise ValueError(f"unknown Schottky scenario {depth!r}")
        depth = SCHOTTKY_SCENARIOS[depth]
    X, Y = np.meshgrid(np.asarray(x, float), np.asarray(y, float), indexing="ij")
    if depth <= 0:
        return np.ones_like(X)
    dx = np.maximum(np.abs(X) - wire_width / 2, 0.0)
    return (np.hypot(dx, Y) > depth).astype(float)


def gaussian_kernel_matrix(B0: np.ndarray, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column-normalised Gaussian spreading matrix for a uniform grid.

    Column ``j`` spreads the value at ``B0[j]`` with width ``sigma[j]``.
    Columns whose width is below the grid step are left as identity; the
    boolean array of such columns is returned alongside.
    """
    B0 = np.asarray(B0, float)
    sigma = np.broadcast_to(np.asarray(sigma, float), B0.shape)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    step = abs(B0[1] - B0[0]) if len(B0) > 1 else np.inf
    narrow = sigma < step
    d = B0[:, None] - B0[None, :]
    s = np.where(narrow, 1.0, sigma)[None, :]
    K = np.exp(-0.5 * (d / s) ** 2)
    K /= K.sum(axis=0, keepdims=True)
    K[:, narrow] = 0.0
    K[np.flatnonzero(narrow), np.flatnonzero(narrow)] = 1.0
    return K, narrow


def convolve_inhomogeneity(values: np.ndarray, B0: np.ndarray, sigma_B) -> np.ndarray:
    """Gaussian smoothing with a (possibly field-dependent) width, integral-preserving."""
    B0 = np.asarray(B0, float)
    if len(B0) > 2 and not np.allclose(np.diff(B0), B0[1] - B0[0], rtol=1e-6, atol=0):
        raise ValueError("convolution requires a uniform B0 grid")
    K, narrow = gaussian_kernel_matrix(B0, sigma_B)
    if np.all(narrow) and np.any(np.asarray(sigma_B) > 0):
        warnings.warn("sigma_B below grid step everywhere; convolution is identity", ConvolutionWarning)
    return K @ np.asarray(values, float)


def _uniform_areas(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    def widths(v):
        if len(v) == 1:
            return np.ones(1)
        d = np.diff(v)
        return np.concatenate([[d[0] / 2], (d[:-1] + d[1:]) / 2, [d[-1] / 2]])
    return np.outer(widths(x), widths(y))


class SpectroscopyModel:
    """Forward model for echo-detected spectra on a common (x, y) grid.

    Parameters
    ----------
    x, y : 1D arrays
        Grid coordinates (m); ``y`` is depth below the surface.
    f_delta : (nx, ny) array
        Strain shift map in Hz.
    dB1 : (nx, ny) array
        Vacuum field magnitude in tesla.
    profile : DonorProfile
        Donor density versus depth.
    params : ResonatorParams
    mask : optional (nx, ny) array
        Multiplies the donor density (Schottky depletion).
    """

    def __init__(self, x, y, f_delta, dB1, profile: DonorProfile, params: ResonatorParams,
                 system: SpinSystem = DEFAULT_SYSTEM, mask=None):
        self.x = np.asarray(x, float)
        self.y = np.asarray(y, float)
        shape = (len(self.x), len(self.y))
        self.f_delta = np.asarray(f_delta, float)
        self.dB1 = np.asarray(dB1, float)
        if self.f_delta.shape != shape or self.dB1.shape != shape:
            raise ValueError("maps must share the (x, y) grid")
        self.profile = profile
        self.params = params
        self.system = system
        rho = np.broadcast_to(profile(self.y)[None, :], shape)
        if mask is not None:
            rho = rho * np.asarray(mask, float)
        self.donors = rho * _uniform_areas(self.x, self.y)  # donors per unit wire length
        self._order = np.argsort(self.f_delta, axis=None, kind="stable")
        self._sorted_f = self.f_delta.ravel()[self._order]
        self._sx_cache: dict = {}

    @property
    def half_band(self) -> float:
        return self.params.kappa / TWO_PI

    @property
    def prefactor(self) -> float:
        p = self.params
        return 2 * np.sqrt(p.kappa_c) / p.kappa * p.wire_length

    def detuning_shift(self, index: int, B0, branch: str | None = None):
        """Strain shift (Hz) that brings line ``index`` into resonance at ``B0``."""
        w = transition_frequency(index, B0, self.system, branch=branch)
        return (self.params.omega0 - w) / TWO_PI

    def nominal_field(self, index: int, branch: str, window=(1e-5, 0.1)) -> float:
        """Field where the unstrained branch is resonant (closest approach if never)."""
        key = (index, branch)
        if key not in self._sx_cache:
            try:
                b = self.resonance_field(index, branch, 0.0, window)
            except ValueError:
                bs = np.geomspace(*window, 400)
                b = bs[np.argmin(np.abs(self.detuning_shift(index, bs, branch)))]
            self._sx_cache[key] = (b, sx_element(index, b, self.system, branch))
        return self._sx_cache[key][0]

    def resonance_field(self, index: int, branch: str, f_delta: float, window=(1e-5, 0.1)) -> float:
        """Field at which spins with shift ``f_delta`` are resonant on this branch."""
        from scipy.optimize import brentq

        g = lambda b: self.detuning_shift(index, b, branch) - f_delta
        bs = np.geomspace(*window, 400)
        vals = g(bs)
        cross = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
        if not len(cross):
            raise ValueError(f"line {index} ({branch}) never reaches shift {f_delta:g} Hz")
        return brentq(g, bs[cross[0]], bs[cross[0] + 1], xtol=1e-10)

    def branch_sx(self, index: int, branch: str) -> float:
        self.nominal_field(index, branch)
        return self._sx_cache[(index, branch)][1]

    def g0(self, sx: float) -> np.ndarray:
        return self.system.gamma_e * sx * self.dB1

    def cell_weights(self, sx: float, pulse: PulseParams) -> np.ndarray:
        """Per-cell echo contribution (before the resonator prefactor)."""
        g0 = self.g0(sx)
        gp = 4 * g0**2 / self.params.kappa
        theta = rabi_angle(g0, pulse.beta, pulse.t_p, self.params.kappa)
        return self.donors * g0 * -np.expm1(-gp * pulse.t_rep) * np.sin(theta) ** 3

    def echo_amplitude(self, index: int, B0: float, pulse: PulseParams, branch: str | None = None) -> float:
        """Direct band-mask evaluation of the echo for one line at one field."""
        total = 0.0
        for b, _, _ in line_members(index, self.system):
            if branch is not None and b != branch:
                continue
            target = self.detuning_shift(index, B0, b)
            band = np.abs(self.f_delta - target) <= self.half_band
            if band.any():
                w = self.cell_weights(self.branch_sx(index, b), pulse)
                total += float(w[band].sum())
        return self.prefactor * total

    def line_component(self, index: int, B0: np.ndarray, pulse: PulseParams) -> np.ndarray:
        """Unconvolved echo amplitude of line ``index`` over a field sweep."""
        B0 = np.asarray(B0, float)
        out = np.zeros_like(B0)
        hb = self.half_band
        for b, _, _ in line_members(index, self.system):
            w = self.cell_weights(self.branch_sx(index, b), pulse).ravel()[self._order]
            cum = np.concatenate([[0.0], np.cumsum(w)])
            target = self.detuning_shift(index, B0, b)
            hi = np.searchsorted(self._sorted_f, target + hb, side="right")
            lo = np.searchsorted(self._sorted_f, target - hb, side="left")
            out += cum[hi] - cum[lo]
        return self.prefactor * out

    def sigma_B(self, index: int, B0: np.ndarray, rel_width: float = 0.2) -> np.ndarray:
        """Field-dependent inhomogeneous width ``rel_width * |f_delta| / |gamma_eff|`` (T)."""
        br = None if len(line_members(index, self.system)) == 1 else line_members(index, self.system)[0][0]
        f = self.detuning_shift(index, B0, br)
        g = np.abs(effective_gamma(index, np.asarray(B0, float), self.system, br)) / TWO_PI
        return rel_width * np.abs(f) / np.maximum(g, 1e-30)

    def total_spectrum(
        self,
        B0: np.ndarray,
        weights: dict[int, float],
        pulse: PulseParams,
        rel_width: float | None = 0.2,
        magnitude: bool = False,
    ) -> Spectrum:
        """Weighted sum of per-line components, each convolved with its own width.

        With ``magnitude`` the detected echo is the modulus of the summed
        in-phase signal.
        """
        B0 = np.asarray(B0, float)
        if np.any(B0 <= 0):
            raise ValueError("field sweep must be strictly positive")
        comps: dict[int, np.ndarray] = {}
        skipped = []
        for i in sorted(weights):
            p = weights[i]
            if p < 0:
                raise ValueError("transition weights must be non-negative")
            if p == 0:
                continue
            c = self.line_component(i, B0, pulse)
            if rel_width:
                sig = self.sigma_B(i, B0, rel_width)
                K, narrow = gaussian_kernel_matrix(B0, sig)
                if np.all(narrow):
                    skipped.append(i)
                c = K @ c
            comps[i] = p * c
        total = np.zeros_like(B0)
        for i in sorted(comps):
            total = total + comps[i]
        if magnitude:
            total = np.abs(total)
            comps = {i: np.abs(c) for i, c in comps.items()}
        return Spectrum(B0=B0, total=total, components=comps,
                        meta={"identity_convolution": skipped, "magnitude": magnitude})

    def rabi_response(self, index: int, B0: float, betas, pulse: PulseParams) -> np.ndarray:
        """Echo amplitude of one line at fixed field versus pulse amplitude."""
        out = []
        for b in np.asarray(betas, float):
            p = PulseParams(beta=float(b), t_p=pulse.t_p, t_rep=pulse.t_rep, bandwidth=pulse.bandwidth)
            out.append(self.echo_amplitude(index, B0, p))
        return np.array(out)


def find_peaks(B0: np.ndarray, y: np.ndarray, n: int = 2, prominence: float = 0.1) -> np.ndarray:
    """Fields of the ``n`` most prominent maxima of ``y``, sorted by field.

    ``prominence`` is relative to the maximum of ``y``.
    """
    y = np.asarray(y, float)
    idx, props = signal.find_peaks(y, prominence=prominence * y.max())
    best = idx[np.argsort(props["prominences"])[::-1][:n]]
    return np.sort(np.asarray(B0)[best])
