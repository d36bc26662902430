"""Resonator vacuum field, spin-photon coupling and donor depth profile."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar, mu_0

from .spin import DEFAULT_SYSTEM, SpinSystem, Transition

MICRON3 = 1e-18  # m^3 per um^3


@dataclass(frozen=True)
class ResonatorParams:
    """Lumped-element resonator and its inductor wire.

    Rates are energy decay rates in 1/s; ``omega0`` in rad/s.
    """

    omega0: float
    Z0: float
    kappa_i: float
    kappa_c: float
    wire_width: float
    wire_thickness: float = 50e-9
    wire_length: float = 700e-6
    london_depth: float = 50e-9

    def __post_init__(self):
        for name in ("omega0", "Z0", "kappa_i", "kappa_c", "wire_width", "wire_thickness",
                     "wire_length", "london_depth"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def kappa(self) -> float:
        return self.kappa_i + self.kappa_c

    @property
    def vacuum_current(self) -> float:
        """RMS zero-point current in the inductor (A)."""
        return self.omega0 * np.sqrt(hbar / (2 * self.Z0))


@dataclass(frozen=True)
class CurrentDistribution:
    """Sheet current discretised into strips centred at ``x`` with widths ``dx``.

    ``j`` is a linear density (1/m) normalised so that ``sum(j * dx) == 1``.
    """

    x: np.ndarray
    dx: np.ndarray
    j: np.ndarray

    def __call__(self, x):
        return np.interp(x, self.x, self.j, left=0.0, right=0.0)


def current_distribution(
    w: float, thickness: float, london_depth: float, n: int = 400, mode: str = "strip",
    cutoff: float | None = None,
) -> CurrentDistribution:
    """Lateral current profile across a thin superconducting strip.

    In ``"strip"`` mode ``j ~ 1/sqrt(1 - (2x/w)^2)``, held constant within the
    cutoff length ``max(london_depth**2 / thickness, w / n)`` of each edge.
    ``"uniform"`` mode gives ``j = 1/w``.
    """
    if w <= 0 or london_depth <= 0 or thickness <= 0:
        raise ValueError("width, thickness and London depth must be positive")
    edges = np.linspace(-w / 2, w / 2, n + 1)
    x = 0.5 * (edges[1:] + edges[:-1])
    dx = np.diff(edges)
    if mode == "uniform":
        j = np.full(n, 1.0 / w)
    elif mode == "strip":
        a = cutoff if cutoff is not None else max(london_depth**2 / thickness, w / n)
        a = min(a, w / 2)
        u = np.minimum(np.abs(2 * x / w), 1 - 2 * a / w)
        j = 1.0 / np.sqrt(1.0 - u**2)
        j /= np.sum(j * dx)
    else:
        raise ValueError(f"unknown current mode {mode!r}")
    return CurrentDistribution(x=x, dx=dx, j=j)


@dataclass(frozen=True)
class FieldMap:
    x: np.ndarray
    y: np.ndarray
    bx: np.ndarray
    by: np.ndarray

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.bx, self.by)


def vacuum_field(
    params: ResonatorParams,
    current: CurrentDistribution,
    x: np.ndarray,
    y: np.ndarray,
    n_layers: int = 5,
    total_current: float | None = None,
    chunk: int = 4096,
) -> FieldMap:
    """Biot-Savart field of the wire current on the (x, y) grid, in tesla.

    The strip current is split into ``n_layers`` filament sheets through the
    film thickness (y in [-t, 0]). Grid points must lie in the substrate.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if np.any(y < 0):
        raise ValueError("field points must lie in the substrate (y >= 0)")
    I = params.vacuum_current if total_current is None else total_current
    t = params.wire_thickness
    yl = -t * (np.arange(n_layers) + 0.5) / n_layers
    fx = np.repeat(current.x, n_layers)
    fy = np.tile(yl, len(current.x))
    fI = np.repeat(current.j * current.dx, n_layers) * I / n_layers

    X, Y = np.meshgrid(x, y, indexing="ij")
    px, py = X.ravel(), Y.ravel()
    bx = np.empty_like(px)
    by = np.empty_like(px)
    k = mu_0 / (2 * np.pi)
    for s in range(0, px.size, chunk):
        dx = px[s:s + chunk, None] - fx[None, :]
        dy = py[s:s + chunk, None] - fy[None, :]
        r2 = dx * dx + dy * dy
        # current along +z: B = mu0 I / (2 pi r^2) * (-dy, dx)
        bx[s:s + chunk] = -k * np.sum(fI * dy / r2, axis=1)
        by[s:s + chunk] = k * np.sum(fI * dx / r2, axis=1)
    return FieldMap(x=x, y=y, bx=bx.reshape(X.shape), by=by.reshape(X.shape))


def rabi_angle(g0, beta: float, t_p: float, kappa: float):
    """Rotation angle of a square pulse of amplitude ``beta`` and length ``t_p``."""
    return 4 * np.asarray(g0) * beta * t_p / np.sqrt(kappa)


def calibrate_beta(g0_ref: float, t_p: float, kappa: float, theta: float = np.pi / 2) -> float:
    """Pulse amplitude giving angle ``theta`` for a spin with coupling ``g0_ref``."""
    if g0_ref <= 0:
        raise ValueError("reference coupling must be positive")
    return theta * np.sqrt(kappa) / (4 * g0_ref * t_p)


@dataclass(frozen=True)
class CouplingMap:
    x: np.ndarray
    y: np.ndarray
    dB1: np.ndarray  # T
    g0: np.ndarray  # rad/s
    gamma_p: np.ndarray  # 1/s
    theta: np.ndarray | None = None  # rad

    @property
    def t1(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 1.0 / self.gamma_p


def coupling_map(
    field: FieldMap,
    transition: Transition | float,
    params: ResonatorParams,
    beta: float | None = None,
    t_p: float | None = None,
    system: SpinSystem = DEFAULT_SYSTEM,
) -> CouplingMap:
    """g0 = gamma_e * sx * |dB1|, Purcell rate 4 g0^2 / kappa, optional Rabi angle.

    ``transition`` may be a :class:`Transition` or a bare S_x matrix element.
    """
    sx = transition.sx_element if isinstance(transition, Transition) else float(transition)
    dB1 = field.magnitude
    g0 = system.gamma_e * sx * dB1
    gp = 4 * g0**2 / params.kappa
    theta = None
    if beta is not None and t_p is not None:
        theta = rabi_angle(g0, beta, t_p, params.kappa)
    return CouplingMap(x=field.x, y=field.y, dB1=dB1, g0=g0, gamma_p=gp, theta=theta)


@dataclass(frozen=True)
class DonorProfile:
    """Piecewise-linear donor density versus depth (m^-3), zero outside the table."""

    depth: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.depth, float)
        r = np.asarray(self.density, float)
        if d.ndim != 1 or d.shape != r.shape or len(d) < 2:
            raise ValueError("depth and density must be 1D tables of equal length >= 2")
        if np.any(np.diff(d) <= 0):
            raise ValueError("depth table must be strictly increasing")
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ValueError("density must be finite and non-negative")
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "density", r)

    def __call__(self, y):
        return np.interp(y, self.depth, self.density, left=0.0, right=0.0)

    @property
    def dose(self) -> float:
        """Areal dose in m^-2."""
        return float(np.trapezoid(self.density, self.depth))

    @property
    def peak_depth(self) -> float:
        return float(self.depth[np.argmax(self.density)])


def gaussian_profile(center: float = 75e-9, sigma: float = 25e-9,
                     peak: float = 4e4 / MICRON3, n: int = 201) -> DonorProfile:
    d = np.linspace(max(0.0, center - 6 * sigma), center + 6 * sigma, n)
    return DonorProfile(d, peak * np.exp(-0.5 * ((d - center) / sigma) ** 2))
