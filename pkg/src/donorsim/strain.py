"""Plane-strain thermoelastic strain under a thin metal wire on silicon.

The wire (film) and the substrate share the x-y cross-section; the wire
axis z is invariant and the total strain along it vanishes. Cooling from
the deposition temperature loads the film with the isotropic mismatch
eigenstrain ``(alpha_wire - alpha_substrate) * (T_op - T_dep)``. The problem
is solved on half of the domain (x >= 0) with bilinear quadrilaterals on a
graded rectilinear mesh and mirrored afterwards.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .spin import DEFAULT_SYSTEM, SpinSystem, shift_from_strain

logger = logging.getLogger(__name__)


class StrainSolverError(RuntimeError):
    """Raised on degenerate meshes or failed linear solves."""


# Voigt index pairs (xx, yy, zz, yz, xz, xy)
_VOIGT = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)]


@dataclass(frozen=True)
class MaterialProps:
    """Linear thermoelastic material.

    Give either the cubic triple ``(C11, C12, C44)`` or the isotropic pair
    ``(youngs_modulus, poisson_ratio)``; all moduli in Pa.
    """

    thermal_expansion: float
    cubic: tuple[float, float, float] | None = None
    youngs_modulus: float | None = None
    poisson_ratio: float | None = None

    def __post_init__(self):
        if self.thermal_expansion <= 0:
            raise ValueError("thermal expansion coefficient must be positive")
        if (self.cubic is None) == (self.youngs_modulus is None):
            raise ValueError("give exactly one of cubic or isotropic stiffness")
        if self.youngs_modulus is not None:
            if self.youngs_modulus <= 0 or not -1 < (self.poisson_ratio or 0.0) < 0.5:
                raise ValueError("isotropic stiffness is not positive definite")
        eig = np.linalg.eigvalsh(self.voigt())
        if eig.min() <= 0:
            raise ValueError("stiffness tensor is not positive definite")

    def voigt(self) -> np.ndarray:
        """6x6 stiffness in Voigt notation (engineering shear strains)."""
        if self.cubic is not None:
            c11, c12, c44 = self.cubic
        else:
            E, nu = self.youngs_modulus, self.poisson_ratio
            lam = E * nu / ((1 + nu) * (1 - 2 * nu))
            mu = E / (2 * (1 + nu))
            c11, c12, c44 = lam + 2 * mu, lam, mu
        C = np.zeros((6, 6))
        C[:3, :3] = c12
        C[[0, 1, 2], [0, 1, 2]] = c11
        C[[3, 4, 5], [3, 4, 5]] = c44
        return C

    def tensor(self, rotation_deg: float = 0.0) -> np.ndarray:
        """Rank-4 stiffness, optionally rotated about the depth (y) axis."""
        Cv = self.voigt()
        C = np.zeros((3, 3, 3, 3))
        for I, (i, j) in enumerate(_VOIGT):
            for J, (k, l) in enumerate(_VOIGT):
                for a, b in {(i, j), (j, i)}:
                    for c, d in {(k, l), (l, k)}:
                        C[a, b, c, d] = Cv[I, J]
        if rotation_deg:
            t = np.deg2rad(rotation_deg)
            R = np.array([[np.cos(t), 0, -np.sin(t)], [0, 1, 0], [np.sin(t), 0, np.cos(t)]])
            C = np.einsum("ai,bj,ck,dl,ijkl->abcd", R, R, R, R, C)
        return C

    def plane_strain(self, rotation_deg: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """In-plane stiffness D (xx, yy, 2xy) and thermal stress vector.

        The thermal vector ``beta`` gives the stress ``-beta * eps0`` produced by
        an isotropic eigenstrain ``eps0`` when the total strain vanishes.
        """
        C = self.tensor(rotation_deg)
        pairs = [(0, 0), (1, 1), (0, 1)]
        D = np.array([[C[a, b, c, d] for (c, d) in pairs] for (a, b) in pairs])
        beta = np.array([np.trace(C[a, b]) for (a, b) in pairs])
        return D, beta


SILICON = MaterialProps(thermal_expansion=0.7e-6, cubic=(166e9, 64e9, 80e9))
ALUMINUM = MaterialProps(thermal_expansion=14.3e-6, youngs_modulus=70e9, poisson_ratio=0.33)
ALUMINUM_CUBIC = MaterialProps(thermal_expansion=14.3e-6, cubic=(103e9, 51e9, 26e9))

WIRE_AXIS_ROTATION = {"100": 0.0, "011": 45.0}


@dataclass(frozen=True)
class DeviceGeometry:
    """Wire cross-section, simulation domain, temperatures and mesh controls."""

    wire_width: float
    wire_thickness: float = 50e-9
    wire_length: float = 700e-6
    domain_half_width: float | None = None
    domain_depth: float | None = None
    T_dep: float = 300.0
    T_op: float = 0.015
    mesh_h_min: float = 10e-9
    mesh_fine_radius: float = 200e-9
    mesh_growth: float = 0.15
    mesh_h_max: float | None = None
    wire_axis: str = "100"

    def __post_init__(self):
        if self.wire_width <= 0 or self.wire_thickness <= 0:
            raise ValueError("wire width and thickness must be positive")
        if self.domain_half_width is None:
            object.__setattr__(self, "domain_half_width", 10 * self.wire_width)
        if self.domain_depth is None:
            object.__setattr__(self, "domain_depth", 5 * self.wire_width)
        if self.mesh_h_max is None:
            object.__setattr__(self, "mesh_h_max", self.wire_width / 20)
        if self.domain_half_width < 10 * self.wire_width * (1 - 1e-12):
            raise ValueError("domain half-width must be at least 10 wire widths")
        if self.domain_depth < 5 * self.wire_width * (1 - 1e-12):
            raise ValueError("domain depth must be at least 5 wire widths")
        if self.wire_axis not in WIRE_AXIS_ROTATION:
            raise ValueError(f"wire_axis must be one of {sorted(WIRE_AXIS_ROTATION)}")

    def scaled(self, s: float) -> "DeviceGeometry":
        """Copy with every length multiplied by ``s``."""
        return replace(
            self,
            wire_width=self.wire_width * s,
            wire_thickness=self.wire_thickness * s,
            wire_length=self.wire_length * s,
            domain_half_width=self.domain_half_width * s,
            domain_depth=self.domain_depth * s,
            mesh_h_min=self.mesh_h_min * s,
            mesh_fine_radius=self.mesh_fine_radius * s,
            mesh_h_max=self.mesh_h_max * s,
        )

    def refined(self, factor: float = 2.0) -> "DeviceGeometry":
        return replace(
            self,
            mesh_h_min=self.mesh_h_min / factor,
            mesh_growth=self.mesh_growth / factor,
            mesh_h_max=self.mesh_h_max / factor,
        )


def graded_axis(a: float, b: float, h_min: float, fine_radius: float, growth: float,
                h_max: float, fine_at: str = "a") -> np.ndarray:
    """Nodes on [a, b] with size h_min near the fine end growing linearly.

    Element size at distance d from the fine end is
    ``min(h_max, h_min + growth * max(d - fine_radius, 0))``.
    ``fine_at`` is "a", "b" or "both".
    """
    if b <= a:
        return np.array([a])
    xs = np.linspace(a, b, 20001)
    if fine_at == "a":
        d = xs - a
    elif fine_at == "b":
        d = b - xs
    else:
        d = np.minimum(xs - a, b - xs)
    h = np.minimum(h_max, h_min + growth * np.maximum(d - fine_radius, 0.0))
    inv = 1.0 / h
    s = np.concatenate([[0.0], np.cumsum(0.5 * (inv[1:] + inv[:-1]) * np.diff(xs))])
    n = max(1, int(np.ceil(s[-1] - 1e-9)))
    return np.interp(np.linspace(0.0, s[-1], n + 1), s, xs)


@dataclass(frozen=True)
class FEMesh:
    xs: np.ndarray  # node x on [0, X]
    ys: np.ndarray  # node y on [-t, Y]; y is depth below the surface
    conn: np.ndarray  # (ne, 4) node ids, counter-clockwise in (x, y)
    elem_ij: np.ndarray  # (ne, 2) lower-left node indices
    is_film: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.xs), len(self.ys)


def build_mesh(geom: DeviceGeometry) -> FEMesh:
    half = geom.wire_width / 2
    kw = dict(h_min=geom.mesh_h_min, fine_radius=geom.mesh_fine_radius,
              growth=geom.mesh_growth, h_max=geom.mesh_h_max)
    x_in = graded_axis(0.0, half, fine_at="b", **kw)
    x_out = graded_axis(half, geom.domain_half_width, fine_at="a",
                        **{**kw, "h_max": max(geom.mesh_h_max, geom.wire_width)})
    xs = np.concatenate([x_in, x_out[1:]])
    n_film = max(2, int(np.ceil(geom.wire_thickness / geom.mesh_h_min - 1e-9)))
    y_film = np.linspace(-geom.wire_thickness, 0.0, n_film + 1)
    y_sub = graded_axis(0.0, geom.domain_depth, fine_at="a",
                        **{**kw, "h_max": max(geom.mesh_h_max, geom.wire_width)})
    ys = np.concatenate([y_film, y_sub[1:]])
    if np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
        raise StrainSolverError(
            f"degenerate mesh: min dx={np.diff(xs).min():.3g} m, min dy={np.diff(ys).min():.3g} m"
        )
    nx, ny = len(xs), len(ys)
    nid = np.arange(nx * ny).reshape(nx, ny)
    ei, ej = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
    ei, ej = ei.ravel(), ej.ravel()
    xc = 0.5 * (xs[ei] + xs[ei + 1])
    yc = 0.5 * (ys[ej] + ys[ej + 1])
    film = yc < 0
    keep = ~film | (xc < half)
    ei, ej, film = ei[keep], ej[keep], film[keep]
    conn = np.stack([nid[ei, ej], nid[ei + 1, ej], nid[ei + 1, ej + 1], nid[ei, ej + 1]], axis=1)
    return FEMesh(xs=xs, ys=ys, conn=conn, elem_ij=np.stack([ei, ej], axis=1), is_film=film)


_GAUSS = np.array([-1.0, 1.0]) / np.sqrt(3.0)


def _b_matrices(hx, hy, xi, eta):
    dN_dxi = np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)]) / 4
    dN_deta = np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)]) / 4
    dNdx = dN_dxi[None, :] * (2.0 / hx[:, None])
    dNdy = dN_deta[None, :] * (2.0 / hy[:, None])
    B = np.zeros((len(hx), 3, 8))
    B[:, 0, 0::2] = dNdx
    B[:, 1, 1::2] = dNdy
    B[:, 2, 0::2] = dNdy
    B[:, 2, 1::2] = dNdx
    return B


@dataclass(frozen=True)
class StrainField:
    """Strain tensor components on a rectilinear grid (x lateral, y depth).

    Shear is the tensor component eps_xy (half the engineering strain).
    """

    x: np.ndarray
    y: np.ndarray
    exx: np.ndarray
    eyy: np.ndarray
    ezz: np.ndarray
    exy: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def components(self) -> dict[str, np.ndarray]:
        return {"exx": self.exx, "eyy": self.eyy, "ezz": self.ezz, "exy": self.exy}

    def at(self, x, y) -> dict[str, np.ndarray]:
        """Bilinear interpolation of every component at points (x, y)."""
        pts = np.stack(np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float)), axis=-1)
        return {
            k: RegularGridInterpolator((self.x, self.y), v, bounds_error=True)(pts)
            for k, v in self.components.items()
        }

    def resample(self, x: np.ndarray, y: np.ndarray) -> "StrainField":
        X, Y = np.meshgrid(x, y, indexing="ij")
        c = self.at(X, Y)
        return StrainField(x=np.asarray(x, float), y=np.asarray(y, float), meta=dict(self.meta), **c)


def hydrostatic(f: StrainField) -> np.ndarray:
    """Pointwise mean of the diagonal strain components."""
    return (f.exx + f.eyy + f.ezz) / 3.0


def mismatch_strain(geom: DeviceGeometry, wire: MaterialProps, substrate: MaterialProps) -> float:
    return (wire.thermal_expansion - substrate.thermal_expansion) * (geom.T_op - geom.T_dep)


def solve_thermoelastic(
    geom: DeviceGeometry,
    wire: MaterialProps = ALUMINUM,
    substrate: MaterialProps = SILICON,
    rtol: float = 1e-8,
) -> StrainField:
    """Solve for the substrate strain produced by the cooled wire.

    Returns nodal strains on the mirrored substrate part of the mesh
    (y >= 0). Nodal values are area-weighted averages of element-centre
    strains.
    """
    if geom.T_dep <= geom.T_op:
        raise ValueError("deposition temperature must exceed operating temperature")
    mesh = build_mesh(geom)
    nx, ny = mesh.shape
    n_dof = 2 * nx * ny
    xs, ys = mesh.xs, mesh.ys
    ei, ej = mesh.elem_ij.T
    hx = xs[ei + 1] - xs[ei]
    hy = ys[ej + 1] - ys[ej]
    if np.any(hx <= 0) or np.any(hy <= 0):
        raise StrainSolverError(f"degenerate elements: {np.sum((hx <= 0) | (hy <= 0))} with zero area")

    rot = WIRE_AXIS_ROTATION[geom.wire_axis]
    D_sub, _ = substrate.plane_strain(rot)
    D_film, beta_film = wire.plane_strain(0.0)
    eps0 = mismatch_strain(geom, wire, substrate)
    sig0 = -beta_film * eps0  # stress of the bonded film at zero displacement

    ne = len(mesh.conn)
    D = np.where(mesh.is_film[:, None, None], D_film[None], D_sub[None])
    Ke = np.zeros((ne, 8, 8))
    Fe = np.zeros((ne, 8))
    detJ = hx * hy / 4
    for xi in _GAUSS:
        for eta in _GAUSS:
            B = _b_matrices(hx, hy, xi, eta)
            Ke += np.einsum("eki,ekl,elj->eij", B, D, B) * detJ[:, None, None]
            Fe[mesh.is_film] -= np.einsum("eki,k->ei", B[mesh.is_film], sig0) * detJ[mesh.is_film, None]

    dofs = np.stack([2 * mesh.conn, 2 * mesh.conn + 1], axis=2).reshape(ne, 8)
    rows = np.repeat(dofs, 8, axis=1).ravel()
    cols = np.tile(dofs, (1, 8)).ravel()
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n_dof, n_dof)).tocsr()
    F = np.bincount(dofs.ravel(), Fe.ravel(), minlength=n_dof)

    nid = np.arange(nx * ny).reshape(nx, ny)
    used = np.zeros(nx * ny, bool)
    used[mesh.conn.ravel()] = True
    fixed = np.zeros(n_dof, bool)
    unused = np.where(~used)[0]
    fixed[2 * unused] = fixed[2 * unused + 1] = True
    fixed[2 * nid[0, :]] = True  # symmetry plane x = 0
    fixed[2 * nid[:, -1]] = fixed[2 * nid[:, -1] + 1] = True  # clamped bottom
    free = ~fixed

    u = np.zeros(n_dof)
    Kff = K[free][:, free].tocsc()
    if np.any(Kff.diagonal() <= 0):
        raise StrainSolverError("singular stiffness: free DOF with no stiffness (check mesh)")
    try:
        u[free] = spla.spsolve(Kff, F[free])
    except RuntimeError as exc:  # SuperLU reports exact singularity this way
        raise StrainSolverError(f"stiffness factorization failed on {nx}x{ny} mesh: {exc}") from exc
    resid = np.linalg.norm(Kff @ u[free] - F[free])
    scale = max(np.linalg.norm(F[free]), 1e-300)
    if not np.all(np.isfinite(u)) or (np.linalg.norm(F[free]) > 0 and resid > rtol * scale):
        raise StrainSolverError(f"linear solve did not converge: residual {resid / scale:.3e}")
    logger.debug("strain solve: %d nodes, %d elements, residual %.2e", nx * ny, ne, resid / scale)

    # element-centre strains, then area-weighted nodal averages (substrate only)
    Bc = _b_matrices(hx, hy, 0.0, 0.0)
    ue = u[dofs]
    eps_e = np.einsum("eki,ei->ek", Bc, ue)  # (exx, eyy, gamma_xy)
    sub = ~mesh.is_film
    area = (hx * hy)[sub]
    nodal = np.zeros((nx * ny, 3))
    wsum = np.zeros(nx * ny)
    for c in range(4):
        ids = mesh.conn[sub, c]
        np.add.at(nodal, ids, eps_e[sub] * area[:, None])
        np.add.at(wsum, ids, area)
    j0 = int(np.searchsorted(ys, 0.0))
    nodal = nodal.reshape(nx, ny, 3)[:, j0:]
    wsum = wsum.reshape(nx, ny)[:, j0:]
    nodal = nodal / wsum[..., None]

    x_full = np.concatenate([-xs[:0:-1], xs])
    def mirror(a, odd=False):
        left = -a[:0:-1] if odd else a[:0:-1]
        return np.concatenate([left, a], axis=0)

    exx = mirror(nodal[..., 0])
    eyy = mirror(nodal[..., 1])
    exy = mirror(0.5 * nodal[..., 2], odd=True)
    exy[nx - 1] = 0.0
    return StrainField(
        x=x_full,
        y=ys[j0:].copy(),
        exx=exx,
        eyy=eyy,
        ezz=np.zeros_like(exx),
        exy=exy,
        meta={"wire_axis": geom.wire_axis, "nodes": nx * ny, "elements": ne, "residual": float(resid / scale),
              "mismatch_strain": eps0, "mesh_x": xs, "mesh_y": ys,
              "ux": u[0::2].reshape(nx, ny), "uy": u[1::2].reshape(nx, ny)},
    )


@dataclass(frozen=True)
class ShiftMap:
    x: np.ndarray
    y: np.ndarray
    f_delta: np.ndarray  # Hz

    def at(self, x, y):
        pts = np.stack(np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float)), axis=-1)
        return RegularGridInterpolator((self.x, self.y), self.f_delta)(pts)


def crystal_frame(f: StrainField, wire_axis: str | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Diagonal strain components along the cubic axes.

    The depth axis is [100]; the lateral and wire axes are rotated about it
    by the angle of ``wire_axis`` (taken from the field metadata if omitted).
    The rotation mixes only the lateral and wire-axis components.
    """
    axis = wire_axis or f.meta.get("wire_axis", "100")
    t = np.deg2rad(WIRE_AXIS_ROTATION[axis])
    c2, s2 = np.cos(t) ** 2, np.sin(t) ** 2
    return c2 * f.exx + s2 * f.ezz, f.eyy, s2 * f.exx + c2 * f.ezz


def shift_map(f: StrainField, system: SpinSystem = DEFAULT_SYSTEM, frame: str = "solver",
              wire_axis: str | None = None) -> ShiftMap:
    """Pointwise strain shift in Hz.

    ``frame="solver"`` feeds the solver-frame components straight into the
    shift formula; ``frame="crystal"`` first rotates them onto the cubic axes.
    """
    if frame == "solver":
        e1, e2, e3 = f.exx, f.eyy, f.ezz
    elif frame == "crystal":
        e1, e2, e3 = crystal_frame(f, wire_axis)
    else:
        raise ValueError("frame must be 'solver' or 'crystal'")
    return ShiftMap(x=f.x, y=f.y, f_delta=shift_from_strain(e1, e2, e3, system))


def cell_areas(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Dual-cell (trapezoid) area attached to each node of a rectilinear grid."""
    def widths(v):
        if len(v) == 1:
            return np.ones(1)
        d = np.diff(v)
        return np.concatenate([[d[0] / 2], (d[:-1] + d[1:]) / 2, [d[-1] / 2]])
    return np.outer(widths(x), widths(y))


@dataclass(frozen=True)
class IsoShiftRegion:
    mask: np.ndarray
    area: float
    mean_x: float  # mean lateral distance |x| from the wire centre
    mean_y: float

    @property
    def empty(self) -> bool:
        return not self.mask.any()


def iso_shift_region(
    smap: ShiftMap, target: float, half_bandwidth: float, density=None
) -> IsoShiftRegion:
    """Grid nodes whose shift lies within ``target +/- half_bandwidth``.

    ``density`` is an optional donor density, either per depth (len(y)) or on
    the full grid, used to weight the mean position.
    """
    if half_bandwidth <= 0:
        raise ValueError("half_bandwidth must be positive")
    mask = np.abs(smap.f_delta - target) <= half_bandwidth
    areas = cell_areas(smap.x, smap.y)
    area = float(areas[mask].sum())
    if not mask.any():
        return IsoShiftRegion(mask=mask, area=0.0, mean_x=float("nan"), mean_y=float("nan"))
    w = areas.copy()
    if density is not None:
        rho = np.asarray(density, float)
        w = w * (rho[None, :] if rho.ndim == 1 else rho)
    w = np.where(mask, w, 0.0)
    total = w.sum()
    if total <= 0:
        return IsoShiftRegion(mask=mask, area=area, mean_x=float("nan"), mean_y=float("nan"))
    X, Y = np.meshgrid(np.abs(smap.x), smap.y, indexing="ij")
    return IsoShiftRegion(
        mask=mask, area=area, mean_x=float((w * X).sum() / total), mean_y=float((w * Y).sum() / total)
    )
