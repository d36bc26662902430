"""Bismuth donor electro-nuclear spin Hamiltonian.

Builds ``A S.I + (gamma_e S_z + gamma_n I_z) B0`` in the product basis
``|m_S> (x) |m_I>`` (m_S, m_I descending), diagonalizes it block by block in
the conserved total projection ``m = m_S + m_I`` and enumerates the
``|Delta m| = 1`` EPR transitions between the two hyperfine manifolds.

All frequencies are angular (rad/s), fields in tesla.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SpinSystem:
    """Donor spin constants.

    ``strain_K``/``strain_L`` parametrize the strain dependence of the
    hyperfine constant, ``stark_eta`` (m^2/V^2) its quadratic Stark shift.
    """

    electron_spin: float = 0.5
    nuclear_spin: float = 4.5
    hyperfine_A: float = TWO_PI * 1.475e9
    gamma_e: float = TWO_PI * 28e9
    gamma_n: float = TWO_PI * 7e6
    strain_K: float = 19.1
    strain_L: float = 9720.0
    stark_eta: float = -0.26e-15

    def __post_init__(self):
        for name in ("electron_spin", "nuclear_spin"):
            twice = 2 * getattr(self, name)
            if twice <= 0 or abs(twice - round(twice)) > 1e-12:
                raise ValueError(f"{name} must be a positive multiple of 1/2")
        if self.electron_spin != 0.5:
            raise ValueError("only S = 1/2 donors are supported")
        if self.hyperfine_A <= 0:
            raise ValueError("hyperfine_A must be positive")
        if self.gamma_e <= 0:
            raise ValueError("gamma_e must be positive")

    @property
    def dim(self) -> int:
        return int(round((2 * self.electron_spin + 1) * (2 * self.nuclear_spin + 1)))

    @property
    def f_low(self) -> float:
        return self.nuclear_spin - 0.5

    @property
    def f_high(self) -> float:
        return self.nuclear_spin + 0.5

    @property
    def shift_factor(self) -> float:
        """d(omega)/dA of every transition at low field (5 for I = 9/2)."""
        return self.nuclear_spin + 0.5

    @property
    def n_lines(self) -> int:
        return int(round(2 * self.nuclear_spin + 1))

    @property
    def zero_field_splitting(self) -> float:
        return self.shift_factor * self.hyperfine_A


DEFAULT_SYSTEM = SpinSystem()


def spin_operators(s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (S_x, S_y, S_z) for spin ``s`` with m ordered s, s-1, ..., -s."""
    m = np.arange(s, -s - 1, -1)
    d = len(m)
    sp = np.zeros((d, d))
    for k in range(1, d):
        sp[k - 1, k] = np.sqrt(s * (s + 1) - m[k] * (m[k] + 1))
    sx = (sp + sp.T) / 2
    sy = (sp - sp.T) / 2j
    return sx, sy, np.diag(m)


@lru_cache(maxsize=8)
def _operators(S: float, I: float):
    sx, sy, sz = spin_operators(S)
    ix, iy, iz = spin_operators(I)
    es, ei = np.eye(len(sz)), np.eye(len(iz))
    s_dot_i = np.real(np.kron(sx, ix) + np.kron(sy, iy) + np.kron(sz, iz))
    big_sx = np.kron(sx, ei)
    big_sz = np.kron(sz, ei)
    big_iz = np.kron(es, iz)
    m_total = np.diag(big_sz + big_iz).copy()
    for arr in (s_dot_i, big_sx, big_sz, big_iz, m_total):
        arr.setflags(write=False)
    return s_dot_i, big_sx, big_sz, big_iz, m_total


def build_hamiltonian(system: SpinSystem, B0: float) -> np.ndarray:
    """Hamiltonian matrix in rad/s for a static field ``B0`` along z."""
    s_dot_i, _, sz, iz, _ = _operators(system.electron_spin, system.nuclear_spin)
    return system.hyperfine_A * s_dot_i + (system.gamma_e * sz + system.gamma_n * iz) * B0


def total_m(system: SpinSystem) -> np.ndarray:
    """Total projection m of each product-basis state."""
    return _operators(system.electron_spin, system.nuclear_spin)[4]


def sx_operator(system: SpinSystem) -> np.ndarray:
    return _operators(system.electron_spin, system.nuclear_spin)[1]


@dataclass(frozen=True)
class EnergyLevels:
    field_B0: float | None
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    labels: tuple[tuple[float, float], ...]
    system: SpinSystem = field(default=DEFAULT_SYSTEM, repr=False)

    def index_of(self, F: float, m: float) -> int:
        for k, lab in enumerate(self.labels):
            if lab[0] == F and lab[1] == m:
                return k
        raise KeyError((F, m))

    def energy(self, F: float, m: float) -> float:
        return float(self.eigenvalues[self.index_of(F, m)])

    def vector(self, F: float, m: float) -> np.ndarray:
        return self.eigenvectors[:, self.index_of(F, m)]


def _fix_phase(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    ph = v[k] / abs(v[k])
    return v / ph


def diagonalize(
    H: np.ndarray, system: SpinSystem = DEFAULT_SYSTEM, field_B0: float | None = None
) -> EnergyLevels:
    """Diagonalize a donor Hamiltonian and attach (F, m) labels.

    Diagonalization is carried out inside each fixed-m block, which is exact
    because the Hamiltonian conserves m. Within a block the levels are
    assigned F values in ascending order, which is the adiabatic continuation
    of the zero-field |F, m> states (levels of equal m never cross).
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("Hamiltonian must be a square matrix")
    if H.shape[0] != system.dim:
        raise ValueError(f"expected a {system.dim}x{system.dim} matrix, got {H.shape}")
    scale = max(np.abs(H).max(), 1.0)
    if np.abs(H - H.conj().T).max() > 1e-12 * scale:
        raise ValueError("Hamiltonian is not Hermitian")
    m_of = total_m(system)
    offblock = np.abs(m_of[:, None] - m_of[None, :]) > 1e-9
    if np.abs(H[offblock]).max(initial=0.0) > 1e-12 * scale:
        raise ValueError("Hamiltonian does not conserve total m")

    energies, vectors, labels = [], [], []
    dim = system.dim
    for m in np.unique(m_of):
        idx = np.where(np.isclose(m_of, m))[0]
        w, v = np.linalg.eigh(H[np.ix_(idx, idx)])
        f_values = [F for F in (system.f_low, system.f_high) if F >= abs(m) - 1e-9]
        if len(f_values) != len(idx):
            raise ValueError("unexpected m-block dimension")
        for k in range(len(idx)):
            full = np.zeros(dim, dtype=H.dtype)
            full[idx] = _fix_phase(v[:, k])
            energies.append(w[k])
            vectors.append(full)
            labels.append((f_values[k], float(m)))
    order = np.argsort(energies, kind="stable")
    return EnergyLevels(
        field_B0=field_B0,
        eigenvalues=np.asarray(energies)[order],
        eigenvectors=np.column_stack(vectors)[:, order],
        labels=tuple(labels[k] for k in order),
        system=system,
    )


def energy_levels(system: SpinSystem, B0: float) -> EnergyLevels:
    return diagonalize(build_hamiltonian(system, B0), system, field_B0=B0)


@dataclass(frozen=True)
class Transition:
    """One EPR transition |F_low, m_low> <-> |F_high, m_high>.

    ``branch`` is ``"up"`` when m_high = m_low + 1 and ``"down"`` when
    m_high = m_low - 1. ``index`` is the resolved-line number 1..10 counted
    from the lowest frequency at low field.
    """

    index: int
    branch: str
    lower: tuple[float, float]
    upper: tuple[float, float]
    frequency: float
    sx_element: float
    gamma_eff: float | None = None


def line_index(m_low: float, m_high: float, system: SpinSystem = DEFAULT_SYSTEM) -> int:
    k = m_low + m_high
    return int(round((k + 2 * system.nuclear_spin) / 2)) + 1


def line_members(index: int, system: SpinSystem = DEFAULT_SYSTEM) -> list[tuple[str, float, float]]:
    """(branch, m_low, m_high) of the transitions forming resolved line ``index``."""
    if not 1 <= index <= system.n_lines:
        raise ValueError(f"line index must be in 1..{system.n_lines}")
    k = 2 * (index - 1) - 2 * system.nuclear_spin  # m_low + m_high
    out = []
    for branch, dm in (("down", -1), ("up", +1)):
        m_low = (k - dm) / 2
        m_high = m_low + dm
        if abs(m_low) <= system.f_low + 1e-9 and abs(m_high) <= system.f_high + 1e-9:
            out.append((branch, m_low, m_high))
    return out


def dominant_branch(index: int, system: SpinSystem = DEFAULT_SYSTEM) -> str:
    """Branch with the larger S_x element in the low-field limit."""
    members = line_members(index, system)
    if len(members) == 1:
        return members[0][0]
    return "down" if 2 * (index - 1) - 2 * system.nuclear_spin < 0 else "up"


def _member(index: int, branch: str | None, system: SpinSystem):
    branch = branch or dominant_branch(index, system)
    for b, m_low, m_high in line_members(index, system):
        if b == branch:
            return b, m_low, m_high
    raise ValueError(f"line {index} has no '{branch}' branch")


def _block_eig(system: SpinSystem, B0: float, m: float):
    H = build_hamiltonian(system, B0)
    m_of = total_m(system)
    idx = np.where(np.isclose(m_of, m))[0]
    w, v = np.linalg.eigh(H[np.ix_(idx, idx)])
    return idx, w, v


def _level(system: SpinSystem, B0: float, F: float, m: float):
    idx, w, v = _block_eig(system, B0, m)
    k = 0 if (len(idx) == 1 or F == system.f_low) else 1
    vec = np.zeros(system.dim)
    vec[idx] = _fix_phase(v[:, k])
    return w[k], vec


def transition_frequency(
    index: int, B0, system: SpinSystem = DEFAULT_SYSTEM, branch: str | None = None
):
    """Exact angular frequency of line ``index`` (one branch) at ``B0``."""
    _, m_low, m_high = _member(index, branch, system)
    B = np.atleast_1d(np.asarray(B0, dtype=float))
    out = np.empty_like(B)
    for k, b in enumerate(B):
        out[k] = _level(system, b, system.f_high, m_high)[0] - _level(system, b, system.f_low, m_low)[0]
    return out[0] if np.ndim(B0) == 0 else out


def sx_element(index: int, B0: float, system: SpinSystem = DEFAULT_SYSTEM, branch: str | None = None) -> float:
    _, m_low, m_high = _member(index, branch, system)
    _, v_low = _level(system, B0, system.f_low, m_low)
    _, v_high = _level(system, B0, system.f_high, m_high)
    return float(abs(v_low @ sx_operator(system) @ v_high))


def fd_step(B0: float) -> float:
    return max(1e-7, 1e-4 * abs(B0))


def effective_gamma(
    index: int, B0, system: SpinSystem = DEFAULT_SYSTEM, branch: str | None = None
):
    """d(omega)/dB0 of a line by central differences (rad/s per tesla)."""
    B = np.atleast_1d(np.asarray(B0, dtype=float))
    out = np.empty_like(B)
    for k, b in enumerate(B):
        h = fd_step(b)
        out[k] = (
            transition_frequency(index, b + h, system, branch)
            - transition_frequency(index, b - h, system, branch)
        ) / (2 * h)
    return out[0] if np.ndim(B0) == 0 else out


def list_transitions(levels: EnergyLevels, with_gamma: bool = True) -> list[Transition]:
    """All |Delta m| = 1 transitions between the two hyperfine manifolds.

    Sorted by (line index, branch). Quasi-degenerate pairs share an index.
    """
    system = levels.system
    if levels.field_B0 is not None and levels.field_B0 <= 0:
        raise ValueError("transitions are defined for B0 > 0")
    sx = sx_operator(system)
    out = []
    for index in range(1, system.n_lines + 1):
        for branch, m_low, m_high in line_members(index, system):
            v_low = levels.vector(system.f_low, m_low)
            v_high = levels.vector(system.f_high, m_high)
            freq = levels.energy(system.f_high, m_high) - levels.energy(system.f_low, m_low)
            g = None
            if with_gamma and levels.field_B0 is not None:
                g = float(effective_gamma(index, levels.field_B0, system, branch))
            out.append(
                Transition(
                    index=index,
                    branch=branch,
                    lower=(system.f_low, m_low),
                    upper=(system.f_high, m_high),
                    frequency=float(freq),
                    sx_element=float(abs(np.conj(v_low) @ sx @ v_high)),
                    gamma_eff=g,
                )
            )
    return out


def group_lines(transitions: list[Transition]) -> dict[int, list[Transition]]:
    groups: dict[int, list[Transition]] = {}
    for t in transitions:
        groups.setdefault(t.index, []).append(t)
    return groups


def low_field_frequency(m: float, B0, system: SpinSystem = DEFAULT_SYSTEM):
    """First-order line frequency ``(I+1/2) A + (2m+1)/(2I+1) gamma_e B0``."""
    return system.zero_field_splitting + (2 * m + 1) / (2 * system.nuclear_spin + 1) * system.gamma_e * np.asarray(B0)


def low_field_slope(index: int, system: SpinSystem = DEFAULT_SYSTEM) -> float:
    k = 2 * (index - 1) - 2 * system.nuclear_spin
    return k / (2 * system.nuclear_spin + 1) * system.gamma_e


@dataclass(frozen=True)
class ClockTransition:
    index: int
    branch: str
    field_B0: float
    frequency: float
    gamma_eff: float


def find_clock_transition(
    index: int,
    system: SpinSystem = DEFAULT_SYSTEM,
    branch: str | None = None,
    window: tuple[float, float] = (1e-4, 0.1),
    n_scan: int = 200,
    xtol: float = 1e-9,
) -> ClockTransition | None:
    """Field where d(omega)/dB0 of a line vanishes, or None if there is none."""
    branch = branch or dominant_branch(index, system)
    lo, hi = window
    if not 0 < lo < hi:
        raise ValueError("window must satisfy 0 < lo < hi")
    grid = np.linspace(lo, hi, n_scan)
    g = effective_gamma(index, grid, system, branch)
    sign_change = np.where(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]
    if len(sign_change) == 0:
        return None
    k = sign_change[0]
    root = brentq(
        lambda b: effective_gamma(index, b, system, branch), grid[k], grid[k + 1], xtol=xtol
    )
    return ClockTransition(
        index=index,
        branch=branch,
        field_B0=float(root),
        frequency=float(transition_frequency(index, root, system, branch)),
        gamma_eff=float(effective_gamma(index, root, system, branch)),
    )


def shift_from_strain(exx, eyy, ezz, system: SpinSystem = DEFAULT_SYSTEM):
    """Strain-induced line shift in Hz (common to all transitions)."""
    exx, eyy, ezz = (np.asarray(e, dtype=float) for e in (exx, eyy, ezz))
    if max(np.abs(exx).max(), np.abs(eyy).max(), np.abs(ezz).max()) >= 1e-2:
        raise ValueError("strain components must satisfy |eps_ii| < 1e-2")
    rel = system.strain_K / 3 * (exx + eyy + ezz) - system.strain_L / 2 * (
        (exx - eyy) ** 2 + (eyy - ezz) ** 2 + (ezz - exx) ** 2
    )
    return system.shift_factor * rel * system.hyperfine_A / TWO_PI


def shift_from_field(E, system: SpinSystem = DEFAULT_SYSTEM, max_field: float = 3e7):
    """Quadratic Stark shift in Hz for an electric field magnitude E (V/m)."""
    E = np.asarray(E, dtype=float)
    if np.abs(E).max() > max_field:
        raise ValueError(f"|E| exceeds the configured cap of {max_field:g} V/m")
    return system.shift_factor * system.stark_eta * E**2 * system.hyperfine_A / TWO_PI
