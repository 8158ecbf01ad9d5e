"""Spin-system description and the operators derived from it.

A :class:`SpinSystem` holds spin-1/2 sites grouped into RF channels (nuclear
species), rotating-frame offsets and J couplings. The builders below produce
the internal Hamiltonian, collective spin operators, the thermal deviation
state and the singlet projector of the designated spin pair.

Internally every builder works on a list of :class:`Slot` objects. A slot is
either one site (spin 1/2) or a block of magnetically equivalent sites
represented by a total-spin quantum number; the dense builders use one slot
per site, the symmetry-reduced engine uses grouped slots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .operators import (
    TOL,
    HermitianOperator,
    embed,
    embed_diagonal,
    embed_product,
    max_norm,
    spin_matrices,
)

TWO_PI = 2.0 * np.pi
MAX_SPINS = 12

WEAK = "weak"
ISOTROPIC = "isotropic"


@dataclass(frozen=True)
class SpeciesChannel:
    label: str
    relative_gamma: float = 1.0
    rf_amplitude: float = 0.0  # nutation frequency Omega/2pi in Hz

    def __post_init__(self):
        if self.relative_gamma <= 0:
            raise ValueError(f"{self.label}: relative_gamma must be > 0")
        if self.rf_amplitude < 0:
            raise ValueError(f"{self.label}: rf_amplitude must be >= 0")


@dataclass(frozen=True)
class SpinSite:
    index: int
    species: str
    offset: float = 0.0  # Hz from the channel carrier
    label: str = ""


@dataclass(frozen=True)
class Coupling:
    j: float  # Hz
    form: str = WEAK

    def __post_init__(self):
        if self.form not in (WEAK, ISOTROPIC):
            raise ValueError(f"unknown coupling form {self.form!r}")


class CouplingTable:
    """Symmetric (i, j) -> :class:`Coupling` map without self-couplings."""

    def __init__(self, entries: Mapping | None = None):
        self._entries: dict[tuple[int, int], Coupling] = {}
        for (i, j), c in (entries or {}).items():
            self.set(i, j, c)

    def set(self, i: int, j: int, coupling) -> None:
        if i == j:
            raise ValueError(f"self-coupling on site {i}")
        if not isinstance(coupling, Coupling):
            coupling = Coupling(float(coupling))
        self._entries[(min(i, j), max(i, j))] = coupling

    def get(self, i: int, j: int) -> Coupling | None:
        return self._entries.get((min(i, j), max(i, j)))

    def items(self):
        return sorted(self._entries.items())

    def __len__(self):
        return len(self._entries)

    def key(self) -> tuple:
        return tuple((k, c.j, c.form) for k, c in self.items())


@dataclass(frozen=True, eq=False)
class SpinSystem:
    sites: tuple[SpinSite, ...]
    channels: tuple[SpeciesChannel, ...]
    couplings: CouplingTable = field(default_factory=CouplingTable)
    singlet_pair: tuple[int, int] | None = None
    max_spins: int | None = MAX_SPINS

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "channels", tuple(self.channels))
        if [s.index for s in self.sites] != list(range(len(self.sites))):
            raise ValueError("site indices must be 0..N-1 in order")
        if self.max_spins is not None and len(self.sites) > self.max_spins:
            raise ValueError(
                f"{len(self.sites)} spins exceeds the dense cap of {self.max_spins} "
                f"(dimension {2 ** len(self.sites)})"
            )
        labels = [c.label for c in self.channels]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate channel labels")
        for s in self.sites:
            if s.species not in labels:
                raise ValueError(f"site {s.index} refers to unknown species {s.species!r}")
        n = len(self.sites)
        for (i, j), _ in self.couplings.items():
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"coupling ({i}, {j}) refers to a missing site")
        if self.singlet_pair is not None:
            a, b = self.singlet_pair
            if a == b or not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"invalid singlet pair {self.singlet_pair}")
            if self.sites[a].species != self.sites[b].species:
                raise ValueError("singlet pair sites must share the same species")

    @property
    def n_spins(self) -> int:
        return len(self.sites)

    @property
    def dim(self) -> int:
        return 2 ** len(self.sites)

    def channel(self, label: str) -> SpeciesChannel:
        for c in self.channels:
            if c.label == label:
                return c
        raise KeyError(f"unknown species {label!r}")

    def sites_of(self, species: str) -> list[int]:
        return [s.index for s in self.sites if s.species == species]

    def key(self) -> tuple:
        return (
            tuple((s.species, s.offset) for s in self.sites),
            tuple((c.label, c.relative_gamma, c.rf_amplitude) for c in self.channels),
            self.couplings.key(),
            self.singlet_pair,
        )

    def __hash__(self):
        return hash(self.key())

    def __eq__(self, other):
        return isinstance(other, SpinSystem) and self.key() == other.key()


class DensityState:
    """Density operator in full (unit trace) or deviation (traceless) mode.

    Deviation states carry relative polarizations (the epsilon_C = 1
    convention). ``to_full`` reconstructs the most polarized valid density
    matrix along the deviation direction, 1/d + kappa * dev with
    kappa = 1 / (d * ||dev||_2), so that every full-mode quantity lies in
    the physical range. Ratios of order parameters do not depend on kappa.
    """

    FULL = "full"
    DEVIATION = "deviation"

    def __init__(self, matrix, mode: str = DEVIATION, spectral_norm: float | None = None,
                 check: bool = True):
        m = np.asarray(matrix, dtype=complex)
        if mode not in (self.FULL, self.DEVIATION):
            raise ValueError(f"unknown mode {mode!r}")
        if check:
            if max_norm(m - m.conj().T) >= TOL.hermitian * max(1.0, max_norm(m)):
                raise ValueError("density matrix is not Hermitian")
            tr = np.trace(m).real
            if mode == self.FULL:
                if abs(tr - 1) >= TOL.trace:
                    raise ValueError(f"full-mode state must have unit trace, got {tr}")
                if m.shape[0] <= 1024 and np.linalg.eigvalsh(m).min() < -TOL.positivity:
                    raise ValueError("full-mode state has negative eigenvalues")
            elif abs(tr) >= TOL.trace * max(1.0, max_norm(m)):
                raise ValueError(f"deviation-mode state must be traceless, got trace {tr}")
        m.setflags(write=False)
        self.matrix = m
        self.mode = mode
        self._norm = spectral_norm

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    @property
    def spectral_norm(self) -> float:
        if self._norm is None:
            d = np.diagonal(self.matrix)
            if np.count_nonzero(self.matrix) == np.count_nonzero(d):
                self._norm = float(np.max(np.abs(d))) if d.size else 0.0
            else:
                self._norm = float(np.max(np.abs(np.linalg.eigvalsh(self.matrix))))
        return self._norm

    @property
    def normalizer(self) -> float:
        """1/kappa, i.e. d * ||dev||_2 (inf for a zero deviation, 1 in full mode).

        Dividing by it instead of multiplying by kappa stays finite for
        deviations so small that kappa itself overflows.
        """
        if self.mode == self.FULL:
            return 1.0
        nrm = self.spectral_norm
        return math.inf if nrm == 0 else self.dim * nrm

    @property
    def scale(self) -> float:
        """kappa used by :meth:`to_full` (0 for a zero deviation)."""
        with np.errstate(over="ignore"):
            return float(np.float64(1.0) / self.normalizer)

    def to_full(self) -> "DensityState":
        if self.mode == self.FULL:
            return self
        d = self.dim
        # divide real and imaginary parts as reals: complex division by a
        # subnormal normalizer goes through 1/c and overflows
        dev = (np.ascontiguousarray(self.matrix).view(np.float64) / self.normalizer).view(complex)
        full = np.eye(d) / d + dev
        return DensityState(full, self.FULL, check=False)


# --- slot machinery ------------------------------------------------------


@dataclass(frozen=True)
class Slot:
    """A tensor factor: one site, or several equivalent sites at total spin ``spin``."""

    sites: tuple[int, ...]
    spin: float
    species: str
    offset: float

    @property
    def dim(self) -> int:
        return int(round(2 * self.spin)) + 1


def site_slots(sys: SpinSystem) -> list[Slot]:
    return [Slot((s.index,), 0.5, s.species, s.offset) for s in sys.sites]


def _slot_of(slots, site: int) -> int:
    for k, sl in enumerate(slots):
        if site in sl.sites:
            return k
    raise KeyError(site)


def slot_operators(slots, k: int):
    return spin_matrices(slots[k].spin)


def hamiltonian_from_slots(sys: SpinSystem, slots) -> np.ndarray:
    """Internal Hamiltonian (rad/s) on a slot layout."""
    dims = [sl.dim for sl in slots]
    d = int(np.prod(dims))
    diag = np.zeros(d)
    dense = None
    for k, sl in enumerate(slots):
        sz = np.diag(spin_matrices(sl.spin)[2]).real
        diag += TWO_PI * sl.offset * embed_diagonal(sz, k, dims)
    # couplings between slots, and within grouped slots
    seen = set()
    for (i, j), c in sys.couplings.items():
        if c.j == 0:
            continue
        a, b = _slot_of(slots, i), _slot_of(slots, j)
        pair = (min(a, b), max(a, b))
        if pair in seen:
            continue  # equivalent members share one collective term
        seen.add(pair)
        w = TWO_PI * c.j
        if a == b:
            sl = slots[a]
            n = len(sl.sites)
            sz = np.diag(spin_matrices(sl.spin)[2]).real
            if c.form == WEAK:
                # sum_{i<j} Iz_i Iz_j = (Sz^2 - n/4) / 2
                diag += w * embed_diagonal((sz**2 - n / 4) / 2, a, dims)
            else:
                # sum_{i<j} I_i.I_j = (S(S+1) - 3n/4) / 2
                diag += w * (sl.spin * (sl.spin + 1) - 0.75 * n) / 2
            continue
        sza = np.diag(spin_matrices(slots[a].spin)[2]).real
        szb = np.diag(spin_matrices(slots[b].spin)[2]).real
        diag += w * embed_diagonal(sza, a, dims) * embed_diagonal(szb, b, dims)
        if c.form == ISOTROPIC:
            xa, ya, _ = spin_matrices(slots[a].spin)
            xb, yb, _ = spin_matrices(slots[b].spin)
            flip = embed_product({a: xa, b: xb}, dims) + embed_product({a: ya, b: yb}, dims)
            dense = w * flip if dense is None else dense + w * flip
    h = np.diag(diag).astype(complex)
    if dense is not None:
        h = h + dense
    return h


def collective_from_slots(slots, species: str, axis: str) -> np.ndarray:
    ax = "xyz".index(axis)
    dims = [sl.dim for sl in slots]
    d = int(np.prod(dims))
    out = np.zeros((d, d), dtype=complex)
    for k, sl in enumerate(slots):
        if sl.species == species:
            if ax == 2:
                out[np.diag_indices(d)] += embed_diagonal(np.diag(spin_matrices(sl.spin)[2]).real, k, dims)
            else:
                out += embed(spin_matrices(sl.spin)[ax], k, dims)
    return out


def collective_z_diagonal(slots, species: str) -> np.ndarray:
    dims = [sl.dim for sl in slots]
    out = np.zeros(int(np.prod(dims)))
    for k, sl in enumerate(slots):
        if sl.species == species:
            out += embed_diagonal(np.diag(spin_matrices(sl.spin)[2]).real, k, dims)
    return out


def thermal_from_slots(slots, polarizations: Mapping[str, float]) -> np.ndarray:
    dims = [sl.dim for sl in slots]
    diag = np.zeros(int(np.prod(dims)))
    for k, sl in enumerate(slots):
        eps = polarizations[sl.species]
        if eps:
            diag += eps * embed_diagonal(np.diag(spin_matrices(sl.spin)[2]).real, k, dims)
    return np.diag(diag).astype(complex)


def pair_operator_from_slots(sys: SpinSystem, slots, terms) -> np.ndarray:
    """sum_c c * O_a(first) O_b(second) on the singlet pair; ``terms`` = [(c, ax_a, ax_b)]."""
    if sys.singlet_pair is None:
        raise ValueError("spin system has no singlet pair")
    a, b = (_slot_of(slots, s) for s in sys.singlet_pair)
    if len(slots[a].sites) != 1 or len(slots[b].sites) != 1:
        raise ValueError("singlet pair sites must be individual slots")
    dims = [sl.dim for sl in slots]
    sa = spin_matrices(0.5)
    out = 0
    for c, xa, xb in terms:
        out = out + c * embed_product({a: sa["xyz".index(xa)], b: sa["xyz".index(xb)]}, dims)
    return np.asarray(out, dtype=complex)


def singlet_projector_from_slots(sys: SpinSystem, slots) -> np.ndarray:
    # |S0><S0| = 1/4 - I_a . I_b for two spins-1/2
    d = int(np.prod([sl.dim for sl in slots]))
    dot = pair_operator_from_slots(sys, slots, [(1.0, "x", "x"), (1.0, "y", "y"), (1.0, "z", "z")])
    return np.eye(d) / 4 - dot


READOUT_TERMS = [(1.0, "z", "y"), (-1.0, "y", "z"), (1.0, "x", "x")]


# --- public builders -----------------------------------------------------


def build_collective_operator(sys: SpinSystem, species, axis: str) -> HermitianOperator:
    """Sum over all sites of ``species`` of the spin-1/2 operator along ``axis``."""
    label = species.label if isinstance(species, SpeciesChannel) else species
    sys.channel(label)
    if axis not in ("x", "y", "z"):
        raise ValueError(f"axis must be x, y or z, got {axis!r}")
    return HermitianOperator(collective_from_slots(site_slots(sys), label, axis))


def build_internal_hamiltonian(sys: SpinSystem) -> HermitianOperator:
    """H0 = sum_i 2 pi nu_i Iz_i + coupling terms, in rad/s."""
    return HermitianOperator(hamiltonian_from_slots(sys, site_slots(sys)), units="rad/s")


def build_thermal_state(sys: SpinSystem, polarizations: Mapping[str, float]) -> DensityState:
    """Deviation state sum_k eps_k sum_{j in k} Iz_j."""
    missing = [c.label for c in sys.channels if c.label not in polarizations]
    if missing:
        raise KeyError(f"no polarization given for species {missing}")
    m = thermal_from_slots(site_slots(sys), polarizations)
    norm = sum(abs(polarizations[c.label]) * len(sys.sites_of(c.label)) / 2 for c in sys.channels)
    return DensityState(m, DensityState.DEVIATION, spectral_norm=norm, check=False)


def build_singlet_projector(sys: SpinSystem) -> HermitianOperator:
    """|S0><S0| on the singlet pair tensored with the identity elsewhere."""
    return HermitianOperator(singlet_projector_from_slots(sys, site_slots(sys)))


def build_readout_operator(sys: SpinSystem) -> HermitianOperator:
    """I_z^a I_y^b - I_y^a I_z^b + I_x^a I_x^b on the singlet pair (a, b)."""
    return HermitianOperator(pair_operator_from_slots(sys, site_slots(sys), READOUT_TERMS))


@dataclass
class CommutationReport:
    passed: bool
    norms: dict[str, float]
    offending: list[tuple[int, int]]

    def __str__(self):
        lines = [f"z-commutation: {'PASS' if self.passed else 'FAIL'}"]
        for k, v in self.norms.items():
            lines.append(f"  ||[H0, exp(-i pi/2 Iz({k}))]||_max = {v:.3e}")
        for i, j in self.offending:
            lines.append(f"  offending coupling ({i}, {j}): use the weak form for heteronuclear pairs")
        return "\n".join(lines)


def _commutator_with_diag(h: np.ndarray, z: np.ndarray) -> float:
    # [H, Z] for diagonal Z: H_ij (z_j - z_i)
    return max_norm(h * (z[None, :] - z[:, None]))


def validate_z_commutation(sys: SpinSystem, tol: float = 1e-9) -> CommutationReport:
    """Check that H0 commutes with every channel's collective z rotation."""
    slots = site_slots(sys)
    h0 = hamiltonian_from_slots(sys, slots)
    norms = {}
    for c in sys.channels:
        z = np.exp(-1j * (np.pi / 2) * collective_z_diagonal(slots, c.label))
        norms[c.label] = _commutator_with_diag(h0, z)
    offending = []
    for (i, j), cp in sys.couplings.items():
        if cp.form == ISOTROPIC and cp.j != 0 and sys.sites[i].species != sys.sites[j].species:
            offending.append((i, j))
    passed = all(v < tol for v in norms.values())
    return CommutationReport(passed, norms, offending)


def singlet_order_from_Q(q: float) -> float:
    """Invert Q = (3 eps_S + 1) / 4."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"Q must lie in [0, 1], got {q}")
    return (4.0 * q - 1.0) / 3.0
