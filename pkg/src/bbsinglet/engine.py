"""Bang-bang sequences and their propagation.

Every bang on a channel subset S is the one-time propagator
X_S = exp(-i (H0 + sum_{k in S} 2 pi Omega_k Ix_k) dt) conjugated by the
diagonal phase operator Z = prod_k exp(-i phi_k Iz_k). Because H0 commutes
with every collective Iz_k, Z X_S Z^dag is exactly the propagator of the
phase-shifted bang, so no exponential is evaluated inside the optimization
loop and the phase rotation costs O(d^2) row/column scaling.

Singlet-order normalization
---------------------------
For a deviation state rho_dev, the full-mode state is 1/d + kappa rho_dev
with kappa = 1 / (d ||rho_dev||_2) (see :class:`~bbsinglet.spins.DensityState`),
so the fitness is ``Q = 1/4 + kappa Tr[rho_dev(t) P]`` with P the embedded
singlet projector. The enhancement factor compares the singlet order with
the singlet order eps_C would give under ideal carbon-only conversion::

    enhancement = Tr[rho_dev(t) P] / (2**(N-2) * eps_C)

An ideal 2-spin conversion of Zeeman order into singlet order therefore has
enhancement 1, and the value does not depend on kappa.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .operators import (
    NumericalError,
    UnitaryPropagator,
    expm_hermitian,
    max_norm,
    partial_trace,
    sorted_spectral_dot,
    spin_matrices,
    unitarity_error,
)
from .spins import (
    TWO_PI,
    DensityState,
    SpinSystem,
    collective_from_slots,
    collective_z_diagonal,
    hamiltonian_from_slots,
    READOUT_TERMS,
    singlet_order_from_Q,
    singlet_projector_from_slots,
    site_slots,
    thermal_from_slots,
    validate_z_commutation,
)
from .symmetry import reduced_blocks

THREADS_ENV = "BBSINGLET_THREADS"
_CHUNK = 32


class CommutationError(ValueError):
    """H0 does not commute with a channel's collective z rotation."""


# --- sequences -----------------------------------------------------------


def canonical_phases(phases) -> np.ndarray:
    """Wrap to [0, 2 pi) and snap to the 6-decimal degree grid of the pulse table.

    The snap makes export -> import bit-faithful.
    """
    phases = np.asarray(phases, dtype=float)
    deg = np.mod(np.rad2deg(phases), 360.0)
    uniq, inv = np.unique(deg, return_inverse=True)
    snapped = np.array([float(f"{x:.6f}") for x in uniq])
    snapped[snapped >= 360.0] = 0.0
    return np.deg2rad(snapped[inv]).reshape(phases.shape)


@dataclass(frozen=True)
class Segment:
    active: tuple[bool, ...]
    phases: tuple[float, ...]


class BBSequence:
    """Fixed-dt sequence of bangs: per segment and channel an on/off bit and a phase (rad)."""

    def __init__(self, dt: float, channels: Sequence[str], active, phases=None):
        if dt <= 0:
            raise ValueError(f"dt must be > 0, got {dt}")
        self.dt = float(dt)
        self.channels = tuple(channels)
        k = len(self.channels)
        a = np.asarray(active, dtype=bool).reshape(-1, k)
        p = np.zeros(a.shape) if phases is None else np.asarray(phases, dtype=float).reshape(a.shape)
        self.active = a
        self.phases = canonical_phases(p)
        self.active.setflags(write=False)
        self.phases.setflags(write=False)
        self._id = None

    @classmethod
    def silent(cls, n: int, dt: float, channels: Sequence[str]) -> "BBSequence":
        return cls(dt, channels, np.zeros((n, len(channels)), dtype=bool))

    @classmethod
    def from_segments(cls, dt: float, channels: Sequence[str], segments: Sequence[Segment]) -> "BBSequence":
        k = len(channels)
        active = np.array([s.active for s in segments], dtype=bool).reshape(-1, k)
        phases = np.array([s.phases for s in segments], dtype=float).reshape(-1, k)
        return cls(dt, channels, active, phases)

    @property
    def n_segments(self) -> int:
        return self.active.shape[0]

    def __len__(self):
        return self.n_segments

    @property
    def duration(self) -> float:
        return self.n_segments * self.dt

    @property
    def segments(self) -> list[Segment]:
        return [Segment(tuple(map(bool, a)), tuple(map(float, p))) for a, p in zip(self.active, self.phases)]

    @property
    def masks(self) -> np.ndarray:
        """Channel-subset index of every segment (bit k set when channel k is on)."""
        return (self.active.astype(np.int64) << np.arange(len(self.channels))).sum(axis=1)

    @property
    def id(self) -> str:
        if self._id is None:
            h = hashlib.sha256()
            h.update(repr((self.dt, self.channels)).encode())
            h.update(self.active.tobytes())
            h.update(self.phases.tobytes())
            self._id = h.hexdigest()[:16]
        return self._id

    def __eq__(self, other):
        return (
            isinstance(other, BBSequence)
            and self.dt == other.dt
            and self.channels == other.channels
            and np.array_equal(self.active, other.active)
            and np.array_equal(self.phases, other.phases)
        )

    def __hash__(self):
        return hash(self.id)

    def __repr__(self):
        return f"BBSequence(n={self.n_segments}, dt={self.dt:g}, channels={self.channels}, id={self.id})"


# --- propagator cache ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class PropagatorCache:
    """One-time propagators on a single Hilbert space.

    ``stack[m]`` holds the propagator of channel subset ``m`` (bit k for
    channel k); ``stack[0]`` is the free evolution U_delay.
    """

    dt: float
    channels: tuple[str, ...]
    amplitudes: tuple[float, ...]
    stack: np.ndarray
    iz: np.ndarray  # (K, d) diagonals of the collective Iz per channel
    delay_diagonal: np.ndarray | None = None
    key: tuple = ()

    @property
    def dim(self) -> int:
        return self.stack.shape[1]

    @property
    def u_delay(self) -> np.ndarray:
        return self.stack[0]

    @property
    def bangs(self) -> dict[frozenset, np.ndarray]:
        out = {}
        for m in range(1, self.stack.shape[0]):
            subset = frozenset(c for k, c in enumerate(self.channels) if m >> k & 1)
            out[subset] = self.stack[m]
        return out

    def z_diagonal(self, channel: str) -> np.ndarray:
        return self.iz[self.channels.index(channel)]


def build_cache(h0, ix, iz, amplitudes, dt: float, channels, key=()) -> PropagatorCache:
    """Exponentiate H0 and every channel-subset bang Hamiltonian once."""
    h0 = np.asarray(h0, dtype=complex)
    k = len(channels)
    d = h0.shape[0]
    stack = np.empty((2**k, d, d), dtype=complex)
    delay_diag = None
    if max_norm(h0 - np.diag(np.diagonal(h0))) == 0:
        delay_diag = np.exp(-1j * np.diagonal(h0).real * dt)
        stack[0] = np.diag(delay_diag)
    else:
        stack[0] = expm_hermitian(h0, dt).matrix
    for m in range(1, 2**k):
        h = h0.copy()
        for c in range(k):
            if m >> c & 1:
                h += TWO_PI * amplitudes[c] * np.asarray(ix[c])
        stack[m] = expm_hermitian(h, dt).matrix
    stack.setflags(write=False)
    iz = np.array([np.asarray(z, dtype=float) for z in iz]).reshape(k, d)
    iz.setflags(write=False)
    return PropagatorCache(float(dt), tuple(channels), tuple(float(a) for a in amplitudes),
                           stack, iz, delay_diag, key)


def _check_commutation(sys: SpinSystem) -> None:
    report = validate_z_commutation(sys)
    if not report.passed:
        raise CommutationError(
            "internal Hamiltonian does not commute with the collective z rotations; "
            "heteronuclear couplings must use the weak form\n" + str(report)
        )


def _cache_for_slots(sys: SpinSystem, slots, dt: float) -> PropagatorCache:
    labels = [c.label for c in sys.channels]
    h0 = hamiltonian_from_slots(sys, slots)
    ix = [collective_from_slots(slots, c, "x") for c in labels]
    iz = [collective_z_diagonal(slots, c) for c in labels]
    amps = [c.rf_amplitude for c in sys.channels]
    return build_cache(h0, ix, iz, amps, dt, labels, key=(sys.key(), float(dt), tuple(amps)))


@lru_cache(maxsize=2)
def _dense_cache(sys: SpinSystem, dt: float) -> PropagatorCache:
    return _cache_for_slots(sys, site_slots(sys), dt)


def precompute_propagators(sys: SpinSystem, dt: float) -> PropagatorCache:
    """Dense cache of U_delay and all 2^K - 1 bang propagators (memoized per system and dt)."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    _check_commutation(sys)
    return _dense_cache(sys, float(dt))


def _check_channels(cache: PropagatorCache, seq: BBSequence) -> None:
    if tuple(seq.channels) != cache.channels:
        raise ValueError(f"sequence channels {seq.channels} do not match cache channels {cache.channels}")
    if seq.dt != cache.dt:
        raise ValueError(f"sequence dt {seq.dt} does not match cache dt {cache.dt}")


def _phase_diagonal(cache: PropagatorCache, active, phases) -> np.ndarray:
    return np.exp(-1j * ((np.asarray(phases) * np.asarray(active)) @ cache.iz))


def segment_unitary(cache: PropagatorCache, seg: Segment) -> UnitaryPropagator:
    """Z X_S Z^dag for the active subset S, or U_delay for a silent segment."""
    active = np.asarray(seg.active, dtype=bool)
    if len(active) != len(cache.channels):
        raise ValueError("segment channel count does not match cache")
    m = int((active.astype(int) << np.arange(len(active))).sum())
    if m == 0:
        return UnitaryPropagator(cache.u_delay, cache.dt, check=False)
    z = _phase_diagonal(cache, active, seg.phases)
    u = z[:, None] * cache.stack[m] * z.conj()[None, :]
    return UnitaryPropagator(u, cache.dt, check=False)


def _apply_segments(cache: PropagatorCache, u: np.ndarray, masks: np.ndarray, active, phases) -> np.ndarray:
    """Left-multiply a batch of matrices u (P, d, d) by one segment per batch member."""
    z = _phase_diagonal(cache, active, phases)  # (P, d)
    out = np.empty_like(u)
    for m in np.unique(masks):
        idx = np.nonzero(masks == m)[0]
        if m == 0:
            if cache.delay_diagonal is not None:
                out[idx] = cache.delay_diagonal[None, :, None] * u[idx]
            else:
                out[idx] = cache.stack[0] @ u[idx]
            continue
        zi = z[idx]
        out[idx] = zi[:, :, None] * (cache.stack[m] @ (zi.conj()[:, :, None] * u[idx]))
    return out


def _apply_segments_right(cache: PropagatorCache, r: np.ndarray, masks: np.ndarray, active, phases) -> np.ndarray:
    """Right-multiply a batch of row blocks r (P, k, d) by one segment per batch member."""
    z = _phase_diagonal(cache, active, phases)
    out = np.empty_like(r)
    for m in np.unique(masks):
        idx = np.nonzero(masks == m)[0]
        if m == 0:
            if cache.delay_diagonal is not None:
                out[idx] = r[idx] * cache.delay_diagonal[None, None, :]
            else:
                out[idx] = r[idx] @ cache.stack[0]
            continue
        zi = z[idx][:, None, :]
        out[idx] = ((r[idx] * zi) @ cache.stack[m]) * zi.conj()
    return out


def sequence_unitary(cache: PropagatorCache, seq: BBSequence, tol: float = 1e-8) -> UnitaryPropagator:
    """Ordered product U_N ... U_2 U_1 of the segment propagators."""
    _check_channels(cache, seq)
    u = np.eye(cache.dim, dtype=complex)[None]
    masks = seq.masks
    for n in range(seq.n_segments):
        u = _apply_segments(cache, u, masks[n:n + 1], seq.active[n:n + 1], seq.phases[n:n + 1])
    return UnitaryPropagator(u[0], seq.duration, tol=tol)


# --- trajectories and fitness -------------------------------------------


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    q_values: np.ndarray | None = None
    enhancement: np.ndarray | None = None
    expectations: np.ndarray | None = None  # (n_records, n_observables)


@dataclass(frozen=True, eq=False)
class Block:
    multiplicity: int
    cache: PropagatorCache
    rho: np.ndarray
    projector: np.ndarray

    @property
    def range_basis(self) -> np.ndarray:
        """Orthonormal basis V of the projector's range (P = V V^dag)."""
        w, v = np.linalg.eigh(self.projector)
        return v[:, w > 0.5]

    @property
    def rho_is_diagonal(self) -> bool:
        return np.count_nonzero(self.rho) == np.count_nonzero(np.diagonal(self.rho))


def _batched_trace(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Tr[A_p B] for a batch A (P, d, d)
    return np.einsum("pij,ji->p", a, b)


def _conj_batch(u: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return (u @ rho) @ np.conj(np.swapaxes(u, -1, -2))


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(eq=False)
class ControlProblem:
    """Everything needed to score BB sequences on one spin system.

    ``blocks`` is either one dense block or the total-spin blocks of
    :func:`~bbsinglet.symmetry.reduced_blocks`; all traces are weighted by
    block multiplicity.
    """

    system: SpinSystem
    dt: float
    blocks: list[Block]
    polarizations: dict[str, float]
    eps_ref: float
    normalizer: float  # 1/kappa = d ||rho_dev||_2, inf for a zero deviation
    singlet_order: float = 0.0
    reduced: bool = True
    _layouts: list = field(default_factory=list, repr=False)

    @property
    def channels(self) -> tuple[str, ...]:
        return self.blocks[0].cache.channels

    @property
    def dim(self) -> int:
        return self.system.dim

    @property
    def ancilla_dim(self) -> int:
        return 2 ** (self.system.n_spins - 2)

    @property
    def kappa(self) -> float:
        with np.errstate(over="ignore"):
            return float(np.float64(1.0) / self.normalizer)

    def q_from_raw(self, raw):
        return 0.25 + np.asarray(raw) / self.normalizer

    def enhancement_from_raw(self, raw):
        if self.eps_ref == 0:
            raise ValueError("reference polarization of the singlet-pair species is zero")
        return np.asarray(raw) / (self.ancilla_dim * self.eps_ref)

    # spectra of the full-mode state and of P, with multiplicities
    def spectra(self) -> tuple[np.ndarray, np.ndarray]:
        lr, lp = [], []
        for b in self.blocks:
            r = np.linalg.eigvalsh(b.rho)
            p = np.linalg.eigvalsh(b.projector)
            lr.append(np.repeat(1.0 / self.dim + r / self.normalizer, b.multiplicity))
            lp.append(np.repeat(p, b.multiplicity))
        return np.concatenate(lr), np.concatenate(lp)

    def ceiling_q(self, restricted: bool = False) -> float:
        """Majorization bound on Q over all unitaries.

        With ``restricted`` the bound is taken block by block, i.e. over the
        unitaries that respect the permutation symmetry of equivalent spins,
        which are the only ones collective RF can generate.
        """
        if not restricted:
            lr, lp = self.spectra()
            return sorted_spectral_dot(lr, lp)
        total = 0.0
        for b in self.blocks:
            r = 1.0 / self.dim + np.linalg.eigvalsh(b.rho) / self.normalizer
            total += b.multiplicity * sorted_spectral_dot(r, np.linalg.eigvalsh(b.projector))
        return total

    def ceiling_enhancement(self, restricted: bool = False) -> float:
        if math.isinf(self.normalizer):
            return 0.0
        return float(self.enhancement_from_raw((self.ceiling_q(restricted) - 0.25) * self.normalizer))

    def with_state(self, polarizations: Mapping[str, float], singlet_order: float = 0.0) -> "ControlProblem":
        """Same propagators, new initial state (Zeeman polarizations plus singlet order).

        ``singlet_order`` is in enhancement units: propagating with the
        identity gives that enhancement.
        """
        return _assemble(self.system, self.dt, self._layouts, [b.cache for b in self.blocks],
                         polarizations, singlet_order, self.eps_ref, self.reduced)

    def evaluate(self, population: Sequence[BBSequence], workers: int | None = None) -> np.ndarray:
        """Raw fitness Tr[U rho_dev U^dag P] for each sequence (deterministic for any worker count)."""
        if not population:
            return np.zeros(0)
        for s in population:
            if s.channels != self.channels or s.dt != self.dt:
                raise ValueError("sequence does not match the problem's channels or dt")
        chunks = [population[i:i + _CHUNK] for i in range(0, len(population), _CHUNK)]
        workers = workers or thread_count()
        if workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(self._evaluate_chunk, chunks))
        else:
            parts = [self._evaluate_chunk(c) for c in chunks]
        return np.concatenate(parts)

    def _evaluate_chunk(self, seqs: Sequence[BBSequence]) -> np.ndarray:
        # Tr[U rho U^dag P] = Tr[R rho R^dag] with R = V^dag U and P = V V^dag,
        # so only the rank(P) = d/4 rows of R are propagated (backwards in time).
        lengths = {s.n_segments for s in seqs}
        if len(lengths) != 1:
            return np.array([self._evaluate_chunk([s])[0] for s in seqs])
        masks = np.stack([s.masks for s in seqs])
        active = np.stack([s.active for s in seqs])
        phases = np.stack([s.phases for s in seqs])
        n = masks.shape[1]
        total = np.zeros(len(seqs))
        for b in self.blocks:
            v = b.range_basis
            r = np.broadcast_to(v.conj().T, (len(seqs),) + v.T.shape).copy()
            for k in range(n - 1, -1, -1):
                r = _apply_segments_right(b.cache, r, masks[:, k], active[:, k], phases[:, k])
            if b.rho_is_diagonal:
                vals = np.einsum("pji,i->p", np.abs(r) ** 2, np.diagonal(b.rho).real)
            else:
                vals = np.einsum("pji,pji->p", r @ b.rho, r.conj()).real
            total += b.multiplicity * vals
        return total

    def fitness(self, seq: BBSequence) -> float:
        """Full-mode Q of one sequence."""
        return float(self.q_from_raw(self.evaluate([seq])[0]))

    def trajectory(self, seq: BBSequence, stride: int = 1) -> TrajectoryRecord:
        """Q(t) and enhancement(t) recorded every ``stride`` segments, starting at t = 0."""
        if stride < 1:
            raise ValueError("stride must be >= 1")
        states = [b.rho.astype(complex)[None] for b in self.blocks]
        masks = seq.masks
        times, raws = [], []

        def record(t):
            raw = sum(b.multiplicity * _batched_trace(r, b.projector)[0].real for b, r in zip(self.blocks, states))
            times.append(t)
            raws.append(raw)

        record(0.0)
        for n in range(seq.n_segments):
            for i, b in enumerate(self.blocks):
                u = _apply_segments(b.cache, np.eye(b.cache.dim, dtype=complex)[None], masks[n:n + 1],
                                    seq.active[n:n + 1], seq.phases[n:n + 1])
                states[i] = _conj_batch(u, states[i])
            if (n + 1) % stride == 0 or n + 1 == seq.n_segments:
                record((n + 1) * seq.dt)
        raws = np.array(raws)
        return TrajectoryRecord(np.array(times), self.q_from_raw(raws), self.enhancement_from_raw(raws))


def _assemble(sys, dt, layouts, caches, polarizations, singlet_order, eps_ref, reduced) -> ControlProblem:
    blocks = []
    norms = []
    for (mult, slots), cache in zip(layouts, caches):
        p = singlet_projector_from_slots(sys, slots)
        rho = thermal_from_slots(slots, polarizations)
        if singlet_order:
            # deviation (P - 1/4) carries Tr[. P] = 3/4 per ancilla state
            rho = rho + (4.0 / 3.0) * singlet_order * eps_ref * (p - np.eye(p.shape[0]) / 4)
        rho.setflags(write=False)
        p.setflags(write=False)
        blocks.append(Block(mult, cache, rho, p))
        norms.append(DensityState(rho, check=False).spectral_norm)
    nrm = max(norms) if norms else 0.0
    normalizer = math.inf if nrm == 0 else sys.dim * nrm
    return ControlProblem(sys, float(dt), blocks, dict(polarizations), eps_ref, normalizer,
                          singlet_order, reduced, list(layouts))


def build_problem(sys: SpinSystem, dt: float, polarizations: Mapping[str, float],
                  reduce: bool = True, singlet_order: float = 0.0) -> ControlProblem:
    """Propagators plus thermal state and singlet projector, optionally symmetry-reduced."""
    if sys.singlet_pair is None:
        raise ValueError("spin system has no singlet pair")
    missing = [c.label for c in sys.channels if c.label not in polarizations]
    if missing:
        raise KeyError(f"no polarization given for species {missing}")
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    _check_commutation(sys)
    if reduce:
        layouts = reduced_blocks(sys)
        caches = [_cache_for_slots(sys, slots, dt) for _, slots in layouts]
    else:
        layouts = [(1, site_slots(sys))]
        caches = [_dense_cache(sys, float(dt))]
    eps_ref = float(polarizations[sys.sites[sys.singlet_pair[0]].species])
    return _assemble(sys, dt, layouts, caches, polarizations, singlet_order, eps_ref, reduce)


def _deviation(rho) -> tuple[np.ndarray, float]:
    """(deviation matrix, 1/kappa) for a DensityState or raw full-mode matrix."""
    if isinstance(rho, DensityState):
        if rho.mode == DensityState.DEVIATION:
            return rho.matrix, rho.normalizer
        m = rho.matrix
    else:
        m = np.asarray(rho, dtype=complex)
    return m - np.eye(m.shape[0]) / m.shape[0], 1.0


def propagate_state(cache: PropagatorCache, seq: BBSequence, rho, observables=(), stride: int = 1,
                    projector=None, eps_ref: float | None = None) -> TrajectoryRecord:
    """Apply the segments to rho in turn, recording Tr[rho(t) O] every ``stride`` segments.

    When ``projector`` is given, Q(t) is recorded too (deviation states are
    read in full mode), and with ``eps_ref`` also the enhancement factor.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    _check_channels(cache, seq)
    dev, normalizer = _deviation(rho)
    obs = [np.asarray(o) for o in observables]
    for o in obs:
        if o.shape != dev.shape:
            raise ValueError(f"observable shape {o.shape} does not match state {dev.shape}")
    p = None if projector is None else np.asarray(projector)
    full_mode = not isinstance(rho, DensityState) or rho.mode == DensityState.FULL
    state = np.array(rho if full_mode else dev, dtype=complex)[None]
    d = dev.shape[0]
    times, vals, raws = [], [], []

    def record(t):
        times.append(t)
        vals.append([_batched_trace(state, o)[0].real for o in obs])
        if p is not None:
            raws.append(_batched_trace(state, p)[0].real - (np.trace(p).real / d if full_mode else 0.0))

    record(0.0)
    masks = seq.masks
    for n in range(seq.n_segments):
        u = _apply_segments(cache, np.eye(d, dtype=complex)[None], masks[n:n + 1],
                            seq.active[n:n + 1], seq.phases[n:n + 1])
        state = _conj_batch(u, state)
        if (n + 1) % stride == 0 or n + 1 == seq.n_segments:
            record((n + 1) * seq.dt)
    rec = TrajectoryRecord(np.array(times), expectations=np.array(vals).reshape(len(times), len(obs)))
    if p is not None:
        raws = np.array(raws)
        rec.q_values = 0.25 + raws / normalizer
        if eps_ref is not None:
            rec.enhancement = raws / ((d // 4) * eps_ref) if not full_mode else None
    return rec


def fitness(chrom: BBSequence, cache: PropagatorCache, rho0, projector) -> float:
    """Full-mode Q = Tr[U rho0 U^dag P] of one sequence on a dense cache."""
    _check_channels(cache, chrom)
    dev, normalizer = _deviation(rho0)
    u = sequence_unitary(cache, chrom).matrix
    raw = _batched_trace(_conj_batch(u[None], dev), np.asarray(projector))[0].real
    return float(0.25 + raw / normalizer)


def readout_amplitude(rho, sys: SpinSystem) -> float:
    """-Tr[rho_pair (Iz^a Iy^b - Iy^a Iz^b + Ix^a Ix^b)] after tracing out all other spins."""
    if isinstance(rho, DensityState):
        rho = rho.to_full().matrix
    rho = np.asarray(rho)
    if rho.shape[0] != sys.dim:
        raise ValueError("state dimension does not match the spin system")
    a, b = sys.singlet_pair
    red = partial_trace(rho, [a, b])
    ops = spin_matrices(0.5)
    r = sum(c * np.kron(ops["xyz".index(p)], ops["xyz".index(q)]) for c, p, q in READOUT_TERMS)
    val = np.sum(red * r.T)
    if abs(val.imag) > 1e-10:
        raise NumericalError("readout expectation has an imaginary part")
    return float(-val.real)


def enhancement_from_q(q: float, kappa: float, n_spins: int, eps_ref: float) -> float:
    """Enhancement factor for a full-mode Q obtained with deviation scale kappa."""
    eps_s = singlet_order_from_Q(q)
    eps_ref_s = (4.0 / 3.0) * kappa * 2 ** (n_spins - 2) * eps_ref
    return eps_s / eps_ref_s


def check_unitary(u, tol: float = 1e-8) -> float:
    err = unitarity_error(u)
    if err >= tol:
        raise NumericalError(f"accumulated unitarity error {err:.3e}")
    return err
