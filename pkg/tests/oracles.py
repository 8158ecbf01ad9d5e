"""Independent reference implementations used to check the package.

Nothing here imports bbsinglet. Operators are built from hard-coded Pauli
matrices with explicit Kronecker loops, propagators with scipy's Pade expm,
partial traces with index loops and the singlet projector from its state
vector.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.linalg import expm

SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
SY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
SZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2
ID2 = np.eye(2, dtype=complex)
AXES = {"x": SX, "y": SY, "z": SZ}


def op_on(n: int, site: int, m) -> np.ndarray:
    """m acting on ``site`` of n qubits; site 0 is the leftmost Kronecker factor."""
    out = np.array([[1.0 + 0j]])
    for k in range(n):
        out = np.kron(out, m if k == site else ID2)
    return out


def collective(n: int, sites, axis: str) -> np.ndarray:
    return sum((op_on(n, s, AXES[axis]) for s in sites), np.zeros((2**n, 2**n), dtype=complex))


def hamiltonian(n: int, offsets, couplings) -> np.ndarray:
    """2 pi sum nu_i Iz_i + 2 pi sum J (Iz Iz | I.I); couplings = [(i, j, J, form)]."""
    h = np.zeros((2**n, 2**n), dtype=complex)
    for i, nu in enumerate(offsets):
        h += 2 * np.pi * nu * op_on(n, i, SZ)
    for i, j, jc, form in couplings:
        axes = "z" if form == "weak" else "xyz"
        for a in axes:
            h += 2 * np.pi * jc * op_on(n, i, AXES[a]) @ op_on(n, j, AXES[a])
    return h


def rf_term(n: int, sites, amp_hz: float, phase: float) -> np.ndarray:
    """2 pi Omega (cos phi Ix + sin phi Iy) summed over ``sites``."""
    return 2 * np.pi * amp_hz * (np.cos(phase) * collective(n, sites, "x") + np.sin(phase) * collective(n, sites, "y"))


def propagator(h: np.ndarray, t: float) -> np.ndarray:
    return expm(-1j * h * t)


def singlet_projector(n: int, a: int, b: int) -> np.ndarray:
    """|S0><S0| on (a, b), identity on the rest, assembled basis state by basis state."""
    d = 2**n
    p = np.zeros((d, d), dtype=complex)
    for r, c in itertools.product(range(d), repeat=2):
        rb = [(r >> (n - 1 - k)) & 1 for k in range(n)]
        cb = [(c >> (n - 1 - k)) & 1 for k in range(n)]
        if any(rb[k] != cb[k] for k in range(n) if k not in (a, b)):
            continue
        # <x y|S0> = (delta_{x0,y1} - delta_{x1,y0}) / sqrt 2
        amp_r = (rb[a] == 0 and rb[b] == 1) - (rb[a] == 1 and rb[b] == 0)
        amp_c = (cb[a] == 0 and cb[b] == 1) - (cb[a] == 1 and cb[b] == 0)
        p[r, c] = amp_r * amp_c / 2
    return p


def singlet_vector() -> np.ndarray:
    return np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)


def partial_trace_loops(rho, keep, n: int) -> np.ndarray:
    """Reduced state on qubits ``keep`` (in that order) by explicit summation."""
    traced = [k for k in range(n) if k not in keep]
    dk = 2 ** len(keep)
    out = np.zeros((dk, dk), dtype=complex)

    def index(bits):
        return sum(b << (n - 1 - k) for k, b in enumerate(bits))

    for kr, kc in itertools.product(itertools.product((0, 1), repeat=len(keep)), repeat=2):
        s = 0j
        for tb in itertools.product((0, 1), repeat=len(traced)):
            br, bc = [0] * n, [0] * n
            for q, v in zip(keep, kr):
                br[q] = v
            for q, v in zip(keep, kc):
                bc[q] = v
            for q, v in zip(traced, tb):
                br[q] = v
                bc[q] = v
            s += rho[index(br), index(bc)]
        ir = sum(v << (len(keep) - 1 - i) for i, v in enumerate(kr))
        ic = sum(v << (len(keep) - 1 - i) for i, v in enumerate(kc))
        out[ir, ic] = s
    return out


def random_unitary(d: int, rng) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))[None, :]


def random_hermitian(d: int, rng) -> np.ndarray:
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (a + a.conj().T) / 2


def random_density(d: int, rng) -> np.ndarray:
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def z_count_diagonal(n: int, sites) -> np.ndarray:
    """Diagonal of sum_{i in sites} Iz_i by counting up/down bits of each basis index."""
    out = np.zeros(2**n)
    for idx in range(2**n):
        bits = [(idx >> (n - 1 - k)) & 1 for k in range(n)]
        up = sum(1 for k in sites if bits[k] == 0)
        out[idx] = (up - (len(sites) - up)) / 2
    return out


def best_q_random_unitaries(rho, p, n_samples: int, rng) -> float:
    """max over sampled Haar unitaries of Tr[U rho U^dag P]."""
    d = rho.shape[0]
    best = -np.inf
    for _ in range(n_samples):
        u = random_unitary(d, rng)
        best = max(best, np.trace(u @ rho @ u.conj().T @ p).real)
    return best


def sorted_bound(rho, p) -> float:
    a = np.sort(np.linalg.eigvalsh(rho))[::-1]
    b = np.sort(np.linalg.eigvalsh(p))[::-1]
    return float(a @ b)
