"""Dense complex-matrix kernel used by every other module.

Tensor ordering convention: spin index 0 is the most significant qubit of the
Zeeman product basis, i.e. operators are embedded with ``np.kron`` in site
order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np


class NumericalError(ArithmeticError):
    """Raised when a numerical invariant is violated beyond tolerance."""


@dataclass(frozen=True)
class Tolerances:
    hermitian: float = 1e-12
    unitary: float = 1e-10
    phase_modulus: float = 1e-12
    imaginary_residue: float = 1e-10
    trace: float = 1e-12
    positivity: float = 1e-10


TOL = Tolerances()


def max_norm(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def is_hermitian(m, tol: float = TOL.hermitian) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and max_norm(m - m.conj().T) < tol


def _square(m, name: str = "matrix") -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


class HermitianOperator:
    """Hermitian matrix, checked at construction.

    ``units`` is informational: ``"rad/s"`` for Hamiltonians, ``""`` for
    observables.
    """

    __array_priority__ = 10

    def __init__(self, matrix, units: str = "", tol: float = TOL.hermitian):
        m = _square(matrix)
        if not np.isfinite(m).all():
            raise NumericalError("operator has non-finite entries")
        err = max_norm(m - m.conj().T)
        if err >= tol * max(1.0, max_norm(m)):
            raise ValueError(f"operator is not Hermitian (max |M - M^dag| = {err:.3e})")
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        self.matrix = m
        self.units = units

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    def __repr__(self):
        return f"HermitianOperator(dim={self.dim}, units={self.units!r})"


class UnitaryPropagator:
    """Unitary matrix together with the evolution time it represents."""

    __array_priority__ = 10

    def __init__(self, matrix, duration: float = 0.0, tol: float = TOL.unitary, check: bool = True):
        m = _square(matrix)
        if check:
            err = unitarity_error(m)
            if err >= tol:
                raise NumericalError(f"propagator is not unitary (max |U^dag U - 1| = {err:.3e})")
        m.setflags(write=False)
        self.matrix = m
        self.duration = float(duration)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    def __matmul__(self, other):
        if isinstance(other, UnitaryPropagator):
            return UnitaryPropagator(self.matrix @ other.matrix, self.duration + other.duration, check=False)
        return self.matrix @ np.asarray(other)

    def __repr__(self):
        return f"UnitaryPropagator(dim={self.dim}, duration={self.duration:g})"


class DiagonalPhaseOperator:
    """Diagonal unitary stored as its diagonal, e.g. exp(-i phi I_z)."""

    def __init__(self, diagonal, tol: float = TOL.phase_modulus):
        d = np.asarray(diagonal, dtype=complex).ravel()
        if d.size and np.max(np.abs(np.abs(d) - 1.0)) >= tol:
            raise ValueError("diagonal phase operator entries must have unit modulus")
        d.setflags(write=False)
        self.diagonal = d

    @classmethod
    def from_generator(cls, generator_diag, phi: float) -> "DiagonalPhaseOperator":
        """exp(-i phi G) for a real diagonal generator G."""
        return cls(np.exp(-1j * phi * np.asarray(generator_diag, dtype=float)))

    @property
    def dim(self) -> int:
        return self.diagonal.size

    def conjugate(self, a) -> np.ndarray:
        """Z A Z^dag by row and column scaling."""
        z = self.diagonal
        return z[:, None] * np.asarray(a) * z.conj()[None, :]

    def __array__(self, dtype=None, copy=None):
        m = np.diag(self.diagonal)
        return m if dtype is None else m.astype(dtype)


def unitarity_error(u) -> float:
    u = np.asarray(u)
    return max_norm(u.conj().T @ u - np.eye(u.shape[0]))


def expm_hermitian(h, t: float) -> UnitaryPropagator:
    """exp(-i H t) through the eigendecomposition of H.

    Exact up to eigensolver error for Hermitian input, which keeps the
    result unitary to ~1e-14 regardless of ||H t||.
    """
    if t < 0:
        raise ValueError(f"evolution time must be non-negative, got {t}")
    if not isinstance(h, HermitianOperator):
        h = HermitianOperator(h)
    m = h.matrix
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigendecomposition failed for dim={m.shape[0]}, "
            f"||H||_max={max_norm(m):.3e}, finite={np.isfinite(m).all()}"
        ) from exc
    u = (v * np.exp(-1j * w * t)[None, :]) @ v.conj().T
    return UnitaryPropagator(u, duration=t)


def conjugate(u, a) -> np.ndarray:
    """U A U^dag."""
    u = np.asarray(u)
    a = np.asarray(a)
    if u.shape != a.shape or u.ndim != 2:
        raise ValueError(f"dimension mismatch: U {u.shape} vs A {a.shape}")
    return u @ a @ u.conj().T


def expectation(rho, o, tol: float = TOL.imaginary_residue) -> float:
    """Tr[rho O] for Hermitian rho and O, returned as a real number."""
    rho = np.asarray(rho)
    o = np.asarray(o)
    if rho.shape != o.shape:
        raise ValueError(f"dimension mismatch: rho {rho.shape} vs O {o.shape}")
    # Tr[rho O] = sum_ij rho_ij O_ji without forming the product
    val = np.sum(rho * o.T)
    if abs(val.imag) >= tol:
        raise NumericalError(f"Tr[rho O] has imaginary residue {val.imag:.3e}; inputs not Hermitian?")
    return float(val.real)


def partial_trace(rho, keep, dims=None) -> np.ndarray:
    """Reduced density matrix on the subsystems listed in ``keep``.

    ``dims`` gives the local dimension of each subsystem (default: qubits).
    The kept subsystems are returned in the order given by ``keep``.
    """
    rho = np.asarray(rho)
    if dims is None:
        n = int(round(np.log2(rho.shape[0])))
        if 2**n != rho.shape[0]:
            raise ValueError(f"dimension {rho.shape[0]} is not a power of 2")
        dims = [2] * n
    dims = list(dims)
    n = len(dims)
    keep = list(keep)
    if len(set(keep)) != len(keep) or any(not 0 <= k < n for k in keep):
        raise ValueError(f"invalid subsystem indices {keep} for {n} subsystems")
    if int(np.prod(dims)) != rho.shape[0]:
        raise ValueError("dims do not match the matrix dimension")
    traced = [i for i in range(n) if i not in keep]
    t = rho.reshape(dims + dims)
    # letters: row index i -> chr(97+i), column index -> chr(65+i); traced share a letter
    rows = [chr(97 + i) for i in range(n)]
    cols = [chr(97 + i) if i in traced else chr(65 + i) for i in range(n)]
    out = [rows[k] for k in keep] + [cols[k] for k in keep]
    red = np.einsum("".join(rows) + "".join(cols) + "->" + "".join(out), t)
    dk = int(np.prod([dims[k] for k in keep])) if keep else 1
    return red.reshape(dk, dk)


def majorization_bound(rho, p) -> float:
    """max over unitaries U of Tr[U rho U^dag P].

    Equals sum_i lambda_i(rho) lambda_i(P) with both spectra sorted in
    descending order.
    """
    rho = np.asarray(rho)
    p = np.asarray(p)
    if rho.shape != p.shape:
        raise ValueError(f"dimension mismatch: rho {rho.shape} vs P {p.shape}")
    for name, m in (("rho", rho), ("P", p)):
        if not is_hermitian(m, tol=1e-10 * max(1.0, max_norm(m))):
            raise ValueError(f"{name} is not Hermitian")
    lr = _eigvalsh_fast(rho)
    lp = _eigvalsh_fast(p)
    if lp.min() < -1e-10:
        raise ValueError("P must be positive semidefinite")
    return sorted_spectral_dot(lr, lp)


def sorted_spectral_dot(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float))[::-1]
    b = np.sort(np.asarray(b, dtype=float))[::-1]
    return float(np.dot(a, b))


def _eigvalsh_fast(m: np.ndarray) -> np.ndarray:
    d = np.diagonal(m)
    if np.count_nonzero(m) == np.count_nonzero(d):
        return d.real.copy()
    return np.linalg.eigvalsh(m)


# --- spin operators and tensor embedding ---------------------------------


def spin_matrices(s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(S_x, S_y, S_z) for spin quantum number ``s`` in the |s, m> basis, m descending."""
    n = int(round(2 * s)) + 1
    if n < 1 or abs((n - 1) / 2 - s) > 1e-12:
        raise ValueError(f"invalid spin quantum number {s}")
    m = s - np.arange(n)
    sp = np.zeros((n, n), dtype=complex)
    for k in range(1, n):
        sp[k - 1, k] = np.sqrt(s * (s + 1) - m[k] * (m[k] + 1))
    sx = 0.5 * (sp + sp.conj().T)
    sy = -0.5j * (sp - sp.conj().T)
    sz = np.diag(m).astype(complex)
    return sx, sy, sz


def embed(op, slot: int, dims) -> np.ndarray:
    """Place a local operator on ``slot`` of a tensor product with identities elsewhere."""
    dims = list(dims)
    before = int(np.prod(dims[:slot]))
    after = int(np.prod(dims[slot + 1:]))
    return np.kron(np.kron(np.eye(before), np.asarray(op)), np.eye(after))


def embed_diagonal(diag, slot: int, dims) -> np.ndarray:
    """Diagonal of ``embed(np.diag(diag), slot, dims)`` without building the matrix."""
    dims = list(dims)
    before = int(np.prod(dims[:slot]))
    after = int(np.prod(dims[slot + 1:]))
    return np.kron(np.kron(np.ones(before), np.asarray(diag)), np.ones(after))


def embed_product(ops: dict, dims) -> np.ndarray:
    """Tensor product with ``ops[slot]`` on the given slots and identities elsewhere."""
    return kron_all([np.asarray(ops[k]) if k in ops else np.eye(d) for k, d in enumerate(dims)])


def kron_all(ops) -> np.ndarray:
    return reduce(np.kron, ops)
