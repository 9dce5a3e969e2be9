"""Dense statevector simulation.

Qubit ordering is little-endian throughout: qubit 0 is the least
significant bit of the amplitude index, so basis state ``|q_{n-1} ... q_1 q_0>``
lives at index ``sum(q_k << k)``.  Every kernel, expectation and partial
trace in the package follows this convention.

Rotations use the half-angle convention ``R_a(theta) = exp(-i theta P_a / 2)``.

The numba kernels below operate on a *batch* of states stored as a 2-D array
of shape ``(batch, 2**n)``; the :class:`StateVector` wrapper is the
single-state surface used by tests, diagnostics and small experiments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .errors import CapacityError, NumericError, QubitIndexError, ShapeError

MAX_QUBITS = 24

AXES = ("x", "y", "z")
AXIS_CODE = {"x": 0, "y": 1, "z": 2}

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=np.complex128,
)

_S = 1.0 / math.sqrt(2.0)
# Basis order (|00>, |01>, |10>, |11>) with the ECR's first wire as the
# least significant bit.
ECR_MATRIX = _S * np.array(
    [
        [0, 1, 0, 1j],
        [1, 0, -1j, 0],
        [0, 1j, 0, 1],
        [-1j, 0, 1, 0],
    ],
    dtype=np.complex128,
)
ECR_MATRIX_DAG = ECR_MATRIX.conj().T.copy()


def axis_code(axis) -> int:
    if isinstance(axis, str):
        try:
            return AXIS_CODE[axis.lower()]
        except KeyError:
            raise ValueError(f"unknown rotation axis {axis!r}") from None
    code = int(axis)
    if code not in (0, 1, 2):
        raise ValueError(f"unknown rotation axis code {axis!r}")
    return code


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """2x2 matrix of ``exp(-i angle P_axis / 2)``."""
    c = math.cos(angle / 2.0)
    s = math.sin(angle / 2.0)
    code = axis_code(axis)
    if code == 0:
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
    if code == 1:
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    return np.array([[c - 1j * s, 0], [0, c + 1j * s]], dtype=np.complex128)


def rotation_matrices(codes: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Vectorised :func:`rotation_matrix`.

    ``codes`` and ``angles`` broadcast against each other; the result has
    their broadcast shape followed by ``(2, 2)``.
    """
    codes, angles = np.broadcast_arrays(np.asarray(codes), np.asarray(angles, dtype=float))
    c = np.cos(angles / 2.0)
    s = np.sin(angles / 2.0)
    out = np.zeros(codes.shape + (2, 2), dtype=np.complex128)
    isx = codes == 0
    isy = codes == 1
    isz = codes == 2
    out[..., 0, 0] = np.where(isz, c - 1j * s, c)
    out[..., 1, 1] = np.where(isz, c + 1j * s, c)
    out[..., 0, 1] = np.where(isx, -1j * s, np.where(isy, -s, 0.0))
    out[..., 1, 0] = np.where(isx, -1j * s, np.where(isy, s, 0.0))
    return out


# ---------------------------------------------------------------------------
# batched kernels; ``psi`` is (batch, 2**n) complex128, modified in place


@njit(parallel=True, cache=True)
def apply_1q_batch(psi, q, mats):
    """Apply per-sample 2x2 matrices ``mats[b]`` (or one shared matrix when
    ``mats.shape[0] == 1``) to wire ``q`` of every state in the batch."""
    nb, dim = psi.shape
    bit = 1 << q
    shared = mats.shape[0] == 1
    for b in prange(nb):
        m = mats[0] if shared else mats[b]
        m00 = m[0, 0]
        m01 = m[0, 1]
        m10 = m[1, 0]
        m11 = m[1, 1]
        row = psi[b]
        for blk in range(0, dim, 2 * bit):
            for i0 in range(blk, blk + bit):
                i1 = i0 + bit
                a0 = row[i0]
                a1 = row[i1]
                row[i0] = m00 * a0 + m01 * a1
                row[i1] = m10 * a0 + m11 * a1


@njit(parallel=True, cache=True)
def apply_2q_batch(psi, qa, qb, mat):
    """Apply a shared 4x4 matrix to wires ``(qa, qb)``; ``qa`` is the
    least significant bit of the gate's local basis."""
    nb, dim = psi.shape
    blo = 1 << min(qa, qb)
    bhi = 1 << max(qa, qb)
    ba = 1 << qa
    bb = 1 << qb
    for b in prange(nb):
        row = psi[b]
        for h in range(0, dim, 2 * bhi):
            for lo in range(h, h + bhi, 2 * blo):
                for i in range(lo, lo + blo):
                    j1 = i + ba
                    j2 = i + bb
                    j3 = j1 + bb
                    a0 = row[i]
                    a1 = row[j1]
                    a2 = row[j2]
                    a3 = row[j3]
                    row[i] = mat[0, 0] * a0 + mat[0, 1] * a1 + mat[0, 2] * a2 + mat[0, 3] * a3
                    row[j1] = mat[1, 0] * a0 + mat[1, 1] * a1 + mat[1, 2] * a2 + mat[1, 3] * a3
                    row[j2] = mat[2, 0] * a0 + mat[2, 1] * a1 + mat[2, 2] * a2 + mat[2, 3] * a3
                    row[j3] = mat[3, 0] * a0 + mat[3, 1] * a1 + mat[3, 2] * a2 + mat[3, 3] * a3


@njit(parallel=True, cache=True)
def apply_ecr_batch(psi, qa, qb):
    """Specialised ECR kernel with two nonzeros per row.

    ECR is Hermitian and unitary, hence its own inverse; the backward sweep
    reuses this kernel unchanged."""
    nb, dim = psi.shape
    blo = 1 << min(qa, qb)
    bhi = 1 << max(qa, qb)
    ba = 1 << qa
    bb = 1 << qb
    s = 1.0 / np.sqrt(2.0)
    ph = 1j * s
    for b in prange(nb):
        row = psi[b]
        for h in range(0, dim, 2 * bhi):
            for lo in range(h, h + bhi, 2 * blo):
                for i in range(lo, lo + blo):
                    j1 = i + ba
                    j2 = i + bb
                    j3 = j1 + bb
                    a0 = row[i]
                    a1 = row[j1]
                    a2 = row[j2]
                    a3 = row[j3]
                    row[i] = s * a1 + ph * a3
                    row[j1] = s * a0 - ph * a2
                    row[j2] = ph * a1 + s * a3
                    row[j3] = -ph * a0 + s * a2


@njit(parallel=True, cache=True)
def expect_z_all_batch(psi, n):
    """<Z_q> for every wire of every state; returns (batch, n) floats."""
    nb, dim = psi.shape
    out = np.zeros((nb, n))
    for b in prange(nb):
        row = psi[b]
        ones = np.zeros(n)
        total = 0.0
        for i in range(dim):
            a = row[i]
            p = a.real * a.real + a.imag * a.imag
            total += p
            j = i
            q = 0
            while j:
                if j & 1:
                    ones[q] += p
                j >>= 1
                q += 1
        for q in range(n):
            out[b, q] = total - 2.0 * ones[q]
    return out


@njit(parallel=True, cache=True)
def parity_expectation_batch(psi, mask):
    """<prod_{q in mask} Z_q> for every state in the batch."""
    nb, dim = psi.shape
    out = np.zeros(nb)
    for b in prange(nb):
        row = psi[b]
        acc = 0.0
        for i in range(dim):
            a = row[i]
            p = a.real * a.real + a.imag * a.imag
            j = i & mask
            odd = 0
            while j:
                odd ^= 1
                j &= j - 1
            acc += -p if odd else p
        out[b] = acc
    return out


@njit(parallel=True, cache=True)
def weighted_z_apply_batch(psi, weights, out):
    """``out[b] = (sum_q weights[b, q] Z_q) psi[b]``; a diagonal observable."""
    nb, dim = psi.shape
    n = weights.shape[1]
    for b in prange(nb):
        total = 0.0
        for q in range(n):
            total += weights[b, q]
        row = psi[b]
        orow = out[b]
        for i in range(dim):
            d = total
            j = i
            q = 0
            while j:
                if j & 1:
                    d -= 2.0 * weights[b, q]
                j >>= 1
                q += 1
            orow[i] = d * row[i]


@njit(parallel=True, cache=True)
def parity_apply_batch(psi, mask, out):
    """``out[b] = (prod_{q in mask} Z_q) psi[b]``."""
    nb, dim = psi.shape
    for b in prange(nb):
        row = psi[b]
        orow = out[b]
        for i in range(dim):
            j = i & mask
            odd = 0
            while j:
                odd ^= 1
                j &= j - 1
            orow[i] = -row[i] if odd else row[i]


@njit(parallel=True, cache=True)
def adjoint_1q_batch(phi, lam, q, vdag, macc):
    """One backward step through a single-wire unitary ``V``.

    On entry ``phi`` and ``lam`` hold the forward and adjoint states just
    after ``V``; on exit both have been pulled back through ``V^dagger``.
    ``macc[b, a, c]`` receives ``sum_rest conj(lam_after[rest, a]) *
    phi_before[rest, c]``, from which derivatives of any parametrisation of
    ``V`` follow by contraction.
    """
    nb, dim = phi.shape
    bit = 1 << q
    shared = vdag.shape[0] == 1
    for b in prange(nb):
        m = vdag[0] if shared else vdag[b]
        m00 = m[0, 0]
        m01 = m[0, 1]
        m10 = m[1, 0]
        m11 = m[1, 1]
        prow = phi[b]
        lrow = lam[b]
        s00 = 0j
        s01 = 0j
        s10 = 0j
        s11 = 0j
        for blk in range(0, dim, 2 * bit):
            for i0 in range(blk, blk + bit):
                i1 = i0 + bit
                p0 = prow[i0]
                p1 = prow[i1]
                n0 = m00 * p0 + m01 * p1
                n1 = m10 * p0 + m11 * p1
                prow[i0] = n0
                prow[i1] = n1
                l0 = lrow[i0]
                l1 = lrow[i1]
                c0 = l0.conjugate()
                c1 = l1.conjugate()
                s00 += c0 * n0
                s01 += c0 * n1
                s10 += c1 * n0
                s11 += c1 * n1
                lrow[i0] = m00 * l0 + m01 * l1
                lrow[i1] = m10 * l0 + m11 * l1
        macc[b, 0, 0] = s00
        macc[b, 0, 1] = s01
        macc[b, 1, 0] = s10
        macc[b, 1, 1] = s11


# ---------------------------------------------------------------------------
# single-state surface


@dataclass
class StateVector:
    """An ``n_qubits`` pure state held as ``2**n_qubits`` complex amplitudes."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ShapeError(
                f"expected {1 << self.n_qubits} amplitudes for {self.n_qubits} qubits, "
                f"got shape {self.amplitudes.shape}"
            )

    @classmethod
    def from_amplitudes(cls, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=np.complex128).ravel()
        n = int(round(math.log2(amps.size))) if amps.size else -1
        if n < 0 or (1 << n) != amps.size:
            raise ShapeError(f"amplitude count {amps.size} is not a power of two")
        return cls(n, amps.copy())

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def _batch(self) -> np.ndarray:
        return self.amplitudes.reshape(1, -1)


def check_qubit_count(n_qubits: int, low: int = 1) -> int:
    n = int(n_qubits)
    if n != n_qubits or not low <= n <= MAX_QUBITS:
        raise CapacityError(f"n_qubits must lie in [{low}, {MAX_QUBITS}], got {n_qubits}")
    return n


def _check_target(state: StateVector, target: int) -> int:
    t = int(target)
    if t != target or not 0 <= t < state.n_qubits:
        raise QubitIndexError(f"qubit {target} out of range for {state.n_qubits} qubits")
    return t


def new_zero_state(n_qubits: int) -> StateVector:
    n = check_qubit_count(n_qubits)
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n, amps)


def apply_matrix_1q(state: StateVector, target: int, matrix) -> StateVector:
    """Apply an arbitrary 2x2 matrix to ``target`` in place."""
    t = _check_target(state, target)
    mat = np.asarray(matrix, dtype=np.complex128).reshape(1, 2, 2)
    apply_1q_batch(state._batch(), t, mat)
    return state


def apply_rotation(state: StateVector, axis, target: int, angle: float) -> StateVector:
    """Apply ``R_axis(angle)`` on ``target`` in place and return the state."""
    if not math.isfinite(angle):
        raise NumericError(f"rotation angle must be finite, got {angle}")
    return apply_matrix_1q(state, target, rotation_matrix(axis, angle))


def apply_matrix_2q(state: StateVector, q_a: int, q_b: int, matrix) -> StateVector:
    a = _check_target(state, q_a)
    b = _check_target(state, q_b)
    if a == b:
        raise QubitIndexError(f"two-qubit gate needs distinct wires, got {q_a} twice")
    mat = np.ascontiguousarray(matrix, dtype=np.complex128)
    apply_2q_batch(state._batch(), a, b, mat)
    return state


def apply_ecr(state: StateVector, q_a: int, q_b: int, inverse: bool = False) -> StateVector:
    """Apply ECR with ``q_a`` as the gate's first (least significant) wire.

    ``inverse`` applies ECR^dagger through the generic 4x4 kernel; it equals
    ECR itself, but the flag keeps the round-trip explicit at call sites.
    """
    return apply_matrix_2q(state, q_a, q_b, ECR_MATRIX_DAG if inverse else ECR_MATRIX)


def expect_z(state: StateVector, target: int) -> float:
    t = _check_target(state, target)
    probs = np.abs(state.amplitudes.reshape(-1, 2, 1 << t)) ** 2
    p = probs.sum(axis=(0, 2))
    return float(p[0] - p[1])


def expect_z_all(state: StateVector) -> np.ndarray:
    return expect_z_all_batch(state._batch(), state.n_qubits)[0]


def expect_z_product(state: StateVector, targets) -> float:
    """Expectation of the tensor product of Z over ``targets``."""
    mask = 0
    for t in targets:
        mask |= 1 << _check_target(state, t)
    if mask == 0:
        return float(np.vdot(state.amplitudes, state.amplitudes).real)
    return float(parity_expectation_batch(state._batch(), mask)[0])


def fidelity(a: StateVector, b: StateVector) -> float:
    """``|<a|b>|^2``."""
    if a.n_qubits != b.n_qubits:
        raise ShapeError(f"fidelity between {a.n_qubits}- and {b.n_qubits}-qubit states")
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def reduced_density_1q(state: StateVector, target: int) -> np.ndarray:
    """Partial trace over every wire except ``target``."""
    t = _check_target(state, target)
    s = state.amplitudes.reshape(-1, 2, 1 << t)
    return np.einsum("iaj,ibj->ab", s, s.conj())


def single_qubit_purities(amplitudes: np.ndarray, n_qubits: int) -> np.ndarray:
    """``Tr rho_q^2`` for each wire of one state given as a flat array."""
    out = np.empty(n_qubits)
    for q in range(n_qubits):
        s = amplitudes.reshape(-1, 2, 1 << q)
        rho = np.einsum("iaj,ibj->ab", s, s.conj())
        out[q] = float(np.sum(np.abs(rho) ** 2))
    return out
