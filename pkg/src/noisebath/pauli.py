"""Qubit operator primitives and dense embedding helpers.

Conventions used package-wide:

* computational basis |0> = ground, |1> = excited,
* little-endian qubit order: qubit 0 is the least significant bit of a
  basis-state index,
* ``SZ`` = diag(1, -1), so the excitation number operator is (I - Z)/2,
* ``SM`` lowers (|1> -> |0>), which is the direction of amplitude damping.
"""

from __future__ import annotations

import numpy as np

ID2 = np.eye(2, dtype=complex)
SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SM = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)   # |0><1|
SP = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)   # |1><0|
NUM = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)  # |1><1|
P0 = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)   # (1 + Z)/2
P1 = NUM                                                  # (1 - Z)/2

PAULI_BY_NAME = {"I": ID2, "X": SX, "Y": SY, "Z": SZ, "+": SP, "-": SM}


def kron_all(ops) -> np.ndarray:
    """Kronecker product of a sequence of matrices, first factor most significant."""
    out = np.array([[1.0 + 0.0j]])
    for op in ops:
        out = np.kron(out, op)
    return out


def embed(ops, qubits, n_qubits: int) -> np.ndarray:
    """Embed single-site operators on the given qubits into the full 2^n space.

    ``ops`` is a list of 2x2 matrices acting on the correspondingly indexed
    ``qubits``; all other sites get the identity.  Little-endian: qubit 0 is
    the last kron factor.
    """
    if len(ops) != len(qubits):
        raise ValueError("ops and qubits must have equal length")
    if len(set(qubits)) != len(qubits):
        raise ValueError("duplicate qubit index")
    by_site = {q: op for q, op in zip(qubits, ops)}
    factors = [by_site.get(q, ID2) for q in reversed(range(n_qubits))]
    return kron_all(factors)


def pauli_string(spec: str, n_qubits: int) -> np.ndarray:
    """Dense operator for a string like ``"X0 Z3"`` (name + qubit index)."""
    ops, qubits = [], []
    for token in spec.split():
        name, idx = token[0], int(token[1:])
        ops.append(PAULI_BY_NAME[name])
        qubits.append(idx)
    return embed(ops, qubits, n_qubits)


def dag(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def is_hermitian(a: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(a - dag(a))) <= tol)


def max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def phase_align(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Return ``a`` times the unit phase that best aligns it with ``b``.

    The phase is read off the largest-magnitude entry of ``b``, falling back
    to the global overlap tr(b^dag a) when ``a`` vanishes there.
    """
    idx = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    if abs(a[idx]) > 1e-14 and abs(b[idx]) > 1e-14:
        phase = b[idx] / a[idx]
    else:
        phase = np.trace(dag(a) @ b)
    if abs(phase) < 1e-14:
        return a
    return a * (phase / abs(phase))


def phase_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Max-entry distance between ``a`` and ``b`` after global phase alignment."""
    return max_abs(phase_align(a, b) - b)
