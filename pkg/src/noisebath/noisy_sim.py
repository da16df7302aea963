"""Dense density-matrix execution of circuits with per-layer qubit noise.

After every layer each qubit, idling or not, passes through the exact
damping/dephasing channel for one gate time: populations relax by
exp(-p_gamma), coherences by exp(-p_gamma/2 - p_Gamma).  Everything is
deterministic; there is no sampling anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit, Gate, gate_unitary
from .errors import NumericalInvariantError
from .trajectory import Trajectory

__all__ = ["NoiseChannelSpec", "SimRun", "apply_gate", "apply_layer_noise", "run", "expectation"]


@dataclass(frozen=True)
class NoiseChannelSpec:
    """Per-qubit, per-layer channel strengths (p_gamma, p_Gamma)."""

    strengths: dict

    def __post_init__(self):
        for q, (pg, pG) in self.strengths.items():
            if not (0 <= pg < 1 and 0 <= pG < 1):
                raise ValueError(f"channel strengths for qubit {q} must lie in [0, 1)")

    def for_qubit(self, q: int):
        return self.strengths.get(q, (0.0, 0.0))


@dataclass(frozen=True)
class SimRun:
    """One simulation: a unit circuit applied ``steps`` times.

    ``dt`` is the simulated time advanced per circuit application (the
    Trotter step tau, or 2*tau when the circuit is a symmetrized two-step
    super-period).  Observables are recorded after every application.
    """

    circuit: Circuit
    steps: int
    rho0: np.ndarray
    observables: dict
    noise: NoiseChannelSpec
    dt: float
    check_every: int = 10

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("need at least one step")
        d = 2**self.circuit.n_qubits
        if self.rho0.shape != (d, d):
            raise ValueError("initial state dimension mismatch")
        for name, op in self.observables.items():
            if op.shape != (d, d):
                raise ValueError(f"observable {name!r} dimension mismatch")


def _apply_left(rho: np.ndarray, u: np.ndarray, qubits, n: int) -> np.ndarray:
    """u acting on the ket indices of the given qubits (first operand = high bit)."""
    d = rho.shape[0]
    k = len(qubits)
    axes = tuple(n - 1 - q for q in qubits)
    t = rho.reshape((2,) * n + (d,))
    t = np.moveaxis(t, axes, range(k))
    shape = t.shape
    t = u @ t.reshape(2**k, -1)
    t = np.moveaxis(t.reshape(shape), range(k), axes)
    return t.reshape(d, d)


def _apply_right(rho: np.ndarray, u_dag: np.ndarray, qubits, n: int) -> np.ndarray:
    """u_dag acting on the bra indices (rho @ U^dag with U on the given qubits)."""
    d = rho.shape[0]
    k = len(qubits)
    axes = tuple(1 + n - 1 - q for q in qubits)
    t = rho.reshape((d,) + (2,) * n)
    dest = tuple(range(1 + n - k, 1 + n))
    t = np.moveaxis(t, axes, dest)
    shape = t.shape
    t = t.reshape(-1, 2**k) @ u_dag
    t = np.moveaxis(t.reshape(shape), dest, axes)
    return t.reshape(d, d)


def apply_gate(rho: np.ndarray, gate: Gate, n_qubits: int) -> np.ndarray:
    """U rho U^dag; trace-preserving by unitarity."""
    u = gate_unitary(gate)
    out = _apply_left(rho, u, gate.qubits, n_qubits)
    return _apply_right(out, u.conj().T, gate.qubits, n_qubits)


def _noise_views(rho: np.ndarray, q: int, n: int):
    t = rho.reshape((2,) * (2 * n))
    return np.moveaxis(t, (n - 1 - q, 2 * n - 1 - q), (0, 1))


def _apply_noise_inplace(rho: np.ndarray, noise: NoiseChannelSpec, n: int) -> None:
    for q in range(n):
        pg, pG = noise.for_qubit(q)
        if pg == 0.0 and pG == 0.0:
            continue
        decay = math.exp(-pg)
        coh = math.exp(-0.5 * pg - pG)
        v = _noise_views(rho, q, n)
        v[0, 0] += (1.0 - decay) * v[1, 1]
        v[1, 1] *= decay
        v[0, 1] *= coh
        v[1, 0] *= coh


def apply_layer_noise(rho: np.ndarray, noise: NoiseChannelSpec, n_qubits: int) -> np.ndarray:
    """One layer's worth of damping/dephasing on every qubit (pure function)."""
    out = rho.copy()
    _apply_noise_inplace(out, noise, n_qubits)
    return out


def expectation(rho: np.ndarray, observable: np.ndarray) -> float:
    """tr(O rho); the imaginary part must be numerical noise."""
    if np.max(np.abs(observable - observable.conj().T)) > 1e-10:
        raise ValueError("observable must be Hermitian")
    value = complex(np.einsum("ij,ji->", observable, rho))
    if abs(value.imag) > 1e-10:
        raise NumericalInvariantError(f"expectation has imaginary part {value.imag:.3e}")
    return value.real


def _check_state(rho: np.ndarray, where: str, positivity_tol: float = 1e-6) -> None:
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > 1e-8:
        raise NumericalInvariantError(f"trace drifted to {tr} at {where}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > 1e-8:
        raise NumericalInvariantError(f"Hermiticity broke ({herm:.3e}) at {where}")
    eigs = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if eigs.min() < -positivity_tol:
        raise NumericalInvariantError(f"negative eigenvalue {eigs.min():.3e} at {where}")


def _compile_layers(circuit: Circuit):
    """Collapse all-Rz layers into single diagonal phase vectors."""
    n = circuit.n_qubits
    d = 2**n
    idx = np.arange(d)
    compiled = []
    for layer in circuit.layers:
        if layer and all(g.kind == "rz" for g in layer):
            phase = np.ones(d, dtype=complex)
            for g in layer:
                bit = (idx >> g.qubits[0]) & 1
                phase = phase * np.exp(-0.5j * g.theta * (1 - 2 * bit))
            compiled.append(("diag", phase, np.conj(phase)))
        else:
            compiled.append(("gates", tuple(layer)))
    return compiled


def run(simrun: SimRun) -> Trajectory:
    """Execute the circuit ``steps`` times with per-layer noise.

    Records every observable after each application, on the grid t_k = k*dt
    including t = 0; checks trace/Hermiticity/positivity every
    ``check_every`` steps and on the final state.
    """
    n = simrun.circuit.n_qubits
    rho = np.array(simrun.rho0, dtype=complex)
    names = list(simrun.observables)
    records = {name: [expectation(rho, simrun.observables[name])] for name in names}
    compiled = _compile_layers(simrun.circuit)
    for step in range(1, simrun.steps + 1):
        for layer in compiled:
            if layer[0] == "diag":
                rho *= layer[1][:, None]
                rho *= layer[2][None, :]
            else:
                for gate in layer[1]:
                    rho = apply_gate(rho, gate, n)
            _apply_noise_inplace(rho, simrun.noise, n)
        for name in names:
            records[name].append(expectation(rho, simrun.observables[name]))
        if step % simrun.check_every == 0:
            _check_state(rho, f"step {step}")
    _check_state(rho, "final state")
    times = simrun.dt * np.arange(simrun.steps + 1)
    return Trajectory(times=times, data={name: np.asarray(records[name]) for name in names})
