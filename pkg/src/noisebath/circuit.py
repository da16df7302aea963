"""Trotter-step circuits in several two-qubit gate decompositions.

Single-qubit rotations follow R_a(theta) = exp(-i theta sigma_a / 2).  The
entangling primitives are the variable XX gate MS(theta) =
exp(-i theta XX/2), the variable iSWAP(theta) = exp(-i theta (s+b- + s-b+)/2),
CNOT and CZ.  Two-qubit gate matrices are written with the first listed
operand as the high bit.

Design rule carried through every decomposition: bath qubits never receive a
rotation of angle >= pi/4 other than Rz, so damping/dephasing noise keeps its
form when commuted through a step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import pauli
from .spin_model import SpinBathModel, circuit_depth

__all__ = [
    "Gate",
    "Circuit",
    "gate_unitary",
    "unitary_of",
    "trotter_step",
    "decompose_xx",
    "decompose_hop",
    "symmetrize",
    "swap_network_step",
    "circuit_to_text",
    "circuit_from_text",
]

_PARAMETRIC = {"rx", "ry", "rz", "ms", "iswap"}
_FIXED = {"x", "cnot", "cz"}


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple
    theta: float | None = None

    def __post_init__(self):
        if self.kind in _PARAMETRIC:
            if self.theta is None or not math.isfinite(self.theta):
                raise ValueError(f"{self.kind} needs a finite angle")
        elif self.kind in _FIXED:
            if self.theta is not None:
                raise ValueError(f"{self.kind} takes no angle")
        else:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        one_qubit = self.kind in {"rx", "ry", "rz", "x"}
        if len(self.qubits) != (1 if one_qubit else 2):
            raise ValueError(f"wrong operand count for {self.kind}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError("gate operands must be distinct")


def rx(q, theta):
    return Gate("rx", (q,), float(theta))


def ry(q, theta):
    return Gate("ry", (q,), float(theta))


def rz(q, theta):
    return Gate("rz", (q,), float(theta))


def xgate(q):
    return Gate("x", (q,))


def ms(qa, qb, theta):
    return Gate("ms", (qa, qb), float(theta))


def iswap(qa, qb, theta):
    return Gate("iswap", (qa, qb), float(theta))


def cnot(control, target):
    return Gate("cnot", (control, target))


def cz(qa, qb):
    return Gate("cz", (qa, qb))


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    layers: tuple
    roles: tuple
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.roles) != self.n_qubits:
            raise ValueError("need one role per qubit")
        for layer in self.layers:
            seen = set()
            for gate in layer:
                for q in gate.qubits:
                    if not 0 <= q < self.n_qubits:
                        raise ValueError("gate operand out of range")
                    if q in seen:
                        raise ValueError("qubit used twice in one layer")
                    seen.add(q)

    @property
    def depth(self) -> int:
        return len(self.layers)


def gate_unitary(gate: Gate) -> np.ndarray:
    """Dense matrix of the gate on its own operands (first operand = high bit)."""
    th = gate.theta
    if gate.kind == "rx":
        return math.cos(th / 2) * pauli.ID2 - 1j * math.sin(th / 2) * pauli.SX
    if gate.kind == "ry":
        return math.cos(th / 2) * pauli.ID2 - 1j * math.sin(th / 2) * pauli.SY
    if gate.kind == "rz":
        return math.cos(th / 2) * pauli.ID2 - 1j * math.sin(th / 2) * pauli.SZ
    if gate.kind == "x":
        return pauli.SX.copy()
    if gate.kind == "ms":
        xx = np.kron(pauli.SX, pauli.SX)
        return math.cos(th / 2) * np.eye(4) - 1j * math.sin(th / 2) * xx
    if gate.kind == "iswap":
        u = np.eye(4, dtype=complex)
        c, s = math.cos(th / 2), math.sin(th / 2)
        u[1, 1] = u[2, 2] = c
        u[1, 2] = u[2, 1] = -1j * s
        return u
    if gate.kind == "cnot":
        return np.kron(pauli.P0, pauli.ID2) + np.kron(pauli.P1, pauli.SX)
    if gate.kind == "cz":
        return np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)
    raise ValueError(gate.kind)


def embed_gate(gate: Gate, n_qubits: int) -> np.ndarray:
    u = gate_unitary(gate)
    if len(gate.qubits) == 1:
        return pauli.embed([u], [gate.qubits[0]], n_qubits)
    # expand the 4x4 into single-site components and embed each
    qa, qb = gate.qubits
    d = 2**n_qubits
    out = np.zeros((d, d), dtype=complex)
    u4 = u.reshape(2, 2, 2, 2)
    for ia in range(2):
        for ja in range(2):
            for ib in range(2):
                for jb in range(2):
                    coeff = u4[ia, ib, ja, jb]
                    if coeff == 0:
                        continue
                    ea = np.zeros((2, 2), dtype=complex)
                    ea[ia, ja] = 1.0
                    eb = np.zeros((2, 2), dtype=complex)
                    eb[ib, jb] = 1.0
                    out += coeff * pauli.embed([ea, eb], [qa, qb], n_qubits)
    return out


def unitary_of(circuit: Circuit) -> np.ndarray:
    """Product of layer unitaries, little-endian basis, first layer rightmost."""
    if circuit.n_qubits > 10:
        raise ValueError("dense unitary limited to 10 qubits")
    d = 2**circuit.n_qubits
    u = np.eye(d, dtype=complex)
    for layer in circuit.layers:
        lu = np.eye(d, dtype=complex)
        for gate in layer:
            lu = embed_gate(gate, circuit.n_qubits) @ lu
        u = lu @ u
    return u


def decompose_xx(theta: float, scheme: str, q_s: int, q_b: int):
    """Layers realizing exp(-i theta XX/2) on (system, bath) per scheme.

    cnot-b uses the bath qubit as control (the small-angle rotation lands on
    the bath), cnot-s the system qubit; the CZ variant keeps its large-angle
    Ry rotations on the system qubit only.
    """
    if scheme == "ms":
        return [[ms(q_s, q_b, theta)]]
    if scheme == "iswap":
        return [
            [iswap(q_s, q_b, theta)],
            [rx(q_s, math.pi)],
            [iswap(q_s, q_b, theta)],
            [rx(q_s, math.pi)],
        ]
    if scheme == "cnot-b":
        return [[cnot(q_b, q_s)], [rx(q_b, theta)], [cnot(q_b, q_s)]]
    if scheme == "cnot-s":
        return [[cnot(q_s, q_b)], [rx(q_s, theta)], [cnot(q_s, q_b)]]
    if scheme == "cz":
        return [
            [ry(q_s, -math.pi / 2)],
            [cz(q_s, q_b)],
            [rx(q_b, theta)],
            [cz(q_s, q_b)],
            [ry(q_s, math.pi / 2)],
        ]
    raise ValueError(f"unknown XX scheme {scheme!r}")


def decompose_hop(theta: float, q_s: int, q_b: int):
    """Excitation hop exp(-i theta (XX + YY)/2) from two XX gates.

    The YY half is the XX gate conjugated by Rz(+-pi/2) on both qubits;
    Z rotations leave damping and dephasing operators unchanged, so they are
    safe on bath qubits at any angle.
    """
    return [
        [ms(q_s, q_b, theta)],
        [rz(q_s, -math.pi / 2), rz(q_b, -math.pi / 2)],
        [ms(q_s, q_b, theta)],
        [rz(q_s, math.pi / 2), rz(q_b, math.pi / 2)],
    ]


_AXIS_WRAP = {
    # axis -> (pre-rotation, post-rotation) on the system qubit mapping
    # exp(-i th A X / 2) = post . exp(-i th XX/2) . pre
    "y": (lambda q: rz(q, -math.pi / 2), lambda q: rz(q, math.pi / 2)),
    "z": (lambda q: ry(q, math.pi / 2), lambda q: ry(q, -math.pi / 2)),
}

_COMPATIBLE = {
    "xx": {"ms", "iswap", "cnot-b", "cnot-s", "cz"},
    "xy": {"ms", "cnot-b", "cnot-s", "cz"},
    "pm": {"iswap"},
}


def trotter_step(model: SpinBathModel, tau: float, decomposition: str) -> Circuit:
    """First-order Trotter step: free-evolution rotations, then each coupling
    term in ascending bath-qubit order via the chosen decomposition."""
    if model.n_system != 1:
        raise ValueError("circuit synthesis supports a single system spin")
    kinds = {a.kind for a in model.aux}
    if kinds <= {"x"}:
        structure = "xx"
    elif kinds <= {"x", "y", "z"}:
        structure = "xy"
    elif kinds <= {"hop", "counter"}:
        structure = "pm"
    else:
        raise ValueError("mixed rotating/axis couplings are unsupported")
    if decomposition not in _COMPATIBLE[structure]:
        raise ValueError(
            f"decomposition {decomposition!r} is incompatible with {structure!r} couplings"
        )
    q_s = 0
    rot = [rz(q_s, -model.system.splittings[0] * tau)]
    rot.extend(rz(a.qubit, -a.omega * tau) for a in model.aux)
    layers = [rot]
    for a in sorted(model.aux, key=lambda a: a.qubit):
        c = complex(a.couplings[0])
        if abs(c.imag) > 0:
            raise ValueError("circuit synthesis requires real couplings")
        theta = c.real * tau
        if a.kind == "x":
            layers.extend(decompose_xx(theta, decomposition, q_s, a.qubit))
        elif a.kind in ("y", "z"):
            pre, post = _AXIS_WRAP[a.kind]
            layers.append([pre(q_s)])
            layers.extend(decompose_xx(theta, decomposition, q_s, a.qubit))
            layers.append([post(q_s)])
        elif a.kind == "hop":
            layers.append([iswap(q_s, a.qubit, theta)])
        else:  # counter
            layers.append([rx(q_s, math.pi)])
            layers.append([iswap(q_s, a.qubit, theta)])
            layers.append([rx(q_s, math.pi)])
    roles = tuple(["s"] + ["b"] * model.n_bath)
    circuit = Circuit(n_qubits=model.n_qubits, layers=tuple(tuple(l) for l in layers), roles=roles)
    try:
        expected = circuit_depth(decomposition, model.n_bath, model.coupling_kind)
    except ValueError:
        expected = None  # structure outside the tabulated families
    if expected is not None and circuit.depth != expected:
        raise AssertionError(f"depth {circuit.depth} != table value {expected}")
    return circuit


def _conjugate_by_x(gate: Gate, q_s: int) -> Gate:
    """X_s g X_s for the gate set closed under system-X conjugation."""
    if q_s not in gate.qubits:
        return gate
    if gate.kind == "rx" or gate.kind == "x":
        return gate
    if gate.kind == "ry":
        return ry(gate.qubits[0], -gate.theta)
    if gate.kind == "rz":
        return rz(gate.qubits[0], -gate.theta)
    if gate.kind == "ms":
        return gate
    raise ValueError(
        f"noise symmetrization is not closed over {gate.kind!r} gates on the system qubit"
    )


def symmetrize(circuit: Circuit, model: SpinBathModel) -> Circuit:
    """Two-step super-period with system X gates between the Trotter steps.

    Executes U, X_s, U_bar = X_s U X_s, X_s; noiselessly the X pairs cancel
    and the period equals two plain steps, while per-layer damping acquires
    alternating sign, splitting into balanced sigma_x/sigma_y noise.
    """
    if model.n_system != 1:
        raise ValueError("symmetrization supports a single system qubit")
    q_s = 0
    bar_layers = tuple(
        tuple(_conjugate_by_x(g, q_s) for g in layer) for layer in circuit.layers
    )
    layers = list(circuit.layers)
    layers.append((xgate(q_s),))
    layers.extend(bar_layers)
    layers.append((xgate(q_s),))
    return Circuit(
        n_qubits=circuit.n_qubits,
        layers=tuple(layers),
        roles=circuit.roles,
        meta={**circuit.meta, "symmetrized": True, "steps_per_period": 2},
    )


def swap_network_step(model: SpinBathModel, tau: float, decomposition: str) -> Circuit:
    """Nearest-neighbor Trotter step on a two-row layout.

    One system spin is stored alternately in two system qubits (0 and 1);
    bath qubits sit in rows of two, and a CNOT-triple SWAP moves the system
    state between rows.  Bath states are never swapped and never see a
    large-angle gate.  The composed unitary equals the all-to-all step times
    a final SWAP of the system register when the row count is even.
    """
    if model.n_system != 1:
        raise ValueError("swap network supports a single system spin")
    if model.n_bath % 2:
        raise ValueError("swap network needs an even number of bath qubits")
    if {a.kind for a in model.aux} - {"x"}:
        raise ValueError("swap network is implemented for x-axis couplings")
    n_b = model.n_bath
    rows = n_b // 2
    # circuit qubits: 0, 1 = system register; model bath qubit q -> q + 1
    rot = [rz(0, -model.system.splittings[0] * tau)]
    rot.extend(rz(a.qubit + 1, -a.omega * tau) for a in model.aux)
    layers = [rot]
    aux_sorted = sorted(model.aux, key=lambda a: a.qubit)
    for r in range(rows):
        holder = r % 2
        for a in aux_sorted[2 * r : 2 * r + 2]:
            theta = complex(a.couplings[0]).real * tau
            layers.extend(decompose_xx(theta, decomposition, holder, a.qubit + 1))
        if r < rows - 1:
            other = 1 - holder
            layers.append([cnot(holder, other)])
            layers.append([cnot(other, holder)])
            layers.append([cnot(holder, other)])
    roles = tuple(["s", "s"] + ["b"] * n_b)
    return Circuit(
        n_qubits=n_b + 2,
        layers=tuple(tuple(l) for l in layers),
        roles=roles,
        meta={"final_system_qubit": (rows - 1) % 2, "system_register": (0, 1)},
    )


def circuit_to_text(circuit: Circuit) -> str:
    """Line-oriented format: one layer per line, gates joined by " ; "."""
    lines = [f"# nqubits {circuit.n_qubits}", "# roles " + " ".join(circuit.roles)]
    for layer in circuit.layers:
        parts = []
        for g in layer:
            head = g.kind.upper()
            if g.theta is not None:
                head += f"({g.theta!r})"
            parts.append(head + " " + " ".join(str(q) for q in g.qubits))
        lines.append(" ; ".join(parts))
    return "\n".join(lines) + "\n"


def circuit_from_text(text: str) -> Circuit:
    n_qubits = None
    roles = None
    layers = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            fields = line[1:].split()
            if fields and fields[0] == "nqubits":
                n_qubits = int(fields[1])
            elif fields and fields[0] == "roles":
                roles = tuple(fields[1:])
            continue
        gates = []
        for part in line.split(";"):
            part = part.strip()
            head, *qubits = part.split()
            if "(" in head:
                kind, arg = head.split("(", 1)
                theta = float(arg.rstrip(")"))
                gates.append(Gate(kind.lower(), tuple(int(q) for q in qubits), theta))
            else:
                gates.append(Gate(head.lower(), tuple(int(q) for q in qubits)))
        layers.append(tuple(gates))
    if n_qubits is None:
        n_qubits = 1 + max(q for layer in layers for g in layer for q in g.qubits)
    if roles is None:
        roles = tuple("b" for _ in range(n_qubits))
    return Circuit(n_qubits=n_qubits, layers=tuple(layers), roles=roles)
