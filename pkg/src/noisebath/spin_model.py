"""Qubit-level models: auxiliary-spin Hamiltonians and noise matching.

A fitted bath becomes a register of auxiliary spins (bath qubits) whose
spectral broadening is supplied by per-layer damping/dephasing noise.  The
matching condition tau = D * epsilon / kappa fixes the Trotter step, and with
it every gate angle, from the gate-error budget alone; the physical gate time
never appears on its own.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .coarse_grain import LorentzianBath
from .spectral import LorentzianSum

__all__ = [
    "SystemSpec",
    "AuxSpin",
    "SystemNoise",
    "SpinBathModel",
    "TrotterPlan",
    "bosons_to_spins",
    "build_two_bath_model",
    "effective_broadening",
    "gate_error",
    "circuit_depth",
    "match_trotter_step",
    "make_plan",
    "reconstructed_spectrum",
]

DECOMPOSITIONS = ("ms", "iswap", "cnot-b", "cnot-s", "cz")

# Documented per-gate error conversions for damping-only noise: our epsilon
# counts Z-basis decay, so Pauli/average error metrics are smaller.
PAULI_ERROR_ONE_QUBIT = 0.5   # epsilon/2
AVERAGE_ERROR_ONE_QUBIT = 1.0 / 3.0
PAULI_ERROR_TWO_QUBIT = 1.0
AVERAGE_ERROR_TWO_QUBIT = 0.8


@dataclass(frozen=True)
class SystemSpec:
    """System spin(s): level splittings, optional hopping, bath coupling axis."""

    splittings: tuple
    hopping: dict = field(default_factory=dict)
    coupling_axis: str = "x"

    def __post_init__(self):
        if self.coupling_axis not in ("x", "y", "z"):
            raise ValueError("coupling axis must be x, y or z")
        for (i, j) in self.hopping:
            if not (0 <= i < j < self.n_spins):
                raise ValueError("hopping indices must satisfy i < j < n_spins")

    @property
    def n_spins(self) -> int:
        return len(self.splittings)


@dataclass(frozen=True)
class AuxSpin:
    """One bath qubit: energy, per-system-spin coupling, interaction kind.

    ``kind`` selects the coupling operator: "x"/"y"/"z" give
    (c/2) * sigma_kind^sys * sigma_x^aux, while "hop"/"counter" give
    (c/2) * (s+ b- + s- b+) and (c/2) * (s+ b+ + s- b-), the rotating and
    counter-rotating halves of the two-bath construction.
    """

    qubit: int
    omega: float
    couplings: tuple
    kind: str = "x"
    group: str = "mode0"

    def __post_init__(self):
        if self.kind not in ("x", "y", "z", "hop", "counter"):
            raise ValueError(f"unknown coupling kind {self.kind!r}")


@dataclass(frozen=True)
class SystemNoise:
    """System-qubit noise in the model.

    kind "x": a sigma_x Lindblad channel at ``rate`` (kappa_system), the
    exactly mappable scheme.  kind "symmetrized_damping": physical damping at
    effective rate ``rate`` (= gamma_s), converted by inter-step X gates into
    sigma_x and sigma_y channels at rate/4 each.
    """

    kind: str
    rate: float

    def __post_init__(self):
        if self.kind not in ("x", "symmetrized_damping"):
            raise ValueError("unknown system-noise kind")
        if self.rate < 0:
            raise ValueError("rate must be >= 0")


@dataclass(frozen=True)
class SpinBathModel:
    system: SystemSpec
    aux: tuple
    rates: dict  # bath qubit -> (gamma, Gamma): effective damping/dephasing
    system_noise: SystemNoise | None = None

    def __post_init__(self):
        qubits = [a.qubit for a in self.aux]
        if len(set(qubits)) != len(qubits):
            raise ValueError("duplicate bath qubit index")
        ns = self.system.n_spins
        expected = set(range(ns, ns + len(self.aux)))
        if set(qubits) != expected:
            raise ValueError("bath qubits must follow system qubits contiguously")
        for a in self.aux:
            if len(a.couplings) != ns:
                raise ValueError("each aux spin needs one coupling per system spin")
            if a.qubit not in self.rates:
                raise ValueError("every bath qubit needs noise rates")
        for g, G in self.rates.values():
            if g < 0 or G < 0:
                raise ValueError("rates must be >= 0")

    @property
    def n_system(self) -> int:
        return self.system.n_spins

    @property
    def n_bath(self) -> int:
        return len(self.aux)

    @property
    def n_qubits(self) -> int:
        return self.n_system + self.n_bath

    @property
    def coupling_kind(self) -> str:
        """"xx" when every coupling is x-type; "two-bath" for the balanced
        x/y (or hop/counter) structure; anything else has no depth formula."""
        kinds = sorted(a.kind for a in self.aux)
        n = len(kinds)
        if kinds == ["x"] * n:
            return "xx"
        half = n // 2
        if n % 2 == 0 and kinds in (["x"] * half + ["y"] * half, ["counter"] * half + ["hop"] * half):
            return "two-bath"
        raise ValueError("unsupported coupling structure for depth accounting")

    def width(self, qubit: int) -> float:
        g, G = self.rates[qubit]
        return effective_broadening(g, G)

    @property
    def reference_width(self) -> float:
        return max(self.width(a.qubit) for a in self.aux)

    def to_json(self) -> str:
        payload = {
            "system": {
                "splittings": list(self.system.splittings),
                "hopping": [
                    [i, j, complex(v).real, complex(v).imag]
                    for (i, j), v in sorted(self.system.hopping.items())
                ],
                "coupling_axis": self.system.coupling_axis,
            },
            "aux": [
                {
                    "qubit": a.qubit,
                    "omega": a.omega,
                    "couplings": [[complex(c).real, complex(c).imag] for c in a.couplings],
                    "kind": a.kind,
                    "group": a.group,
                }
                for a in self.aux
            ],
            "rates": {str(q): list(gg) for q, gg in sorted(self.rates.items())},
            "system_noise": (
                None
                if self.system_noise is None
                else {"kind": self.system_noise.kind, "rate": self.system_noise.rate}
            ),
        }
        return json.dumps(payload, sort_keys=True)


def effective_broadening(gamma: float, big_gamma: float) -> float:
    """Spectral width of a damped, dephased spin: gamma + 2*Gamma."""
    if gamma < 0 or big_gamma < 0:
        raise ValueError("rates must be >= 0")
    return gamma + 2.0 * big_gamma


def gate_error(t_gate: float, gamma_bar: float, big_gamma_bar: float) -> float:
    """epsilon = t_gate (gamma_bar + 2 Gamma_bar) = t_gate (1/T1 + 2/T_phi)."""
    if t_gate < 0 or gamma_bar < 0 or big_gamma_bar < 0:
        raise ValueError("inputs must be >= 0")
    return t_gate * (gamma_bar + 2.0 * big_gamma_bar)


def _split_rates(width: float, dephasing_ratio: float):
    """Split a broadening into (gamma, Gamma) with Gamma = ratio * gamma."""
    if dephasing_ratio < 0:
        raise ValueError("dephasing ratio must be >= 0")
    gamma = width / (1.0 + 2.0 * dephasing_ratio)
    return gamma, dephasing_ratio * gamma


def bosons_to_spins(
    bath: LorentzianBath,
    multiplicities,
    system: SystemSpec,
    dephasing_ratio: float = 0.0,
) -> SpinBathModel:
    """Replace each broadened boson mode by N_i auxiliary spins.

    Member couplings are scaled by 1/sqrt(N_i) so the total spectral weight
    per mode is unchanged; member widths equal the mode width and are split
    into damping/dephasing according to ``dephasing_ratio`` = Gamma/gamma.
    """
    multiplicities = list(multiplicities)
    if len(multiplicities) != bath.n_modes:
        raise ValueError("need one multiplicity per mode")
    if any(n < 1 or n != int(n) for n in multiplicities):
        raise ValueError("multiplicities must be integers >= 1")
    if bath.n_spins != system.n_spins:
        raise ValueError("bath and system spin counts differ")
    aux = []
    rates = {}
    qubit = system.n_spins
    for i, (mode, n_i) in enumerate(zip(bath.modes, multiplicities)):
        scale = 1.0 / math.sqrt(n_i)
        for _ in range(int(n_i)):
            aux.append(
                AuxSpin(
                    qubit=qubit,
                    omega=mode.center,
                    couplings=tuple(c * scale for c in mode.couplings),
                    kind=system.coupling_axis,
                    group=f"mode{i}",
                )
            )
            rates[qubit] = _split_rates(mode.width, dephasing_ratio)
            qubit += 1
    system_noise = None
    if bath.ratio is not None:
        system_noise = SystemNoise(kind="x", rate=bath.system_rate)
    return SpinBathModel(system=system, aux=tuple(aux), rates=rates, system_noise=system_noise)


def build_two_bath_model(
    bath_x: LorentzianBath,
    bath_y: LorentzianBath,
    system: SystemSpec,
    rotating: bool = False,
    dephasing_ratio: float = 0.0,
) -> SpinBathModel:
    """Two identical baths coupled through sigma_x and sigma_y.

    Each mode of each bath becomes one bath qubit.  In the Hermitian form
    (default) the stored couplings are v_k/sqrt(2) on an x-coupled and a
    y-coupled group; with ``rotating=True`` the equivalent excitation-
    conserving form is built instead (hop + counter groups with coupling
    v_k), which is the one the variable-iSWAP decomposition is native to.

    An empty second bath degenerates to the plain XX model.

    When the baths carry a system-noise ratio r, inter-step X-gate
    symmetrization is presumed: the model gets system damping at
    gamma_s = 2 kappa_system, which splits into sigma_x/sigma_y channels at
    kappa_system/2 each.
    """
    if bath_x.n_spins != 1 or bath_y.n_spins != 1:
        raise ValueError("two-bath construction is single-system-spin")
    if bath_y.n_modes == 0:
        return bosons_to_spins(bath_x, [1] * bath_x.n_modes, system, dephasing_ratio)
    if bath_x.n_modes != bath_y.n_modes:
        raise ValueError("the two baths must have matching mode counts")
    for mx, my in zip(bath_x.modes, bath_y.modes):
        same = (
            mx.center == my.center
            and mx.width == my.width
            and abs(complex(mx.couplings[0]) - complex(my.couplings[0])) == 0.0
        )
        if not same:
            raise ValueError("the two baths must share identical spectral parameters")
    if (bath_x.ratio is None) != (bath_y.ratio is None):
        raise ValueError("system-noise ratio must be set on both baths or neither")

    aux = []
    rates = {}
    qubit = 1
    kinds = ("hop", "counter") if rotating else ("x", "y")
    scale = 1.0 if rotating else 1.0 / math.sqrt(2.0)
    for tag, kind, bath in zip(("a", "b"), kinds, (bath_x, bath_y)):
        for i, mode in enumerate(bath.modes):
            v = complex(mode.couplings[0]).real
            aux.append(
                AuxSpin(
                    qubit=qubit,
                    omega=mode.center,
                    couplings=(v * scale,),
                    kind=kind,
                    group=f"{tag}{i}",
                )
            )
            rates[qubit] = _split_rates(mode.width, dephasing_ratio)
            qubit += 1
    system_noise = None
    if bath_x.ratio is not None:
        system_noise = SystemNoise(kind="symmetrized_damping", rate=2.0 * bath_x.system_rate)
    return SpinBathModel(system=system, aux=tuple(aux), rates=rates, system_noise=system_noise)


def reconstructed_spectrum(model: SpinBathModel, group_prefix: str = "") -> LorentzianSum:
    """Spectral function implied by the aux spins (weak-coupling response).

    Each x/y/z-coupled member contributes weight c^2, each hop/counter member
    c^2/2 (the two halves of one mode), at width gamma + 2*Gamma.  Restricting
    by ``group_prefix`` selects one coupling group.
    """
    modes = []
    for a in model.aux:
        if not a.group.startswith(group_prefix):
            continue
        c = abs(complex(a.couplings[0]))
        weight = c * c if a.kind in ("x", "y", "z") else 0.5 * c * c
        modes.append((weight, a.omega, model.width(a.qubit)))
    return LorentzianSum(modes=tuple(modes))


_DEPTH_PER_COUPLING = {
    # layers per bath qubit: (native-axis coupling, rotated-axis coupling)
    "ms": (1, 3),
    "iswap": (4, 3),       # XX via iSWAP pair; counter-rotating via X-wrapped iSWAP
    "cnot-b": (3, 5),
    "cnot-s": (3, 5),
    "cz": (5, 7),
}


def circuit_depth(
    decomposition: str,
    n_q: int,
    kind: str = "xx",
    connectivity: str = "all-to-all",
    n_swap: int = 3,
) -> int:
    """Trotter-step depth: one rotation layer plus the coupling layers.

    XX-only models: ms 1+n, iswap 1+4n, cnot 1+3n, cz 1+5n.  Two-bath
    models: ms/iswap 1+2n, cnot 1+4n, cz 1+6n.  A swap network on a
    nearest-neighbor grid adds (n/2 - 1) * n_swap layers (even n only).
    """
    if n_q < 1:
        raise ValueError("need at least one bath qubit")
    decomposition = "cnot-b" if decomposition == "cnot" else decomposition
    if decomposition not in _DEPTH_PER_COUPLING:
        raise ValueError(f"unknown decomposition {decomposition!r}")
    if kind not in ("xx", "two-bath"):
        raise ValueError(f"unknown model kind {kind!r}")
    native, rotated = _DEPTH_PER_COUPLING[decomposition]
    if kind == "xx":
        depth = 1 + native * n_q
    else:
        if n_q % 2:
            raise ValueError("two-bath models need an even bath-qubit count")
        if decomposition == "iswap":
            # native hop + X-wrapped counter-rotating half
            depth = 1 + (1 + 3) * (n_q // 2)
        else:
            depth = 1 + (native + rotated) * (n_q // 2)
    if connectivity == "swap-network":
        if n_q % 2:
            raise ValueError("swap network requires even n_q")
        depth += (n_q // 2 - 1) * n_swap
    elif connectivity != "all-to-all":
        raise ValueError(f"unknown connectivity {connectivity!r}")
    return depth


def match_trotter_step(depth, epsilon, kappa):
    """tau = D * epsilon / kappa; exact when the inputs are exact.

    Fraction/int inputs give a Fraction back, so manifests can report the
    matched step without float rounding.
    """
    exact = all(isinstance(x, (int, Fraction)) for x in (depth, epsilon, kappa))
    if exact:
        return Fraction(depth) * Fraction(epsilon) / Fraction(kappa)
    return depth * epsilon / kappa


@dataclass(frozen=True)
class TrotterPlan:
    """One matched Trotter step: depth, gate error, step length and the
    per-layer channel strengths (p_gamma, p_Gamma) for every qubit."""

    decomposition: str
    depth: int
    epsilon: float
    tau: float
    strengths: dict  # qubit -> (p_gamma, p_Gamma) per layer
    connectivity: str = "all-to-all"
    symmetrized: bool = False
    tau_exact: Fraction | None = None

    @property
    def noise_layers_per_step(self) -> int:
        # the inter-step X gate of a symmetrized run adds one noisy layer
        return self.depth + 1 if self.symmetrized else self.depth


def make_plan(
    model: SpinBathModel,
    decomposition: str,
    epsilon,
    connectivity: str = "all-to-all",
    symmetrize: bool = False,
    epsilon_exact: Fraction | None = None,
    kappa_exact: Fraction | None = None,
) -> TrotterPlan:
    """Match the Trotter step to the gate error and derive per-layer noise.

    The effective rate of a per-layer channel of strength p over step tau is
    L p / tau with L noisy layers per step; inverting gives
    p_gamma(q) = gamma_q tau / L.  For the reference (noisiest) bath qubit
    p_gamma + 2 p_Gamma = epsilon holds exactly.
    """
    if decomposition not in DECOMPOSITIONS:
        raise ValueError(f"unknown decomposition {decomposition!r}")
    epsilon = float(epsilon)
    if not 0 < epsilon < 1:
        raise ValueError("gate error must lie in (0, 1)")
    kind = model.coupling_kind
    depth = circuit_depth(decomposition, model.n_bath, kind, connectivity)
    layers = depth + 1 if symmetrize else depth
    kappa_ref = model.reference_width
    tau = layers * epsilon / kappa_ref
    tau_exact = None
    if epsilon_exact is not None and kappa_exact is not None:
        tau_exact = match_trotter_step(layers, epsilon_exact, kappa_exact)
        if not math.isclose(float(tau_exact), tau, rel_tol=1e-12):
            raise ValueError("exact and float step lengths disagree")
    if model.system_noise is not None and model.system_noise.kind == "x":
        raise ValueError(
            "sigma_x system noise has no per-layer damping/dephasing realization; "
            "use the symmetrized_damping scheme for circuit runs"
        )
    strengths = {}
    for a in model.aux:
        g, G = model.rates[a.qubit]
        strengths[a.qubit] = (g * tau / layers, G * tau / layers)
    for q in range(model.n_system):
        strengths[q] = (0.0, 0.0)
    if model.system_noise is not None and model.system_noise.kind == "symmetrized_damping":
        if not symmetrize:
            raise ValueError("model carries symmetrized system noise; enable symmetrize")
        gs = model.system_noise.rate
        for q in range(model.n_system):
            strengths[q] = (gs * tau / layers, 0.0)
    return TrotterPlan(
        decomposition=decomposition,
        depth=depth,
        epsilon=epsilon,
        tau=tau,
        strengths=strengths,
        connectivity=connectivity,
        symmetrized=symmetrize,
        tau_exact=tau_exact,
    )
