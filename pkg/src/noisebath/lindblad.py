"""Exact Lindblad master-equation reference solvers.

Two model builders are provided: the all-spin form (bath qubits with damping
and dephasing collapse operators) and the truncated-boson form (damped
harmonic modes), plus the classical weak-coupling limit used for the
electron-transport steady state.  Integration is fixed-step RK4 on the
density matrix; for qubit registers a structured fast path applies the
generator with O(d^2) tensor operations per term instead of dense matmuls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

try:  # accelerated generator kernel; the numpy path below is the reference
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    _HAVE_NUMBA = False

from . import pauli
from .coarse_grain import LorentzianBath
from .errors import ConvergenceError, NumericalInvariantError
from .spin_model import SpinBathModel, SystemSpec
from .trajectory import Trajectory

__all__ = [
    "LindbladSpec",
    "build_spin_lindblad",
    "build_boson_lindblad",
    "classical_limit_spec",
    "integrate",
    "steady_state",
    "check_density",
    "DENSE_DIMENSION_LIMIT",
]

DENSE_DIMENSION_LIMIT = 4096
SPIN_QUBIT_LIMIT = 12


def check_density(rho: np.ndarray, where: str = "", positivity_tol: float = 1e-8) -> None:
    """Assert Hermiticity (1e-12), unit trace (1e-10) and numerical positivity."""
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > 1e-12 * max(1.0, np.max(np.abs(rho))):
        raise NumericalInvariantError(f"density matrix not Hermitian ({herm:.3e}) {where}")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > 1e-10:
        raise NumericalInvariantError(f"density matrix trace {tr} {where}")
    eigs = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if eigs.min() < -positivity_tol:
        raise NumericalInvariantError(f"density matrix eigenvalue {eigs.min():.3e} {where}")


# ---------------------------------------------------------------------------
# structured qubit generator (internal fast path)


@dataclass
class _PauliString:
    coeff: float
    mask: int
    phase: np.ndarray          # O|a> = phase[a] |a XOR mask>
    phase_flipped: np.ndarray  # phase[a XOR mask], the row-phase after the flip


def _string_phase(n: int, sites_ops: dict) -> tuple[int, np.ndarray]:
    """Mask and phase vector of a product of X/Y factors on given qubits."""
    d = 2**n
    mask = 0
    phase = np.ones(d, dtype=complex)
    idx = np.arange(d)
    for q, op in sites_ops.items():
        bit = (idx >> q) & 1
        if op == "x":
            mask |= 1 << q
        elif op == "y":
            mask |= 1 << q
            phase = phase * (1j * (1 - 2 * bit))
        elif op == "z":
            phase = phase * (1 - 2 * bit)
        else:
            raise ValueError(op)
    return mask, phase


def _flip_ket(rho: np.ndarray, mask: int, n: int) -> np.ndarray:
    d = rho.shape[0]
    t = rho.reshape((2,) * n + (d,))
    axes = [n - 1 - q for q in range(n) if (mask >> q) & 1]
    return np.flip(t, axis=tuple(axes)).reshape(d, d) if axes else rho


def _flip_bra(rho: np.ndarray, mask: int, n: int) -> np.ndarray:
    d = rho.shape[0]
    t = rho.reshape((d,) + (2,) * n)
    axes = [1 + n - 1 - q for q in range(n) if (mask >> q) & 1]
    return np.flip(t, axis=tuple(axes)).reshape(d, d) if axes else rho


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _fused_rhs_kernel(
        rho, linear, s_masks, s_coeffs, s_phase, d_bits, d_rates, f_masks, f_qr, f_qc, f_rates, out
    ):  # pragma: no cover - exercised via integrate
        d = rho.shape[0]
        n_s = s_masks.size
        n_d = d_bits.size
        n_f = f_masks.size
        for a in range(d):
            for b in range(d):
                val = linear[a, b] * rho[a, b]
                for k in range(n_s):
                    m = s_masks[k]
                    val += (-1j * s_coeffs[k]) * (
                        s_phase[k, a ^ m] * rho[a ^ m, b] - rho[a, b ^ m] * s_phase[k, b]
                    )
                for k in range(n_d):
                    bit = d_bits[k]
                    if (a & bit) == 0 and (b & bit) == 0:
                        val += d_rates[k] * rho[a | bit, b | bit]
                for k in range(n_f):
                    m = f_masks[k]
                    val += f_rates[k] * f_qr[k, a] * rho[a ^ m, b ^ m] * f_qc[k, b]
                out[a, b] = val


@dataclass
class _QubitStructure:
    """Precompiled generator pieces for an all-qubit Lindbladian."""

    n: int
    scale: float                      # largest single-term frequency/rate
    linear: np.ndarray                # elementwise matrix: -i(E_a - E_b) + decay
    strings: list = field(default_factory=list)   # Hamiltonian Pauli strings
    jumps_damping: list = field(default_factory=list)   # (qubit, rate)
    jumps_flip: list = field(default_factory=list)       # (rate, mask, q_row, q_col)

    def make_fused_rhs(self):
        """Single-pass generator application via the numba kernel."""
        d = 2**self.n
        s_masks = np.array([s.mask for s in self.strings], dtype=np.int64)
        s_coeffs = np.array([s.coeff for s in self.strings], dtype=np.float64)
        s_phase = (
            np.array([s.phase for s in self.strings], dtype=np.complex128)
            if self.strings
            else np.zeros((0, d), dtype=np.complex128)
        )
        d_bits = np.array([1 << q for q, _ in self.jumps_damping], dtype=np.int64)
        d_rates = np.array([r for _, r in self.jumps_damping], dtype=np.float64)
        ones = np.ones(d, dtype=np.complex128)
        f_masks = np.array([m for _, m, _, _ in self.jumps_flip], dtype=np.int64)
        f_rates = np.array([r for r, _, _, _ in self.jumps_flip], dtype=np.float64)
        f_qr = (
            np.array(
                [(ones if qr is None else qr) for _, _, qr, _ in self.jumps_flip],
                dtype=np.complex128,
            )
            if self.jumps_flip
            else np.zeros((0, d), dtype=np.complex128)
        )
        f_qc = np.conj(f_qr)
        linear = np.ascontiguousarray(self.linear)

        def rhs(rho):
            out = np.empty((d, d), dtype=np.complex128)
            _fused_rhs_kernel(
                np.ascontiguousarray(rho),
                linear,
                s_masks,
                s_coeffs,
                s_phase,
                d_bits,
                d_rates,
                f_masks,
                f_qr,
                f_qc,
                f_rates,
                out,
            )
            return out

        return rhs

    def make_rhs(self):
        """Generator closure; exploits Hermiticity of rho (preserved by every
        RK4 stage), so each commutator needs only its left product."""
        n = self.n
        d = 2**n
        scratch = np.empty((d, d), dtype=complex)
        strings = [
            (s.coeff, s.mask, None if np.allclose(s.phase_flipped, 1.0) else s.phase_flipped)
            for s in self.strings
        ]
        linear = self.linear
        jumps_damping = self.jumps_damping
        jumps_flip = self.jumps_flip

        def rhs(rho):
            out = linear * rho
            if strings:
                acc = scratch
                acc.fill(0.0)
                for coeff, mask, qphase in strings:
                    flipped = _flip_ket(rho, mask, n)
                    if qphase is None:
                        acc += coeff * flipped
                    else:
                        acc += (coeff * qphase)[:, None] * flipped
                # -i (A - A^dag) with A = sum_s c_s S_s rho; rho S = (S rho)^dag
                a = -1j * acc
                out += a
                out += a.conj().T
            for qubit, rate in jumps_damping:
                t = rho.reshape((2,) * (2 * n))
                v = np.moveaxis(t, (n - 1 - qubit, 2 * n - 1 - qubit), (0, 1))
                o = out.reshape((2,) * (2 * n))
                ov = np.moveaxis(o, (n - 1 - qubit, 2 * n - 1 - qubit), (0, 1))
                ov[0, 0] += rate * v[1, 1]
            for rate, mask, q_row, q_col in jumps_flip:
                flipped = _flip_bra(_flip_ket(rho, mask, n), mask, n)
                if q_row is None:
                    out += rate * flipped
                else:
                    out += rate * (q_row[:, None] * flipped * q_col[None, :])
            return out

        return rhs


def _compile_structure(n, diag_terms, string_terms, dampings, dephasings, flips):
    """Assemble the fused elementwise matrix and per-term actions.

    diag_terms: list of (energy vector contributions) already summed into E.
    string_terms: (coeff, {qubit: "x"|"y"|"z"}) Hamiltonian strings.
    dampings: (qubit, rate) sigma_- collapse.
    dephasings: (qubit, rate) sigma_z collapse at that rate.
    flips: (rate, {qubit: "x"|"y"}) one-qubit flip collapse (sigma_x/sigma_y).
    """
    d = 2**n
    idx = np.arange(d)
    energy = np.zeros(d)
    scale = 1e-300
    for vec in diag_terms:
        energy = energy + vec
        scale = max(scale, float(np.max(np.abs(vec))))
    decay = np.zeros((d, d))
    for q, rate in dampings:
        bit = (idx >> q) & 1
        decay -= 0.5 * rate * (bit[:, None] + bit[None, :])
        scale = max(scale, rate)
    for q, rate in dephasings:
        s = 1 - 2 * ((idx >> q) & 1)
        decay += rate * (np.outer(s, s) - 1.0)
        scale = max(scale, rate)
    struct = _QubitStructure(
        n=n,
        scale=scale,
        linear=(-1j * (energy[:, None] - energy[None, :]) + decay).astype(complex),
    )
    for coeff, sites in string_terms:
        mask, phase = _string_phase(n, sites)
        struct.strings.append(
            _PauliString(coeff=coeff, mask=mask, phase=phase, phase_flipped=phase[idx ^ mask])
        )
        struct.scale = max(struct.scale, abs(coeff))
    for q, rate in dampings:
        if rate > 0:
            struct.jumps_damping.append((q, rate))
    for rate, sites in flips:
        mask, phase = _string_phase(n, sites)
        q_row = phase[idx ^ mask]
        if np.allclose(q_row, 1.0):
            struct.jumps_flip.append((rate, mask, None, None))
        else:
            struct.jumps_flip.append((rate, mask, q_row, np.conj(q_row)))
        struct.linear -= rate  # anticommutator of a unitary collapse op
        struct.scale = max(struct.scale, rate)
    return struct


# ---------------------------------------------------------------------------
# public spec


@dataclass
class LindbladSpec:
    """Hamiltonian plus collapse terms r_k (L rho L+ - {L+L, rho}/2)."""

    hamiltonian: np.ndarray
    collapse: tuple
    dims: tuple
    structure: _QubitStructure | None = None

    def __post_init__(self):
        h = self.hamiltonian
        if np.max(np.abs(h - h.conj().T)) > 1e-10 * max(1.0, np.max(np.abs(h))):
            raise ValueError("Hamiltonian must be Hermitian")
        for op, rate in self.collapse:
            if rate < 0:
                raise ValueError("collapse rates must be >= 0")
            if op.shape != h.shape:
                raise ValueError("collapse operator dimension mismatch")

    @property
    def dimension(self) -> int:
        return self.hamiltonian.shape[0]

    def term_scale(self) -> float:
        """Coarse magnitude bound used by the step-size stability guard."""
        if self.structure is not None:
            return self.structure.scale
        h = self.hamiltonian
        scale = float(np.max(np.abs(np.diag(h)))) if h.size else 0.0
        off = np.abs(h) - np.diag(np.abs(np.diag(h)))
        scale = max(scale, float(np.max(off.sum(axis=1))) if h.size else 0.0)
        for op, rate in self.collapse:
            scale = max(scale, rate * float(np.max(np.abs(op)) ** 2))
        return max(scale, 1e-300)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """The generator L[rho] (dense path; the fast path overrides in integrate)."""
        h = self.hamiltonian
        out = -1j * (h @ rho - rho @ h)
        for op, rate in self.collapse:
            if rate == 0:
                continue
            opd = op.conj().T
            anti = opd @ op
            out += rate * (op @ rho @ opd - 0.5 * (anti @ rho + rho @ anti))
        return out


def _system_energy_vectors(system: SystemSpec, n: int):
    idx = np.arange(2**n)
    vecs = []
    for i, delta in enumerate(system.splittings):
        s = 1 - 2 * ((idx >> i) & 1)
        vecs.append(-0.5 * delta * s)
    return vecs


def build_spin_lindblad(model: SpinBathModel) -> LindbladSpec:
    """All-spin master equation: sigma_- collapse at gamma_i and sigma_z at
    Gamma_i/2 per bath qubit, plus the scheme-dependent system-noise terms."""
    n = model.n_qubits
    if n > SPIN_QUBIT_LIMIT:
        raise ValueError(f"spin Lindbladian limited to {SPIN_QUBIT_LIMIT} qubits")
    d = 2**n
    idx = np.arange(d)

    diag_terms = _system_energy_vectors(model.system, n)
    string_terms = []
    for a in model.aux:
        bit = (idx >> a.qubit) & 1
        diag_terms.append(a.omega * bit)
        c = complex(a.couplings[0])
        if model.n_system != 1:
            raise NotImplementedError("structured generator covers one system spin")
        if abs(c.imag) > 0:
            raise NotImplementedError("structured generator requires real couplings")
        g = c.real / 2.0
        if a.kind in ("x", "y", "z"):
            string_terms.append((g, {0: a.kind, a.qubit: "x"}))
        elif a.kind == "hop":
            string_terms.append((g / 2.0, {0: "x", a.qubit: "x"}))
            string_terms.append((g / 2.0, {0: "y", a.qubit: "y"}))
        elif a.kind == "counter":
            string_terms.append((g / 2.0, {0: "x", a.qubit: "x"}))
            string_terms.append((-g / 2.0, {0: "y", a.qubit: "y"}))
    dampings = []
    dephasings = []
    flips = []
    collapse = []
    for a in model.aux:
        gamma, big_gamma = model.rates[a.qubit]
        dampings.append((a.qubit, gamma))
        collapse.append((pauli.embed([pauli.SM], [a.qubit], n), gamma))
        if big_gamma > 0:
            dephasings.append((a.qubit, big_gamma / 2.0))
            collapse.append((pauli.embed([pauli.SZ], [a.qubit], n), big_gamma / 2.0))
    if model.system_noise is not None:
        rate = model.system_noise.rate
        if model.system_noise.kind == "x":
            flips.append((rate, {0: "x"}))
            collapse.append((pauli.embed([pauli.SX], [0], n), rate))
        else:  # symmetrized damping -> balanced sigma_x / sigma_y channels
            flips.append((rate / 4.0, {0: "x"}))
            flips.append((rate / 4.0, {0: "y"}))
            collapse.append((pauli.embed([pauli.SX], [0], n), rate / 4.0))
            collapse.append((pauli.embed([pauli.SY], [0], n), rate / 4.0))

    # dense Hamiltonian for the public contract
    h = np.zeros((d, d), dtype=complex)
    energy = np.zeros(d)
    for vec in diag_terms:
        energy = energy + vec
    h[np.arange(d), np.arange(d)] = energy
    for coeff, sites in string_terms:
        ops = [{"x": pauli.SX, "y": pauli.SY, "z": pauli.SZ}[kind] for kind in sites.values()]
        h = h + coeff * pauli.embed(ops, list(sites.keys()), n)
    for (i, j), delta in model.system.hopping.items():
        h = h + 0.5 * delta * pauli.embed([pauli.SP, pauli.SM], [i, j], n)
        h = h + 0.5 * np.conj(delta) * pauli.embed([pauli.SP, pauli.SM], [j, i], n)

    structure = None
    if not model.system.hopping:
        structure = _compile_structure(n, diag_terms, string_terms, dampings, dephasings, flips)
    return LindbladSpec(hamiltonian=h, collapse=tuple(collapse), dims=(2,) * n, structure=structure)


def _ladder(n_max: int) -> np.ndarray:
    a = np.zeros((n_max + 1, n_max + 1), dtype=complex)
    for k in range(1, n_max + 1):
        a[k - 1, k] = math.sqrt(k)
    return a


def _embed_site(op: np.ndarray, site: int, dims) -> np.ndarray:
    out = np.array([[1.0 + 0.0j]])
    for s in reversed(range(len(dims))):
        factor = op if s == site else np.eye(dims[s], dtype=complex)
        out = np.kron(out, factor)
    return out


def build_boson_lindblad(
    bath: LorentzianBath, system: SystemSpec, n_max: int = 5
) -> LindbladSpec:
    """Truncated-boson master equation: each mode a damped oscillator.

    Site 0 is the system spin, sites 1..n the modes with Fock cutoff n_max;
    collapse operators are the mode annihilators at the fitted widths.
    """
    if system.n_spins != 1:
        raise NotImplementedError("boson reference is single-system-spin")
    dims = (2,) + (n_max + 1,) * bath.n_modes
    d = int(np.prod(dims))
    if d > DENSE_DIMENSION_LIMIT:
        raise ValueError(f"dimension {d} exceeds the dense limit {DENSE_DIMENSION_LIMIT}")
    axis_op = {"x": pauli.SX, "y": pauli.SY, "z": pauli.SZ}[system.coupling_axis]
    h = -0.5 * system.splittings[0] * _embed_site(pauli.SZ, 0, dims)
    collapse = []
    for k, mode in enumerate(bath.modes):
        a = _ladder(n_max)
        site = 1 + k
        h = h + mode.center * _embed_site(a.conj().T @ a, site, dims)
        v = complex(mode.couplings[0]).real
        coupling = _embed_site(axis_op, 0, dims) @ _embed_site(a + a.conj().T, site, dims)
        h = h + 0.5 * v * coupling
        collapse.append((_embed_site(a, site, dims), mode.width))
    if bath.ratio is not None and bath.system_rate > 0:
        collapse.append((_embed_site(pauli.SX, 0, dims), bath.system_rate))
    return LindbladSpec(hamiltonian=h, collapse=tuple(collapse), dims=dims)


def classical_limit_spec(temperature, delta: float) -> LindbladSpec:
    """Weak-coupling classical limit of the transport model at zero bias.

    Sequential single-electron exchange with thermal leads gives excitation
    and decay rates proportional to f(delta) and 1 - f(delta), with f the
    Fermi function at the bath temperature; the steady excited population is
    f(delta) regardless of the structured envelope.  Rates are normalized to
    sum to one so the relaxation horizon is O(1).
    """
    t = getattr(temperature, "value", float(temperature))
    if t < 0:
        raise ValueError("temperature must be >= 0")
    if t == 0:
        f = 0.5 if delta == 0 else (1.0 if delta < 0 else 0.0)
    else:
        f = 1.0 / (1.0 + math.exp(delta / t))
    h = -0.5 * delta * pauli.SZ
    collapse = ((pauli.SM.copy(), 1.0 - f), (pauli.SP.copy(), f))
    return LindbladSpec(hamiltonian=h, collapse=collapse, dims=(2,))


# ---------------------------------------------------------------------------
# integration


def _rhs_function(spec: LindbladSpec):
    if spec.structure is not None:
        if _HAVE_NUMBA:
            return spec.structure.make_fused_rhs()
        return spec.structure.make_rhs()
    h = spec.hamiltonian
    terms = []
    for op, rate in spec.collapse:
        if rate == 0:
            continue
        opd = op.conj().T
        terms.append((rate, op, opd, opd @ op))

    def rhs(rho):
        out = -1j * (h @ rho - rho @ h)
        for rate, op, opd, anti in terms:
            out += rate * (op @ rho @ opd)
            out -= 0.5 * rate * (anti @ rho + rho @ anti)
        return out

    return rhs


def integrate(
    spec: LindbladSpec,
    rho0: np.ndarray,
    t_end: float,
    dt: float,
    observables: dict,
    record_every: int = 1,
    check_every: int = 10,
    positivity_tol: float = 1e-6,
) -> Trajectory:
    """Fixed-step RK4 on the vectorized master equation.

    Samples every ``record_every`` steps (use tau/dt for a Trotter-aligned
    grid).  The step must satisfy dt * term_scale < 0.1, a coarse stiffness
    guard on the largest single-term frequency in the generator.
    """
    scale = spec.term_scale()
    if dt * scale >= 0.1:
        raise ValueError(
            f"dt*scale = {dt * scale:.3f} violates the stability guard (need < 0.1)"
        )
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(t_end, dt):
        raise ValueError("t_end must be an integer number of steps")
    rhs = _rhs_function(spec)
    rho = np.array(rho0, dtype=complex)
    check_density(rho, "initial state")
    names = list(observables)
    records = {name: [_expect(observables[name], rho)] for name in names}
    times = [0.0]
    samples = 0
    for step in range(1, n_steps + 1):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if step % record_every == 0:
            samples += 1
            times.append(step * dt)
            for name in names:
                records[name].append(_expect(observables[name], rho))
            if samples % check_every == 0:
                _invariants(rho, f"t = {step * dt:.6g}", positivity_tol)
    _invariants(rho, "final state", positivity_tol)
    check_density(rho / np.trace(rho).real, "final state (normalized)", positivity_tol)
    return Trajectory(
        times=np.asarray(times), data={n_: np.asarray(records[n_]) for n_ in names}
    )


def _expect(op: np.ndarray, rho: np.ndarray) -> float:
    value = complex(np.einsum("ij,ji->", op, rho))
    if abs(value.imag) > 1e-8:
        raise NumericalInvariantError(f"expectation imaginary part {value.imag:.3e}")
    return value.real


def _invariants(rho: np.ndarray, where: str, positivity_tol: float) -> None:
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > 1e-8:
        raise NumericalInvariantError(f"trace {tr} at {where}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > 1e-10:
        raise NumericalInvariantError(f"Hermiticity {herm:.3e} at {where}")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -positivity_tol:
        raise NumericalInvariantError(f"positivity broke at {where}")


def steady_state(
    spec: LindbladSpec,
    tolerance: float = 1e-8,
    max_time: float | None = None,
    rho0: np.ndarray | None = None,
) -> np.ndarray:
    """Long-time integration until ||L[rho]||_1 < tolerance.

    Reuses the verified RK4 integrator in chunks; raises ConvergenceError if
    the generator norm has not dropped below tolerance within ``max_time``.
    """
    if not any(rate > 0 for _, rate in spec.collapse):
        raise ValueError("steady state needs at least one dissipative term")
    d = spec.dimension
    rho = np.array(rho0, dtype=complex) if rho0 is not None else np.eye(d, dtype=complex) / d
    scale = spec.term_scale()
    dt = 0.05 / scale
    min_rate = min(rate for _, rate in spec.collapse if rate > 0)
    horizon = max_time if max_time is not None else 400.0 / min_rate
    rhs = _rhs_function(spec)
    chunk = max(1, int(round((2.0 / min_rate) / dt)))
    t = 0.0
    while t < horizon:
        for _ in range(chunk):
            k1 = rhs(rho)
            k2 = rhs(rho + 0.5 * dt * k1)
            k3 = rhs(rho + 0.5 * dt * k2)
            k4 = rhs(rho + dt * k3)
            rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += chunk * dt
        residual = float(np.sum(np.abs(np.linalg.svd(rhs(rho), compute_uv=False))))
        if residual < tolerance:
            check_density(rho, "steady state", positivity_tol=1e-6)
            return rho
    raise ConvergenceError(
        f"steady state not reached within t = {horizon:.3g} (residual {residual:.3e})"
    )
