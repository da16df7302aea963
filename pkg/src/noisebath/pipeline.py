"""Config-driven experiment runner.

A single JSON document describes target spectrum, fit, bath mapping, gate
decomposition, noise matching and run parameters; the runner produces CSV
trajectories (simulator and reference), optional spectra and a manifest
recording every derived quantity so a run can be regenerated byte-for-byte.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import __version__, pauli
from .analysis import power_spectrum, steady_window_average
from .circuit import Circuit, swap_network_step, symmetrize, trotter_step
from .coarse_grain import BathMode, FitConfig, FitResult, LorentzianBath, fit
from .errors import ConfigError
from .lindblad import build_spin_lindblad, classical_limit_spec, integrate, steady_state
from .noisy_sim import NoiseChannelSpec, SimRun, run
from .spectral import (
    LorentzianSum,
    MultiChannelTarget,
    OhmicExpCutoff,
    SetStructured,
    Tabulated,
    Temperature,
)
from .spin_model import SpinBathModel, SystemSpec, bosons_to_spins, build_two_bath_model, make_plan

OBSERVABLE_NAMES = ("sx", "sy", "sz", "charge")


def _exact(x) -> Fraction:
    """Exact decimal value of a config number (shortest-repr reconstruction)."""
    return Fraction(repr(float(x)))


@dataclass
class ExperimentConfig:
    target: dict
    delta: float
    gate_error: float
    decomposition: str = "ms"
    fit: dict | None = None
    multiplicities: list | None = None
    dephasing_ratio: float = 0.0
    system_noise: bool = False
    r: float | None = None
    symmetrize: bool = False
    two_bath: bool = False
    steps: int = 100
    observables: tuple = ("sx",)
    oracle: bool = True
    oracle_dt_fraction: int = 20
    fft: bool = False
    connectivity: str = "all-to-all"
    initial_state: str = "plus_x"

    def __post_init__(self):
        if self.system_noise != (self.r is not None):
            raise ConfigError("system_noise flag and r must be set together")
        if self.system_noise and not (self.two_bath and self.symmetrize):
            raise ConfigError(
                "system noise is realized via symmetrized two-bath runs; "
                "set two_bath and symmetrize"
            )
        if self.symmetrize and self.connectivity == "swap-network":
            raise ConfigError("symmetrization over the swap network is unsupported")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.connectivity not in ("all-to-all", "swap-network"):
            raise ConfigError(f"unknown connectivity {self.connectivity!r}")
        for name in self.observables:
            if name not in OBSERVABLE_NAMES:
                raise ConfigError(f"unknown observable {name!r}")
        if self.initial_state not in ("plus_x", "ground"):
            raise ConfigError(f"unknown initial state {self.initial_state!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        try:
            known = {f for f in cls.__dataclass_fields__}
            unknown = set(data) - known
            if unknown:
                raise ConfigError(f"unknown config fields: {sorted(unknown)}")
            data = dict(data)
            if "observables" in data:
                data["observables"] = tuple(data["observables"])
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def build_target(spec: dict):
    kind = spec.get("kind")
    params = {k: v for k, v in spec.items() if k != "kind"}
    try:
        if kind == "ohmic":
            return OhmicExpCutoff(
                alpha=params["alpha"],
                temperature=Temperature(params["temperature"]),
                cutoff=params["cutoff"],
            )
        if kind == "lorentzian-sum":
            return LorentzianSum(
                modes=tuple(tuple(m) for m in params["modes"]),
                background=params.get("background", 0.0),
            )
        if kind == "set":
            return SetStructured(
                alpha=params["alpha"],
                resonance=params["resonance"],
                resonance_width=params["resonance_width"],
                temperature=Temperature(params["temperature"]),
                cutoff=params["cutoff"],
            )
        if kind == "tabulated":
            if "path" in params:
                return Tabulated.from_csv(params["path"])
            return Tabulated(grid=np.asarray(params["grid"]), values=np.asarray(params["values"]))
    except KeyError as exc:
        raise ConfigError(f"target {kind!r} missing parameter {exc}") from exc
    raise ConfigError(f"unknown target kind {kind!r}")


def run_fit(target, fit_spec: dict, system_ratio=None) -> FitResult:
    try:
        config = FitConfig(
            n=fit_spec["n"],
            window=tuple(fit_spec["window"]),
            width_ratios=tuple(fit_spec["width_ratios"]) if fit_spec.get("width_ratios") else None,
            system_ratio=system_ratio,
            grid_points=fit_spec.get("grid_points", 2001),
            max_iterations=fit_spec.get("max_iterations", 200),
            tolerance=fit_spec.get("tolerance", 1e-12),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid fit config: {exc}") from exc
    return fit(target, config)


def _bath_from_config(cfg: ExperimentConfig, target):
    """Either fit the target or take a Lorentzian target verbatim."""
    if cfg.fit is None:
        if not isinstance(target, LorentzianSum) or target.background:
            raise ConfigError("only a background-free lorentzian-sum target can skip the fit")
        modes = tuple(
            BathMode(couplings=(math.sqrt(w),), center=c, width=k) for (w, c, k) in target.modes
        )
        bath = LorentzianBath(modes=modes, ratio=cfg.r, system_rate=0.0)
        if cfg.r is not None:
            width = modes[0].width
            bath = LorentzianBath(modes=modes, ratio=cfg.r, system_rate=cfg.r * width)
        return bath, None
    result = run_fit(target, cfg.fit, system_ratio=cfg.r)
    return result.bath, result


def _initial_state(n_qubits: int, kind: str) -> np.ndarray:
    d = 2**n_qubits
    psi = np.zeros(d, dtype=complex)
    if kind == "plus_x":
        psi[0] = psi[1] = 1.0 / math.sqrt(2.0)
    else:
        psi[0] = 1.0
    return np.outer(psi, psi.conj())


def _observable(name: str, qubit: int, n_qubits: int) -> np.ndarray:
    ops = {
        "sx": pauli.SX,
        "sy": pauli.SY,
        "sz": pauli.SZ,
        "charge": pauli.NUM,  # excited-state population of the system qubit
    }
    return pauli.embed([ops[name]], [qubit], n_qubits)


def _mirror_system_register(circuit: Circuit) -> Circuit:
    """Exchange the two system-register qubits (0 <-> 1) in every gate."""
    swap = {0: 1, 1: 0}

    def remap(g):
        return type(g)(g.kind, tuple(swap.get(q, q) for q in g.qubits), g.theta)

    layers = tuple(tuple(remap(g) for g in layer) for layer in circuit.layers)
    return Circuit(n_qubits=circuit.n_qubits, layers=layers, roles=circuit.roles, meta=circuit.meta)


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run the full pipeline; returns a dict of artifacts.

    Keys: "manifest" (dict), "trajectory_sim" (Trajectory), optional
    "trajectory_oracle", optional "spectrum", optional "fit_result".
    """
    target = build_target(cfg.target)
    bath, fit_result = _bath_from_config(cfg, target)
    system = SystemSpec(splittings=(cfg.delta,))
    if cfg.two_bath:
        model = build_two_bath_model(
            bath, bath, system,
            rotating=(cfg.decomposition == "iswap"),
            dephasing_ratio=cfg.dephasing_ratio,
        )
    else:
        mult = cfg.multiplicities if cfg.multiplicities else [1] * bath.n_modes
        if len(mult) != bath.n_modes:
            raise ConfigError("need one multiplicity per fitted mode")
        model = bosons_to_spins(bath, mult, system, dephasing_ratio=cfg.dephasing_ratio)

    eps_exact = _exact(cfg.gate_error)
    kappa_exact = None
    if cfg.fit is None:
        widths = {m.width for m in bath.modes}
        if len(widths) == 1:
            kappa_exact = _exact(next(iter(widths)))
    plan = make_plan(
        model,
        cfg.decomposition,
        cfg.gate_error,
        connectivity=cfg.connectivity,
        symmetrize=cfg.symmetrize,
        epsilon_exact=eps_exact if kappa_exact is not None else None,
        kappa_exact=kappa_exact,
    )

    # circuit and qubit layout
    if cfg.connectivity == "swap-network":
        circ_a = swap_network_step(model, plan.tau, cfg.decomposition)
        if circ_a.meta["final_system_qubit"] == 0:
            unit, steps_per_unit = circ_a, 1
        else:
            circ_b = _mirror_system_register(circ_a)
            layers = circ_a.layers + circ_b.layers
            unit = Circuit(circ_a.n_qubits, layers, circ_a.roles, meta=circ_a.meta)
            steps_per_unit = 2
        sys_qubit = 0
        qubit_map = {0: 0}
        qubit_map.update({a.qubit: a.qubit + 1 for a in model.aux})
        spare_strengths = {1: plan.strengths[0]}
    else:
        base = trotter_step(model, plan.tau, cfg.decomposition)
        if cfg.symmetrize:
            unit, steps_per_unit = symmetrize(base, model), 2
        else:
            unit, steps_per_unit = base, 1
        sys_qubit = 0
        qubit_map = {q: q for q in range(model.n_qubits)}
        spare_strengths = {}

    strengths = {qubit_map[q]: s for q, s in plan.strengths.items()}
    strengths.update(spare_strengths)
    noise = NoiseChannelSpec(strengths)

    n_circ = unit.n_qubits
    rho0 = _initial_state(n_circ, cfg.initial_state)
    observables = {name: _observable(name, sys_qubit, n_circ) for name in cfg.observables}
    units = max(1, cfg.steps // steps_per_unit)
    sim_traj = run(
        SimRun(
            circuit=unit,
            steps=units,
            rho0=rho0,
            observables=observables,
            noise=noise,
            dt=plan.tau * steps_per_unit,
        )
    )

    artifacts: dict = {"trajectory_sim": sim_traj}
    if fit_result is not None:
        artifacts["fit_result"] = fit_result

    oracle_traj = None
    if cfg.oracle:
        spec = build_spin_lindblad(model)
        rho0_model = _initial_state(model.n_qubits, cfg.initial_state)
        obs_model = {
            name: _observable(name, 0, model.n_qubits) for name in cfg.observables
        }
        frac = cfg.oracle_dt_fraction
        oracle_traj = integrate(
            spec,
            rho0_model,
            t_end=units * steps_per_unit * plan.tau,
            dt=plan.tau / frac,
            observables=obs_model,
            record_every=frac * steps_per_unit,
        )
        artifacts["trajectory_oracle"] = oracle_traj

    if cfg.fft:
        artifacts["spectrum"] = power_spectrum(sim_traj, column=cfg.observables[0])

    angles = {
        a.qubit: complex(a.couplings[0]).real * plan.tau for a in model.aux
    }
    v_tau = None
    v_tau_exact = None
    if bath.n_modes == 1:
        v = abs(complex(bath.modes[0].couplings[0]))
        v_tau = v * plan.tau
        if plan.tau_exact is not None:
            v_tau_exact = str(_exact(v) * plan.tau_exact)
    manifest = {
        "version": __version__,
        "config": _config_dict(cfg),
        "bath": json.loads(bath.to_json()),
        "fit": None
        if fit_result is None
        else {
            "cost": fit_result.cost,
            "rms_residual": fit_result.rms_residual,
            "iterations": fit_result.iterations,
            "converged": fit_result.converged,
        },
        "model": json.loads(model.to_json()),
        "plan": {
            "decomposition": plan.decomposition,
            "depth": plan.depth,
            "noise_layers_per_step": plan.noise_layers_per_step,
            "epsilon": plan.epsilon,
            "tau": plan.tau,
            "tau_exact": None if plan.tau_exact is None else str(plan.tau_exact),
            "v_tau": v_tau,
            "v_tau_exact": v_tau_exact,
            "delta_tau": cfg.delta * plan.tau,
            "kappa_ref": model.reference_width,
            "strengths": {str(q): list(s) for q, s in sorted(plan.strengths.items())},
            "connectivity": plan.connectivity,
            "symmetrized": plan.symmetrized,
        },
        "circuit": {
            "n_qubits": unit.n_qubits,
            "layers_per_unit": unit.depth,
            "steps_per_unit": steps_per_unit,
            "coupling_angles": {str(q): th for q, th in sorted(angles.items())},
        },
        "run": {
            "units": units,
            "dt": plan.tau * steps_per_unit,
            "t_end": units * steps_per_unit * plan.tau,
            "observables": list(cfg.observables),
            "initial_state": cfg.initial_state,
        },
    }
    artifacts["manifest"] = manifest
    return artifacts


def _config_dict(cfg: ExperimentConfig) -> dict:
    out = {}
    for name in cfg.__dataclass_fields__:
        value = getattr(cfg, name)
        if isinstance(value, tuple):
            value = list(value)
        out[name] = value
    return out


def write_artifacts(artifacts: dict, outdir: str) -> list:
    """Write the run artifacts; returns the list of files written."""
    os.makedirs(outdir, exist_ok=True)
    written = []

    def save(name, text):
        path = os.path.join(outdir, name)
        with open(path, "w") as fh:
            fh.write(text)
        written.append(path)

    save("manifest.json", json.dumps(artifacts["manifest"], sort_keys=True, indent=2) + "\n")
    save("trajectory_sim.csv", artifacts["trajectory_sim"].to_csv())
    if "trajectory_oracle" in artifacts:
        save("trajectory_oracle.csv", artifacts["trajectory_oracle"].to_csv())
    if "spectrum" in artifacts:
        save("spectrum.csv", artifacts["spectrum"].to_csv())
    if "fit_result" in artifacts:
        save("fit.json", artifacts["fit_result"].to_json() + "\n")
    return written


# --- example presets -------------------------------------------------------


def example_a_config(n_spins: int = 8, gate_error: float = 0.01, decomposition: str = "ms",
                     steps: int | None = None) -> ExperimentConfig:
    """Spin coupled ultra-strongly to one broad mode: v = w0 = 2k, Delta = 0.9 w0,
    bath qubits with T_phi = 2 T_1, run to t = 12/v."""
    depth_map = {"ms": 1, "iswap": 4, "cnot-b": 3, "cnot-s": 3, "cz": 5}
    depth = 1 + depth_map[decomposition] * n_spins
    tau = depth * gate_error / 0.5
    if steps is None:
        steps = int(math.ceil(12.0 / tau))
    return ExperimentConfig(
        target={"kind": "lorentzian-sum", "modes": [[1.0, 1.0, 0.5]]},
        delta=0.9,
        gate_error=gate_error,
        decomposition=decomposition,
        fit=None,
        multiplicities=[n_spins],
        dephasing_ratio=0.5,
        steps=steps,
        observables=("sx",),
        oracle=True,
        fft=True,
    )


def example_b_config(alpha: float, gate_error: float = 0.05, n_modes: int = 8,
                     steps: int | None = None) -> ExperimentConfig:
    """Ohmic bath at T = 1.5 Delta with cutoff 10 Delta, eight modes with a
    common width, damping-only bath qubits, run to t = 20/Delta."""
    cfg = ExperimentConfig(
        target={"kind": "ohmic", "alpha": alpha, "temperature": 1.5, "cutoff": 10.0},
        delta=1.0,
        gate_error=gate_error,
        decomposition="ms",
        fit={"n": n_modes, "window": [-4.0, 12.0]},
        dephasing_ratio=0.0,
        steps=steps if steps is not None else 1,
        observables=("sx",),
        oracle=True,
    )
    if steps is None:
        target = build_target(cfg.target)
        bath, _ = _bath_from_config(cfg, target)
        depth = 1 + bath.n_modes
        tau = depth * gate_error / max(m.width for m in bath.modes)
        cfg.steps = int(math.ceil(20.0 / tau))
    return cfg


def charge_relaxation_rate(bath: LorentzianBath, delta: float,
                           system_rate: float = 0.0) -> float:
    """Estimate of the slowest rate governing the island-charge settling.

    The golden-rule rate (S(delta) + S(-delta))/4 plus the transverse
    system-noise channels drives the charge itself, but the auxiliary modes
    relax at their own widths; the slowest of the two bounds the approach to
    the stationary state."""
    s = bath.channel(np.array([delta, -delta]), 0, 0)
    golden = float(np.real(s[0] + s[1])) / 4.0 + system_rate
    slowest_mode = min(m.width for m in bath.modes)
    return min(golden, slowest_mode)


def example_c_config(delta: float, system_noise: bool = False, r: float = 0.5,
                     gate_error: float = 0.01, steps: int | None = None,
                     t_end: float | str = "auto", decomposition: str = "ms") -> ExperimentConfig:
    """Electron-transport model: structured two-resonance bath at T = 0.3 w0,
    two modes per bath, four bath qubits, optional symmetrized system noise.

    ``t_end="auto"`` integrates for seven estimated relaxation times (the
    charge relaxes slowly far off resonance), so tail averages are settled.
    """
    cfg = ExperimentConfig(
        target={
            "kind": "set",
            "alpha": 0.25,
            "resonance": 1.0,
            "resonance_width": 0.4,
            "temperature": 0.3,
            "cutoff": math.sqrt(3.0),
        },
        delta=delta,
        gate_error=gate_error,
        decomposition=decomposition,
        fit={"n": 2, "window": [-1.0, 3.5]},
        two_bath=True,
        system_noise=system_noise,
        r=r if system_noise else None,
        symmetrize=system_noise,
        steps=steps if steps is not None else 1,
        observables=("charge", "sx"),
        oracle=True,
        oracle_dt_fraction=10,
        fft=False,
        initial_state="plus_x",
    )
    if steps is None:
        target = build_target(cfg.target)
        bath, _ = _bath_from_config(cfg, target)
        kind_depth = {"ms": 2, "iswap": 2, "cnot-b": 4, "cnot-s": 4, "cz": 6}
        depth = 1 + kind_depth[decomposition] * 2 * bath.n_modes
        layers = depth + 1 if system_noise else depth
        tau = layers * gate_error / max(m.width for m in bath.modes)
        if t_end == "auto":
            rate = charge_relaxation_rate(
                bath, delta, system_rate=bath.system_rate if system_noise else 0.0
            )
            t_end = max(60.0, 7.0 / rate)
        cfg.steps = int(math.ceil(float(t_end) / tau))
    return cfg


def set_sweep(
    deltas,
    system_noise: bool = False,
    r: float = 0.5,
    gate_error: float = 0.01,
    t_end: float | str = "auto",
    tail_fraction: float = 0.25,
    max_workers: int | None = None,
):
    """Steady-state island charge versus gate voltage.

    Returns rows (delta, charge_sim, charge_oracle, fermi); the Fermi value
    comes from the classical weak-coupling limit of the target itself.
    """
    from concurrent.futures import ThreadPoolExecutor

    if max_workers is None:
        max_workers = int(os.environ.get("NOISEBATH_THREADS", "1"))

    def one(delta):
        cfg = example_c_config(
            delta=delta, system_noise=system_noise, r=r, gate_error=gate_error, t_end=t_end
        )
        arts = run_experiment(cfg)
        sim = steady_window_average(arts["trajectory_sim"], "charge", tail_fraction)
        orc = steady_window_average(arts["trajectory_oracle"], "charge", tail_fraction)
        spec = classical_limit_spec(cfg.target["temperature"], delta)
        rho = steady_state(spec, tolerance=1e-10)
        fermi = float(np.real(np.trace(pauli.NUM @ rho)))
        return (float(delta), sim, orc, fermi)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            rows = list(pool.map(one, deltas))
    else:
        rows = [one(d) for d in deltas]
    return rows
