"""Command-line entry point.

Subcommands: fit | simulate | analyze | effective-noise | example-a |
example-b | example-c.  Exit codes: 0 success, 2 configuration error,
3 numerical-invariant failure, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .analysis import find_peaks, power_spectrum, steady_window_average
from .coarse_grain import BathMode, LorentzianBath
from .errors import ConfigError, ConvergenceError, NumericalInvariantError
from .noisy_sim import NoiseChannelSpec
from .pipeline import (
    ExperimentConfig,
    build_target,
    example_a_config,
    example_b_config,
    example_c_config,
    run_experiment,
    run_fit,
    set_sweep,
    write_artifacts,
)
from .spin_model import SystemSpec, bosons_to_spins, make_plan
from .trajectory import Trajectory


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)
    print(path)


def _load_config(args) -> dict:
    if args.config:
        with open(args.config) as fh:
            return json.load(fh)
    return {}


def cmd_fit(args) -> int:
    data = _load_config(args)
    if args.target:
        data.setdefault("target", {})["kind"] = args.target
    for key in ("alpha", "temperature", "cutoff"):
        value = getattr(args, key)
        if value is not None:
            data["target"][key] = value
    fit_spec = data.setdefault("fit", {})
    if args.n:
        fit_spec["n"] = args.n
    if args.window:
        fit_spec["window"] = args.window
    if args.homogeneous:
        fit_spec["width_ratios"] = None
    target = build_target(data["target"])
    result = run_fit(target, fit_spec, system_ratio=args.r)
    outdir = args.out
    _write(os.path.join(outdir, "fit.json"), result.to_json() + "\n")
    lo, hi = fit_spec["window"]
    grid = np.linspace(lo, hi, fit_spec.get("grid_points", 2001))
    model = result.bath.channel(grid, 0, 0)
    tgt = np.real(target(grid))
    rows = ["omega,target,model,residual"]
    for w, t, m in zip(grid, tgt, np.real(model)):
        rows.append(f"{w:.17g},{t:.17g},{m:.17g},{m - t:.17g}")
    _write(os.path.join(outdir, "fit_residual.csv"), "\n".join(rows) + "\n")
    if not result.converged:
        raise ConvergenceError("fit did not converge within its iteration budget")
    return 0


def cmd_simulate(args) -> int:
    data = _load_config(args)
    cfg = ExperimentConfig.from_dict(data)
    artifacts = run_experiment(cfg)
    write_artifacts(artifacts, args.out)
    return 0


def cmd_analyze(args) -> int:
    with open(args.input) as fh:
        traj = Trajectory.from_csv(fh.read())
    if args.fft:
        spec = power_spectrum(traj, column=args.column, window=args.window)
        _write(os.path.join(args.out, "spectrum.csv"), spec.to_csv())
        if args.peaks is not None:
            peaks = find_peaks(spec, args.peaks)
            _write(
                os.path.join(args.out, "peaks.json"),
                json.dumps([{"omega": w, "power": p} for w, p in peaks], indent=2) + "\n",
            )
    if args.steady:
        value = steady_window_average(traj, column=args.column, tail_fraction=args.tail_fraction)
        _write(
            os.path.join(args.out, "steady.json"),
            json.dumps({"column": args.column, "value": value}, indent=2) + "\n",
        )
    if not (args.fft or args.steady):
        raise ConfigError("nothing to analyze: pass --fft and/or --steady")
    return 0


def cmd_effective_noise(args) -> int:
    from .circuit import trotter_step
    from .effective_noise import (
        effective_lindblad,
        extract_system_dephasing,
        verify_first_order,
    )
    from .lindblad import build_spin_lindblad

    bath = LorentzianBath(
        modes=(BathMode(couplings=(1.0,), center=1.0, width=0.5),)
    )
    model = bosons_to_spins(
        bath, [args.n_bath], SystemSpec(splittings=(0.9,)), dephasing_ratio=args.dephasing_ratio
    )
    plan = make_plan(model, args.decomp, args.eps)
    step = trotter_step(model, plan.tau, args.decomp)
    noise = NoiseChannelSpec(plan.strengths)
    leff = effective_lindblad(step, noise, plan.tau)
    report = verify_first_order(step, build_spin_lindblad(model).hamiltonian, noise, plan.tau)
    gz = extract_system_dephasing(step, noise, plan.tau)
    payload = json.loads(leff.to_json())
    payload["system_sigma_z_weight"] = gz
    payload["per_qubit_damping"] = {str(q): w for q, w in leff.weight_by_qubit("damping").items()}
    payload["per_qubit_dephasing"] = {
        str(q): w for q, w in leff.weight_by_qubit("dephasing").items()
    }
    _write(os.path.join(args.out, "leff.json"), json.dumps(payload, sort_keys=True, indent=2) + "\n")
    text = [
        f"decomposition: {args.decomp}   depth: {plan.depth}   tau: {plan.tau!r}",
        f"extracted system sigma_z weight: {gz!r}",
        report.to_text(),
    ]
    _write(os.path.join(args.out, "report.txt"), "\n".join(text) + "\n")
    return 0


def cmd_example_a(args) -> int:
    cfg = example_a_config(
        n_spins=args.N, gate_error=args.eps, decomposition=args.decomp, steps=args.steps
    )
    artifacts = run_experiment(cfg)
    write_artifacts(artifacts, args.out)
    return 0


def cmd_example_b(args) -> int:
    cfg = example_b_config(alpha=args.alpha, gate_error=args.eps, steps=args.steps)
    artifacts = run_experiment(cfg)
    write_artifacts(artifacts, args.out)
    return 0


def cmd_example_c(args) -> int:
    if args.delta_grid:
        deltas = [float(x) for x in args.delta_grid.split(",")]
        rows = set_sweep(
            deltas,
            system_noise=args.system_noise,
            r=args.r,
            gate_error=args.eps,
            t_end=args.t_end,
        )
        lines = ["delta,charge_sim,charge_oracle,fermi"]
        for row in rows:
            lines.append(",".join(f"{x:.17g}" for x in row))
        _write(os.path.join(args.out, "charge_vs_delta.csv"), "\n".join(lines) + "\n")
        return 0
    cfg = example_c_config(
        delta=args.delta,
        system_noise=args.system_noise,
        r=args.r,
        gate_error=args.eps,
        steps=args.steps,
    )
    artifacts = run_experiment(cfg)
    write_artifacts(artifacts, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisebath",
        description="Open-system dynamics via noisy Trotter circuits: fit, simulate, analyze.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a target spectral function by broadened modes")
    p.add_argument("--config", help="JSON config with target/fit sections")
    p.add_argument("--target", choices=["ohmic", "set", "lorentzian-sum", "tabulated"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--temperature", type=float)
    p.add_argument("--cutoff", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--window", type=float, nargs=2)
    p.add_argument("--homogeneous", action="store_true", help="equal mode widths (default)")
    p.add_argument("--r", type=float, default=None, help="system background ratio")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run the full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="spectra, peaks and steady-state values from a trajectory CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--column", default=None)
    p.add_argument("--fft", action="store_true")
    p.add_argument("--window", default="none", choices=["none", "hann"])
    p.add_argument("--peaks", type=float, default=None, help="peak prominence threshold")
    p.add_argument("--steady", action="store_true")
    p.add_argument("--tail-fraction", type=float, default=0.2, dest="tail_fraction")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("effective-noise", help="effective-Lindbladian report for one Trotter step")
    p.add_argument("--decomp", default="ms", choices=["ms", "iswap", "cnot-b", "cnot-s", "cz"])
    p.add_argument("--n-bath", type=int, default=2, dest="n_bath")
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--dephasing-ratio", type=float, default=0.5, dest="dephasing_ratio")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_effective_noise)

    p = sub.add_parser("example-a", help="spin ultra-strongly coupled to one broad mode")
    p.add_argument("--N", type=int, default=8, help="bath qubits for the mode")
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--decomp", default="ms", choices=["ms", "iswap", "cnot-b", "cnot-s", "cz"])
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_example_a)

    p = sub.add_parser("example-b", help="spin coupled to an ohmic bath (eight modes)")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_example_b)

    p = sub.add_parser("example-c", help="electron-transport steady state and relaxation")
    p.add_argument("--delta", type=float, default=1.0, help="gate voltage")
    p.add_argument("--delta-grid", default=None, help="comma list of gate voltages to sweep")
    p.add_argument("--system-noise", action="store_true", dest="system_noise")
    p.add_argument("--r", type=float, default=0.5)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--t-end", default="auto", dest="t_end")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_example_c)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalInvariantError as exc:
        print(f"numerical invariant failure: {exc}", file=sys.stderr)
        return 3
    except ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
