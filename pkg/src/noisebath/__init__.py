"""Noise-as-resource simulation of open-system spin-boson dynamics.

Pipeline: fit a target bath spectral function by broadened modes, map the
modes onto noisy auxiliary qubits, synthesize matched Trotter circuits,
execute them under per-layer damping/dephasing, and validate against exact
Lindblad reference solvers.
"""

__version__ = "0.1.0"
