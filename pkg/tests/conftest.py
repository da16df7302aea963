import numpy as np
import pytest

from noisebath.coarse_grain import BathMode, LorentzianBath
from noisebath.spin_model import SystemSpec


@pytest.fixture(scope="session")
def broad_mode_bath():
    """Single broad mode, ultra-strong coupling regime: v = w0 = 2 kappa."""
    return LorentzianBath(modes=(BathMode(couplings=(1.0,), center=1.0, width=0.5),))


@pytest.fixture(scope="session")
def single_spin():
    return SystemSpec(splittings=(0.9,))


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def plus_x_state(n_qubits: int) -> np.ndarray:
    """System qubit 0 along +x, all other qubits in the ground state."""
    d = 2**n_qubits
    psi = np.zeros(d, dtype=complex)
    psi[0] = psi[1] = 2**-0.5
    return np.outer(psi, psi.conj())


def random_density(rng, d):
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = x @ x.conj().T
    return rho / np.trace(rho).real
