import math

import numpy as np
import pytest

from conftest import plus_x_state, random_density
from noisebath import pauli
from noisebath.coarse_grain import BathMode, LorentzianBath
from noisebath.errors import NumericalInvariantError
from noisebath.lindblad import (
    LindbladSpec,
    _rhs_function,
    build_boson_lindblad,
    build_spin_lindblad,
    check_density,
    classical_limit_spec,
    integrate,
    steady_state,
)
from noisebath.spin_model import SystemSpec, bosons_to_spins, build_two_bath_model


def damped_qubit_spec(gamma=0.4, big_gamma=0.0, delta=0.0):
    bath = LorentzianBath(modes=(BathMode(couplings=(0.0,), center=1.0, width=gamma + 2 * big_gamma),))
    ratio = big_gamma / gamma if gamma > 0 else 0.0
    model = bosons_to_spins(
        bath, [1], SystemSpec(splittings=(delta,)), dephasing_ratio=ratio
    )
    return build_spin_lindblad(model), model


class TestSpinLindblad:
    def test_damped_qubit_analytic(self):
        gamma = 0.4
        spec, model = damped_qubit_spec(gamma=gamma)
        d = 4
        rho0 = np.kron(np.diag([0.0, 1.0]), np.eye(2) / 2).astype(complex)  # bath qubit excited
        number = pauli.embed([pauli.NUM], [1], 2)
        traj = integrate(spec, rho0, t_end=5.0, dt=0.01, observables={"n": number}, record_every=10)
        expected = np.exp(-gamma * traj.times)
        assert np.max(np.abs(traj.column("n") - expected)) < 1e-8

    def test_dephasing_qubit_analytic(self):
        big = 0.3
        bath = LorentzianBath(modes=(BathMode(couplings=(0.0,), center=0.0, width=1e9),))
        # direct spec: collapse sigma_z at rate Gamma/2 on a single qubit
        h = np.zeros((2, 2), dtype=complex)
        spec = LindbladSpec(hamiltonian=h, collapse=((pauli.SZ.copy(), big / 2),), dims=(2,))
        rho0 = plus_x_state(1)
        traj = integrate(spec, rho0, t_end=4.0, dt=0.01, observables={"sx": pauli.SX}, record_every=10)
        expected = np.exp(-big * traj.times)
        assert np.max(np.abs(traj.column("sx") - expected)) < 1e-8

    def test_combined_coherence_width(self):
        # coherence decays at gamma/2 + Gamma, i.e. spectral width gamma + 2 Gamma
        gamma, big = 0.3, 0.2
        spec, model = damped_qubit_spec(gamma=gamma, big_gamma=big)
        psi = np.array([1.0, 0.0, 1.0, 0.0]) / math.sqrt(2)  # bath qubit in +x
        # build +x on qubit 1 (the bath qubit) with system in ground
        psi = np.zeros(4, dtype=complex)
        psi[0] = psi[2] = 2**-0.5
        rho0 = np.outer(psi, psi.conj())
        obs = {
            "sx": pauli.embed([pauli.SX], [1], 2),
            "sy": pauli.embed([pauli.SY], [1], 2),
        }
        traj = integrate(spec, rho0, t_end=3.0, dt=0.005, observables=obs, record_every=20)
        # the qubit precesses at its mode energy; the coherence magnitude
        # decays at gamma/2 + Gamma regardless
        coherence = np.hypot(traj.column("sx"), traj.column("sy"))
        expected = np.exp(-(gamma / 2 + big) * traj.times)
        assert np.max(np.abs(coherence - expected)) < 1e-8
        assert gamma + 2 * big == pytest.approx(model.width(1))

    def test_two_bath_oracle_has_symmetrized_terms(self):
        bath = LorentzianBath(
            modes=(BathMode(couplings=(0.3,), center=1.0, width=0.4),),
            ratio=0.5,
            system_rate=0.2,
        )
        model = build_two_bath_model(bath, bath, SystemSpec(splittings=(1.0,)))
        spec = build_spin_lindblad(model)
        # collapse list ends with sigma_x and sigma_y system terms at gamma_s/4
        rates = [r for _, r in spec.collapse]
        assert rates[-1] == pytest.approx(0.4 / 4)
        assert rates[-2] == pytest.approx(0.4 / 4)

    def test_qubit_limit(self):
        bath = LorentzianBath(
            modes=tuple(BathMode(couplings=(0.1,), center=1.0, width=0.5) for _ in range(13))
        )
        model = bosons_to_spins(bath, [1] * 13, SystemSpec(splittings=(1.0,)))
        with pytest.raises(ValueError):
            build_spin_lindblad(model)


class TestIntegrate:
    def test_no_generator_keeps_state(self, rng):
        d = 4
        spec = LindbladSpec(
            hamiltonian=np.zeros((d, d), dtype=complex), collapse=(), dims=(2, 2)
        )
        rho0 = random_density(rng, d)
        traj = integrate(spec, rho0, t_end=1.0, dt=0.05, observables={"p": np.eye(d, dtype=complex)})
        assert np.allclose(traj.column("p"), 1.0, atol=1e-12)

    def test_rk4_order(self):
        gamma = 1.0
        spec, _ = damped_qubit_spec(gamma=gamma, delta=0.7)
        rho0 = np.kron(np.diag([0.0, 1.0]), np.diag([1.0, 0.0])).astype(complex)
        number = pauli.embed([pauli.NUM], [1], 2)
        errs = []
        for dt in (0.08, 0.04):
            traj = integrate(spec, rho0, t_end=2.4, dt=dt, observables={"n": number})
            errs.append(np.max(np.abs(traj.column("n") - np.exp(-gamma * traj.times))))
        order = math.log2(errs[0] / errs[1])
        assert order >= 3.5

    def test_stability_guard(self):
        spec, _ = damped_qubit_spec(gamma=0.4, delta=5.0)
        rho0 = np.kron(np.diag([1.0, 0.0]), np.diag([1.0, 0.0])).astype(complex)
        with pytest.raises(ValueError):
            integrate(spec, rho0, t_end=1.0, dt=0.05, observables={})

    def test_structured_and_dense_paths_agree(self, rng):
        bath = LorentzianBath(
            modes=(
                BathMode(couplings=(0.6,), center=1.0, width=0.5),
                BathMode(couplings=(0.4,), center=2.0, width=0.3),
            )
        )
        model = bosons_to_spins(bath, [1, 2], SystemSpec(splittings=(0.9,)), dephasing_ratio=0.5)
        spec = build_spin_lindblad(model)
        rho = random_density(rng, spec.dimension)
        fast = _rhs_function(spec)(rho)
        dense = LindbladSpec(spec.hamiltonian, spec.collapse, spec.dims, None)
        slow = _rhs_function(dense)(rho)
        assert np.max(np.abs(fast - slow)) < 1e-13

    def test_two_bath_structured_path(self, rng):
        bath = LorentzianBath(
            modes=(BathMode(couplings=(0.3,), center=1.0, width=0.4),),
            ratio=0.5,
            system_rate=0.2,
        )
        for rotating in (False, True):
            model = build_two_bath_model(
                bath, bath, SystemSpec(splittings=(1.0,)), rotating=rotating
            )
            spec = build_spin_lindblad(model)
            rho = random_density(rng, spec.dimension)
            fast = _rhs_function(spec)(rho)
            dense = _rhs_function(LindbladSpec(spec.hamiltonian, spec.collapse, spec.dims, None))(rho)
            assert np.max(np.abs(fast - dense)) < 1e-13

    def test_invariants_tracked(self):
        spec, _ = damped_qubit_spec(gamma=0.4)
        bad = np.diag([0.5, 0.0, 0.6, 0.0]).astype(complex)  # trace 1.1
        with pytest.raises(NumericalInvariantError):
            integrate(spec, bad, t_end=0.5, dt=0.01, observables={})


class TestBosonOracle:
    def test_decoupled_system_precesses_freely(self):
        bath = LorentzianBath(modes=(BathMode(couplings=(0.0,), center=1.0, width=0.5),))
        system = SystemSpec(splittings=(0.9,))
        spec = build_boson_lindblad(bath, system, n_max=3)
        d = spec.dimension
        psi = np.zeros(d, dtype=complex)
        psi[0] = psi[1] = 2**-0.5  # site 0 = system qubit (least significant)
        rho0 = np.outer(psi, psi.conj())
        sx = np.kron(np.eye(d // 2), pauli.SX)
        traj = integrate(spec, rho0, t_end=6.0, dt=0.01, observables={"sx": sx}, record_every=10)
        assert np.max(np.abs(traj.column("sx") - np.cos(0.9 * traj.times))) < 1e-7

    def test_vacuum_occupation_is_zero(self, broad_mode_bath, single_spin):
        spec = build_boson_lindblad(broad_mode_bath, single_spin, n_max=4)
        d = spec.dimension
        rho0 = np.zeros((d, d), dtype=complex)
        rho0[0, 0] = 1.0
        a = np.zeros((5, 5), dtype=complex)
        for k in range(1, 5):
            a[k - 1, k] = math.sqrt(k)
        number = np.kron(a.conj().T @ a, np.eye(2))
        assert np.real(np.trace(number @ rho0)) == 0.0

    def test_fock_cutoff_convergence(self, broad_mode_bath, single_spin):
        # ultra-strong coupling: raising the cutoff from 5 to 7 barely moves <sx>
        results = {}
        for n_max in (5, 7):
            spec = build_boson_lindblad(broad_mode_bath, single_spin, n_max=n_max)
            d = spec.dimension
            psi = np.zeros(d, dtype=complex)
            psi[0] = psi[1] = 2**-0.5
            rho0 = np.outer(psi, psi.conj())
            sx = np.kron(np.eye(d // 2), pauli.SX)
            traj = integrate(
                spec, rho0, t_end=12.0, dt=0.005, observables={"sx": sx}, record_every=40
            )
            results[n_max] = traj.column("sx")
        assert np.max(np.abs(results[5] - results[7])) < 1e-3

    def test_dimension_limit(self, single_spin):
        bath = LorentzianBath(
            modes=tuple(BathMode(couplings=(0.1,), center=1.0, width=0.5) for _ in range(4))
        )
        with pytest.raises(ValueError):
            build_boson_lindblad(bath, single_spin, n_max=11)


class TestSpinVsBoson:
    def test_weak_coupling_agreement(self, single_spin):
        # v/kappa = 0.2: one auxiliary spin reproduces the damped mode
        bath = LorentzianBath(modes=(BathMode(couplings=(0.1,), center=1.0, width=0.5),))
        model = bosons_to_spins(bath, [1], single_spin)
        spin_spec = build_spin_lindblad(model)
        boson_spec = build_boson_lindblad(bath, single_spin, n_max=3)
        t_end, dt = 20.0, 0.01
        rho_s = plus_x_state(2)
        sx_s = pauli.embed([pauli.SX], [0], 2)
        traj_s = integrate(spin_spec, rho_s, t_end, dt, {"sx": sx_s}, record_every=20)
        d = boson_spec.dimension
        psi = np.zeros(d, dtype=complex)
        psi[0] = psi[1] = 2**-0.5
        rho_b = np.outer(psi, psi.conj())
        sx_b = np.kron(np.eye(d // 2), pauli.SX)
        traj_b = integrate(boson_spec, rho_b, t_end, dt, {"sx": sx_b}, record_every=20)
        assert np.max(np.abs(traj_s.column("sx") - traj_b.column("sx"))) < 0.02


class TestSteadyState:
    def test_damped_qubit_reaches_ground(self):
        spec, _ = damped_qubit_spec(gamma=0.5)
        # start with the damped (bath) qubit excited; the decoupled system
        # qubit carries no dissipation, so pick its state explicitly too
        rho0 = np.kron(np.diag([0.0, 1.0]), np.diag([1.0, 0.0])).astype(complex)
        rho = steady_state(spec, tolerance=1e-9, rho0=rho0)
        expected = np.zeros((4, 4))
        expected[0, 0] = 1.0
        assert np.max(np.abs(rho - expected)) < 1e-6

    def test_residual_postcondition(self):
        spec, _ = damped_qubit_spec(gamma=0.5, delta=0.8)
        rho = steady_state(spec, tolerance=1e-9)
        residual = np.sum(np.abs(np.linalg.svd(spec.apply(rho), compute_uv=False)))
        assert residual < 1e-9

    def test_requires_dissipation(self):
        spec = LindbladSpec(hamiltonian=pauli.SZ.copy(), collapse=(), dims=(2,))
        with pytest.raises(ValueError):
            steady_state(spec)

    @pytest.mark.parametrize("delta", [-1.0, 0.0, 0.5, 2.0])
    def test_classical_limit_is_fermi(self, delta):
        t = 0.3
        spec = classical_limit_spec(t, delta)
        rho = steady_state(spec, tolerance=1e-10)
        fermi = 1.0 / (1.0 + math.exp(delta / t))
        assert np.real(np.trace(pauli.NUM @ rho)) == pytest.approx(fermi, abs=1e-8)


def test_check_density_tolerances(rng):
    rho = random_density(rng, 4)
    check_density(rho)
    with pytest.raises(NumericalInvariantError):
        check_density(rho * 1.001)
    bad = rho.copy()
    bad[0, 1] += 1e-6
    with pytest.raises(NumericalInvariantError):
        check_density(bad)
