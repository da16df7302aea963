import math
from fractions import Fraction

import numpy as np
import pytest

from noisebath.coarse_grain import BathMode, LorentzianBath
from noisebath.spin_model import (
    AVERAGE_ERROR_ONE_QUBIT,
    AVERAGE_ERROR_TWO_QUBIT,
    PAULI_ERROR_ONE_QUBIT,
    PAULI_ERROR_TWO_QUBIT,
    SystemSpec,
    bosons_to_spins,
    build_two_bath_model,
    circuit_depth,
    effective_broadening,
    gate_error,
    make_plan,
    match_trotter_step,
    reconstructed_spectrum,
)


class TestBosonsToSpins:
    def test_multiplicity_rescaling(self, broad_mode_bath, single_spin):
        model = bosons_to_spins(broad_mode_bath, [2], single_spin)
        assert model.n_bath == 2
        for aux in model.aux:
            assert abs(aux.couplings[0]) == pytest.approx(1.0 / math.sqrt(2))

    def test_one_to_one(self, single_spin):
        bath = LorentzianBath(
            modes=(
                BathMode(couplings=(0.8,), center=1.0, width=0.5),
                BathMode(couplings=(0.3,), center=2.0, width=0.5),
            )
        )
        model = bosons_to_spins(bath, [1, 1], single_spin)
        assert [abs(a.couplings[0]) for a in model.aux] == [0.8, 0.3]

    def test_spectral_reconstruction_pointwise(self, single_spin):
        bath = LorentzianBath(
            modes=(
                BathMode(couplings=(0.8,), center=1.0, width=0.5),
                BathMode(couplings=(0.3,), center=2.0, width=0.7),
            ),
            ratio=None,
        )
        model = bosons_to_spins(bath, [4, 2], single_spin, dephasing_ratio=0.25)
        rebuilt = reconstructed_spectrum(model)
        grid = np.linspace(-3, 6, 301)
        assert np.allclose(rebuilt(grid), bath.as_lorentzian_sum()(grid), rtol=1e-12)

    def test_total_weight_preserved(self, broad_mode_bath, single_spin):
        model = bosons_to_spins(broad_mode_bath, [8], single_spin)
        total = sum(abs(a.couplings[0]) ** 2 for a in model.aux)
        assert total == pytest.approx(1.0, rel=1e-12)

    def test_ratio_attaches_system_noise(self, single_spin):
        bath = LorentzianBath(
            modes=(BathMode(couplings=(1.0,), center=1.0, width=0.5),),
            ratio=0.5,
            system_rate=0.25,
        )
        model = bosons_to_spins(bath, [1], single_spin)
        assert model.system_noise.kind == "x"
        assert model.system_noise.rate == 0.25

    def test_validation(self, broad_mode_bath, single_spin):
        with pytest.raises(ValueError):
            bosons_to_spins(broad_mode_bath, [1, 1], single_spin)
        with pytest.raises(ValueError):
            bosons_to_spins(broad_mode_bath, [0], single_spin)


class TestRates:
    def test_effective_broadening(self):
        assert effective_broadening(0.3, 0.0) == 0.3
        assert effective_broadening(0.0, 0.2) == 0.4
        # T_phi = 2 T_1 doubles the width relative to damping alone
        assert effective_broadening(0.3, 0.15) == 2 * 0.3

    def test_gate_error(self):
        assert gate_error(0.1, 0.2, 0.0) == pytest.approx(0.02)
        assert gate_error(0.1, 0.2, 0.1) == pytest.approx(2 * 0.1 * 0.2)

    def test_error_metric_conversions(self):
        # damping only: Pauli error eps/2 (1q) and eps (2q); averages eps/3, 4eps/5
        assert PAULI_ERROR_ONE_QUBIT == 0.5
        assert AVERAGE_ERROR_ONE_QUBIT == pytest.approx(1 / 3)
        assert PAULI_ERROR_TWO_QUBIT == 1.0
        assert AVERAGE_ERROR_TWO_QUBIT == pytest.approx(4 / 5)


class TestCircuitDepth:
    @pytest.mark.parametrize("n_q", [4, 8])
    @pytest.mark.parametrize(
        "decomposition,kind,per_qubit",
        [
            ("ms", "xx", 1),
            ("iswap", "xx", 4),
            ("cnot-b", "xx", 3),
            ("cz", "xx", 5),
            ("ms", "two-bath", 2),
            ("iswap", "two-bath", 2),
            ("cnot-b", "two-bath", 4),
            ("cz", "two-bath", 6),
        ],
    )
    def test_table_values(self, decomposition, kind, per_qubit, n_q):
        assert circuit_depth(decomposition, n_q, kind) == 1 + per_qubit * n_q

    def test_swap_network_increment(self):
        base = circuit_depth("ms", 8, "xx")
        assert circuit_depth("ms", 8, "xx", "swap-network") == base + (8 // 2 - 1) * 3

    def test_errors(self):
        with pytest.raises(ValueError):
            circuit_depth("ms", 3, "two-bath")
        with pytest.raises(ValueError):
            circuit_depth("ms", 3, "xx", "swap-network")
        with pytest.raises(ValueError):
            circuit_depth("bogus", 4, "xx")


class TestTrotterMatching:
    @pytest.mark.parametrize(
        "depth,eps,expected",
        [
            (9, "0.01", "0.18"),
            (3, "0.03", "0.18"),
            (2, "0.05", "0.2"),
        ],
    )
    def test_example_values_exact(self, depth, eps, expected):
        # v tau = v * D eps / kappa with kappa = v/2, evaluated rationally
        tau = match_trotter_step(depth, Fraction(eps), Fraction(1, 2))
        assert tau == Fraction(expected)

    def test_float_path(self):
        assert match_trotter_step(9, 0.01, 0.5) == pytest.approx(0.18)


class TestPlan:
    def test_width_to_noise_consistency(self, broad_mode_bath, single_spin):
        model = bosons_to_spins(broad_mode_bath, [8], single_spin, dephasing_ratio=0.5)
        plan = make_plan(model, "ms", 0.01)
        for aux in model.aux:
            pg, pG = plan.strengths[aux.qubit]
            gamma = plan.depth * pg / plan.tau
            big = plan.depth * pG / plan.tau
            g0, G0 = model.rates[aux.qubit]
            assert gamma == pytest.approx(g0, rel=1e-12)
            assert big == pytest.approx(G0, rel=1e-12)
            assert pg + 2 * pG == pytest.approx(plan.epsilon, rel=1e-12)

    def test_tau_matching(self, broad_mode_bath, single_spin):
        model = bosons_to_spins(broad_mode_bath, [8], single_spin, dephasing_ratio=0.5)
        plan = make_plan(model, "ms", 0.01)
        assert plan.depth == 9
        assert plan.tau == pytest.approx(9 * 0.01 / 0.5)

    def test_exact_tau(self, broad_mode_bath, single_spin):
        model = bosons_to_spins(broad_mode_bath, [8], single_spin)
        plan = make_plan(
            model, "ms", 0.01, epsilon_exact=Fraction("0.01"), kappa_exact=Fraction(1, 2)
        )
        assert plan.tau_exact == Fraction(9, 50)

    def test_symmetrized_plan_counts_x_layers(self, single_spin):
        bath = LorentzianBath(
            modes=(
                BathMode(couplings=(0.5,), center=1.0, width=0.4),
                BathMode(couplings=(0.5,), center=2.0, width=0.4),
            ),
            ratio=0.5,
            system_rate=0.2,
        )
        model = build_two_bath_model(bath, bath, single_spin)
        plan = make_plan(model, "ms", 0.01, symmetrize=True)
        assert plan.depth == 1 + 2 * 4
        assert plan.noise_layers_per_step == plan.depth + 1
        assert plan.tau == pytest.approx((plan.depth + 1) * 0.01 / 0.4)
        # per-layer gate error is still epsilon on the reference bath qubit
        pg, pG = plan.strengths[1]
        assert pg + 2 * pG == pytest.approx(0.01, rel=1e-12)
        # symmetrized system damping: gamma_s = 2 r kappa, so p_gamma matches
        # the bath value exactly when system and bath qubits are identical
        assert plan.strengths[0][0] == pytest.approx(pg, rel=1e-12)

    def test_plan_rejects_x_kind_system_noise(self, single_spin):
        bath = LorentzianBath(
            modes=(BathMode(couplings=(1.0,), center=1.0, width=0.5),),
            ratio=0.5,
            system_rate=0.25,
        )
        model = bosons_to_spins(bath, [1], single_spin)
        with pytest.raises(ValueError):
            make_plan(model, "ms", 0.01)


class TestTwoBath:
    def two_mode_bath(self, ratio=None):
        system_rate = 0.0 if ratio is None else ratio * 0.4
        return LorentzianBath(
            modes=(
                BathMode(couplings=(0.3,), center=1.0, width=0.4),
                BathMode(couplings=(0.25,), center=2.0, width=0.4),
            ),
            ratio=ratio,
            system_rate=system_rate,
        )

    def test_four_bath_qubits(self, single_spin):
        bath = self.two_mode_bath()
        model = build_two_bath_model(bath, bath, single_spin)
        assert model.n_bath == 4
        assert [a.kind for a in model.aux] == ["x", "x", "y", "y"]
        assert model.coupling_kind == "two-bath"

    def test_group_spectra_match(self, single_spin):
        bath = self.two_mode_bath()
        model = build_two_bath_model(bath, bath, single_spin)
        grid = np.linspace(-1, 3.5, 101)
        sx = reconstructed_spectrum(model, "a")(grid)
        sy = reconstructed_spectrum(model, "b")(grid)
        assert np.allclose(sx, sy, rtol=1e-12)
        # the two groups together carry the fitted spectral function
        total = reconstructed_spectrum(model)(grid)
        fitted = bath.as_lorentzian_sum()(grid)
        assert np.allclose(total, fitted, rtol=1e-12)

    def test_couplings_scaled_by_sqrt2(self, single_spin):
        bath = self.two_mode_bath()
        model = build_two_bath_model(bath, bath, single_spin)
        assert abs(model.aux[0].couplings[0]) == pytest.approx(0.3 / math.sqrt(2))

    def test_empty_second_bath_degenerates(self, single_spin):
        bath = self.two_mode_bath()
        empty = LorentzianBath(modes=())
        model = build_two_bath_model(bath, empty, single_spin)
        assert model.coupling_kind == "xx"
        assert model.n_bath == 2

    def test_rotating_form(self, single_spin):
        bath = self.two_mode_bath()
        model = build_two_bath_model(bath, bath, single_spin, rotating=True)
        assert [a.kind for a in model.aux] == ["hop", "hop", "counter", "counter"]
        assert abs(model.aux[0].couplings[0]) == pytest.approx(0.3)
        grid = np.linspace(-1, 3.5, 101)
        total = reconstructed_spectrum(model)(grid)
        assert np.allclose(total, bath.as_lorentzian_sum()(grid), rtol=1e-12)

    def test_symmetrized_system_noise_rate(self, single_spin):
        bath = self.two_mode_bath(ratio=0.5)
        model = build_two_bath_model(bath, bath, single_spin)
        # gamma_s = 2 kappa_system = 2 r kappa; each sigma_x/sigma_y channel
        # then carries kappa_system / 2
        assert model.system_noise.kind == "symmetrized_damping"
        assert model.system_noise.rate == pytest.approx(2 * 0.5 * 0.4)

    def test_mismatched_baths_rejected(self, single_spin):
        bath = self.two_mode_bath()
        other = LorentzianBath(
            modes=(
                BathMode(couplings=(0.3,), center=1.1, width=0.4),
                BathMode(couplings=(0.25,), center=2.0, width=0.4),
            )
        )
        with pytest.raises(ValueError):
            build_two_bath_model(bath, other, single_spin)


def test_model_json_roundtrip(broad_mode_bath, single_spin):
    import json

    model = bosons_to_spins(broad_mode_bath, [2], single_spin, dephasing_ratio=0.5)
    payload = json.loads(model.to_json())
    assert payload["system"]["splittings"] == [0.9]
    assert len(payload["aux"]) == 2
    assert payload["rates"]["1"][0] == pytest.approx(0.25)


def test_hermitian_hopping_spec():
    spec = SystemSpec(splittings=(1.0, 0.8), hopping={(0, 1): 0.1 + 0.05j})
    assert spec.n_spins == 2
    with pytest.raises(ValueError):
        SystemSpec(splittings=(1.0,), hopping={(0, 1): 0.1})
