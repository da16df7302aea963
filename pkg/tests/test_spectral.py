import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisebath.spectral import (
    LorentzianSum,
    MultiChannelTarget,
    OhmicExpCutoff,
    SetStructured,
    Tabulated,
    Temperature,
    thermal_enhancement,
)

SET = SetStructured(
    alpha=0.25, resonance=1.0, resonance_width=0.4,
    temperature=Temperature(0.3), cutoff=math.sqrt(3.0),
)


class TestOhmic:
    def test_zero_frequency_limit(self):
        # series limit w/(1 - e^{-w/T}) -> T, cross-checked by bisection toward 0
        f = OhmicExpCutoff(0.02, Temperature(1.5), 10.0)
        expected = 4.0 * math.pi * 0.02 * 1.5
        assert f(np.array([0.0]))[0] == pytest.approx(expected, rel=1e-12)
        eps = 1e-2
        for _ in range(20):
            mid = 0.5 * (f(np.array([eps]))[0] + f(np.array([-eps]))[0])
            assert mid == pytest.approx(expected, rel=1e-2)
            eps /= 2.0
        assert f(np.array([eps]))[0] == pytest.approx(expected, rel=1e-6)

    def test_paper_parameter_set_evaluates(self):
        f = OhmicExpCutoff(0.1, Temperature(1.5), 10.0)
        grid = np.linspace(-4, 12, 101)
        values = f(grid)
        assert np.all(np.isfinite(values)) and np.all(values >= 0)

    @given(
        omega=st.floats(0.01, 30.0),
        alpha=st.floats(0.001, 2.0),
        temp=st.floats(0.05, 5.0),
        cutoff=st.floats(0.5, 50.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_detailed_balance(self, omega, alpha, temp, cutoff):
        f = OhmicExpCutoff(alpha, Temperature(temp), cutoff)
        lhs = f(np.array([-omega]))[0]
        rhs = math.exp(-omega / temp) * f(np.array([omega]))[0]
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)

    def test_zero_temperature(self):
        f = OhmicExpCutoff(0.1, Temperature(0.0), 5.0)
        assert f(np.array([-1.0]))[0] == 0.0
        assert f(np.array([2.0]))[0] == pytest.approx(4 * math.pi * 0.1 * 2 * math.exp(-0.4))
        assert f(np.array([0.0]))[0] == 0.0

    def test_rejects_non_finite(self):
        f = OhmicExpCutoff(0.1, Temperature(1.0), 5.0)
        with pytest.raises(ValueError):
            f(np.array([np.nan]))
        with pytest.raises(ValueError):
            f(np.array([np.inf]))


class TestLorentzianSum:
    def test_peak_height(self):
        bath = LorentzianSum(modes=((2.0, 1.3, 0.4),))
        # at the center: v^2 kappa / (kappa/2)^2 = 4 v^2 / kappa
        assert bath(np.array([1.3]))[0] == pytest.approx(4 * 2.0 / 0.4, rel=1e-14)

    def test_single_mode_area(self):
        # mode-integrated weight is 2 pi v^2; the +-200 kappa truncation
        # leaves an analytic tail of 2 pi v^2 / (200 pi) ~ 1.6e-3, so the
        # finite-window quadrature is compared against its exact value and
        # the full integral against 2 pi v^2
        v2, center, kappa = 0.7, 2.0, 0.05
        bath = LorentzianSum(modes=((v2, center, kappa),))
        grid = np.linspace(center - 200 * kappa, center + 200 * kappa, 400001)
        area = np.trapezoid(bath(grid), grid)
        truncated_exact = 4 * v2 * math.atan(400.0)
        assert area == pytest.approx(truncated_exact, rel=1e-6)
        assert area == pytest.approx(2 * math.pi * v2, rel=2e-3)
        from scipy.integrate import quad

        full, _ = quad(lambda w: bath(np.array([w]))[0], -np.inf, np.inf, limit=400)
        assert full == pytest.approx(2 * math.pi * v2, rel=1e-6)

    def test_background_only(self):
        bath = LorentzianSum(modes=(), background=4 * 0.3)
        grid = np.linspace(-5, 5, 11)
        assert np.all(bath(grid) == 4 * 0.3)

    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            LorentzianSum(modes=((1.0, 0.0, -0.1),))
        with pytest.raises(ValueError):
            LorentzianSum(modes=((-1.0, 0.0, 0.1),))


class TestSetStructured:
    def test_paper_parameters_evaluate(self):
        grid = np.linspace(-1.0, 3.5, 301)
        values = SET(grid)
        assert np.all(np.isfinite(values)) and np.all(values >= 0)

    def test_zero_frequency_thermal_limit(self):
        # bisection toward 0 converges to the evaluated limit
        v0 = SET(np.array([0.0]))[0]
        assert v0 > 0
        eps = 1e-2
        for _ in range(25):
            eps /= 2
        assert SET(np.array([eps]))[0] == pytest.approx(v0, rel=1e-5)

    def test_high_frequency_tail(self):
        # Far above the cutoff the thermal factor is ~alpha*w, each Lorentzian
        # tail ~1/w^2 and the cutoff ~w^-4, so S ~ w^-5.  (The quartic cutoff
        # times the thermal factor alone would give w^-3; the Lorentzian tails
        # steepen it.)  Frozen from direct evaluation at 10 and 20 cutoffs.
        wc = SET.cutoff
        ratio = SET(np.array([20 * wc]))[0] / SET(np.array([10 * wc]))[0]
        assert ratio == pytest.approx(2.0**-5, rel=0.2)

    def test_detailed_balance_violated_by_structure(self):
        # the resonances sit at positive frequencies only, so the full target
        # is thermal only in its prefactor, not as a KMS bath
        w = 0.5
        lhs = SET(np.array([-w]))[0]
        rhs = math.exp(-w / 0.3) * SET(np.array([w]))[0]
        assert lhs < 0.5 * rhs


class TestTabulated:
    def test_interpolation_and_bounds(self):
        tab = Tabulated(grid=np.array([0.0, 1.0, 2.0]), values=np.array([0.0, 2.0, 0.0]))
        assert tab(np.array([0.5]))[0] == pytest.approx(1.0)
        with pytest.raises(ValueError):
            tab(np.array([2.5]))
        with pytest.raises(ValueError):
            tab(np.array([-0.1]))

    def test_csv_roundtrip(self, tmp_path):
        path = tmp_path / "spec.csv"
        path.write_text("0.0,1.0\n1.0,3.0\n2.0,0.5\n")
        tab = Tabulated.from_csv(path)
        assert tab(np.array([1.0]))[0] == pytest.approx(3.0)

    def test_invariants(self):
        with pytest.raises(ValueError):
            Tabulated(grid=np.array([0.0, 0.0, 1.0]), values=np.zeros(3))
        with pytest.raises(ValueError):
            Tabulated(grid=np.array([0.0, 1.0]), values=np.array([1.0, -1.0]))


class TestMultiChannel:
    def test_diagonal_matches_scalar(self):
        f = OhmicExpCutoff(0.1, Temperature(1.5), 10.0)
        target = MultiChannelTarget.from_scalar(f)
        grid = np.linspace(-2, 5, 41)
        assert np.allclose(target(grid, 0, 0), f(grid))

    def test_hermitian_symmetry(self):
        def cross(omega):
            return (1.0 + 0.5j) * np.exp(-np.asarray(omega) ** 2)

        target = MultiChannelTarget(dimension=2, entries={(0, 1): cross})
        grid = np.linspace(-1, 1, 7)
        assert np.allclose(target(grid, 1, 0), np.conj(cross(grid)))

    def test_index_errors(self):
        target = MultiChannelTarget(dimension=1, entries={})
        with pytest.raises(IndexError):
            target(np.array([0.0]), 0, 1)
        with pytest.raises(ValueError):
            MultiChannelTarget(dimension=1, entries={(0, 1): lambda w: w})


def test_thermal_enhancement_continuity():
    t = Temperature(0.7)
    for eps in (1e-6, 1e-8, 1e-10):
        lo = thermal_enhancement(np.array([-eps]), t)[0]
        hi = thermal_enhancement(np.array([eps]), t)[0]
        assert hi - lo == pytest.approx(eps, rel=1e-3)  # slope 1/2 each side
        assert 0.5 * (hi + lo) == pytest.approx(0.7, rel=1e-9)


def test_temperature_invariants():
    with pytest.raises(ValueError):
        Temperature(-0.1)
    assert Temperature(0.0).is_zero
