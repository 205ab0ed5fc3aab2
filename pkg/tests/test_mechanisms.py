import math

import numpy as np
import pytest
from scipy import integrate

from cbdi.errors import InvalidLevyMeasure, NegativeParameter
from cbdi.mechanisms.conditions import Verdict, integral_condition
from cbdi.mechanisms.jumps import (
    FiniteAtoms,
    NullMeasure,
    StableTail,
    Superposition,
    TabulatedTail,
    Truncated,
    measure_from_description,
)
from cbdi.mechanisms.mechanism import (
    MechanismClass,
    as_decomposition,
    canonical_decomposition,
    classify_mechanism,
    derivative_at_zero,
    largest_zero,
    make_mechanism,
    power_mechanism,
    pure_phi,
    pure_sigma,
    shift,
    truncate,
    truncated_decomposition,
)

from conftest import value


class TestConstruction:
    def test_pure_diffusion(self):
        m = make_mechanism(NullMeasure(), a=1.0)
        assert value(m, 2.0) == pytest.approx(4.0, rel=1e-12)

    def test_stable_tail_matches_quadrature_of_the_integrand(self):
        intensity, index = 1.3, 1.5
        m = make_mechanism(StableTail(intensity, index))
        for x in (0.5, 2.0, 7.0):
            body = lambda u: (math.expm1(-u * x) + u * x) * intensity * u ** (-1.0 - index)
            compensated = integrate.quad(body, 0, 1, epsabs=0, epsrel=1e-11, limit=200)[0]
            compensated += integrate.quad(body, 1, np.inf, epsabs=0, epsrel=1e-12)[0]
            # the quadruplet compensates only u <= 1, so the uncompensated part shifts the drift
            linear = intensity / (index - 1.0) * x
            assert value(m, x) == pytest.approx(compensated - linear, rel=1e-8)

    def test_stable_power_law_constant(self):
        intensity, index = 2.0, 1.5
        m = make_mechanism(StableTail(intensity, index), gamma=-intensity / (index - 1.0))
        expected = intensity * math.gamma(2.0 - index) / (index * (index - 1.0))
        assert value(m, 3.0) == pytest.approx(expected * 3.0**1.5, rel=1e-10)

    def test_killing_gives_negative_value_at_zero(self):
        m = make_mechanism(NullMeasure(), gamma=-1.0, lam=2.0)
        assert value(m, 0.0) == pytest.approx(-2.0)
        assert value(m, 3.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("kwargs", [{"a": -1.0}, {"lam": -0.5}])
    def test_negative_coefficients_rejected(self, kwargs):
        with pytest.raises(NegativeParameter):
            make_mechanism(NullMeasure(), **kwargs)

    def test_dense_small_jumps_rejected(self):
        with pytest.raises(InvalidLevyMeasure):
            StableTail(1.0, 2.5)

    def test_description_round_trip(self):
        jumps = Superposition((StableTail(1.0, 1.5), FiniteAtoms((1.0, 3.0), (0.5, 0.25))))
        for family in (jumps, Truncated(jumps, 5.0, 0.1), NullMeasure()):
            assert measure_from_description(family.describe()) == family


class TestEvaluation:
    def test_root(self):
        assert value(power_mechanism([(1, 2), (-1, 1)]), 1.0) == pytest.approx(0.0, abs=1e-14)

    def test_bernstein(self):
        assert value(power_mechanism([(-1, 0.5)]), 4.0) == pytest.approx(-2.0, rel=1e-10)

    def test_stable_power(self):
        assert value(power_mechanism([(1, 1.5)]), 4.0) == pytest.approx(8.0, rel=1e-10)


class TestDerivativeAtZero:
    def test_critical(self):
        assert derivative_at_zero(power_mechanism([(1, 2)])) == 0.0

    def test_supercritical(self):
        assert derivative_at_zero(power_mechanism([(1, 2), (-1, 1)])) == pytest.approx(-1.0)

    def test_heavy_tail_is_minus_infinity(self):
        assert derivative_at_zero(make_mechanism(StableTail(1.0, 0.5))) == -math.inf


class TestDecomposition:
    def test_supercritical_split(self):
        d = canonical_decomposition(make_mechanism(a=1.0, gamma=1.0))
        assert value(d.sigma, 3.0) == pytest.approx(9.0)
        assert value(d.phi, 3.0) == pytest.approx(3.0)

    def test_subcritical_has_no_phi(self):
        d = canonical_decomposition(make_mechanism(a=1.0, gamma=-1.0))
        assert value(d.sigma, 3.0) == pytest.approx(12.0)
        assert d.phi.is_zero

    def test_pure_bernstein(self):
        d = as_decomposition(power_mechanism([(-1, 0.5)]))
        assert d.sigma.is_zero
        assert value(d.phi, 9.0) == pytest.approx(3.0, rel=1e-10)

    @pytest.mark.parametrize("kind", ["canonical", "analytic"])
    def test_soundness(self, kind):
        m = make_mechanism(Superposition((StableTail(0.7, 1.2), FiniteAtoms((0.5, 4.0), (1.0, 2.0)))), 0.3, 0.4, 0.2)
        d = as_decomposition(m, kind)
        for x in np.geomspace(1e-3, 1e3, 13):
            assert value(d.sigma, x) - value(d.phi, x) == pytest.approx(value(m, x), rel=1e-10, abs=1e-12)


class TestLargestZero:
    def test_changing_sign(self):
        c = classify_mechanism(power_mechanism([(1, 2), (-1, 1)]))
        assert c.kind is MechanismClass.SUPERCRITICAL_CHANGING_SIGN
        assert c.largest_zero == pytest.approx(1.0, rel=1e-10)

    def test_critical(self):
        c = classify_mechanism(power_mechanism([(1, 2)]))
        assert (c.kind, c.largest_zero) == (MechanismClass.CRITICAL, 0.0)

    def test_subcritical(self):
        assert classify_mechanism(power_mechanism([(1, 2), (1, 1)])).kind is MechanismClass.SUBCRITICAL

    def test_immortal(self):
        c = classify_mechanism(power_mechanism([(-1, 0.5)]))
        assert (c.kind, c.largest_zero) == (MechanismClass.IMMORTAL, math.inf)

    def test_killing_root(self):
        assert largest_zero(make_mechanism(a=1.0, lam=4.0)) == pytest.approx(2.0, rel=1e-10)


class TestTruncation:
    def test_no_mass_above_level_is_identity(self):
        m = make_mechanism(FiniteAtoms((0.5, 2.0), (1.0, 1.0)), a=0.5)
        t = truncate(m, 3.0)
        for x in (0.1, 1.0, 10.0):
            assert value(t, x) == pytest.approx(value(m, x), rel=1e-12)

    def test_unit_atom_folds_to_level_one(self):
        m = make_mechanism(FiniteAtoms((2.0,), (1.0,)))
        d = truncated_decomposition(m, 1.0)
        for y in (0.3, 1.0, 5.0):
            assert value(d.phi, y) == pytest.approx(-math.expm1(-y), rel=1e-12)

    def test_sandwich(self):
        m = make_mechanism(StableTail(1.0, 0.6), lam=0.3)
        full = canonical_decomposition(m).phi
        for x in np.geomspace(1e-2, 1e2, 9):
            previous = -math.inf
            for n in (1.0, 2.0, 4.0, 8.0):
                phi_n = value(truncated_decomposition(m, n).phi, x)
                assert previous <= phi_n + 1e-12
                gap = value(full, x) - phi_n
                assert -1e-12 <= gap <= float(m.measure.tail(n)) + 0.3 * math.exp(-x * n) + 1e-12
                previous = phi_n


class TestShift:
    def test_identity_and_involution(self):
        m = make_mechanism(StableTail(1.0, 1.5), a=0.5, gamma=0.2)
        assert shift(m, 0.0) == m
        back = shift(shift(m, 1.7), -1.7)
        for x in (0.1, 1.0, 10.0):
            assert value(back, x) == pytest.approx(value(m, x), rel=1e-12)

    def test_shifted_root(self):
        assert value(shift(power_mechanism([(1, 2)]), 1.0), 1.0) == pytest.approx(0.0, abs=1e-14)


class TestConditions:
    def test_quadratic_sigma_integrable(self):
        assert integral_condition("H2", pure_sigma(1.0, 2.0)).verdict is Verdict.FINITE

    def test_linear_sigma_not_integrable(self):
        assert integral_condition("H2", pure_sigma(1.0, 1.0)).verdict is Verdict.INFINITE

    def test_root_phi_integrable_at_zero(self):
        assert integral_condition("H1", pure_phi(1.0, 0.5)).verdict is Verdict.FINITE

    def test_linear_phi_not_integrable_at_zero(self):
        assert integral_condition("H1", pure_phi(1.0, 1.0)).verdict is Verdict.INFINITE

    def test_tabulated_matches_stable(self):
        grid = tuple(np.geomspace(1e-3, 1e3, 61))
        tabulated = TabulatedTail(grid, tuple(g ** -0.5 / 0.5 for g in grid), 0.5, 0.5)
        stable = StableTail(1.0, 0.5)
        for u in (0.01, 0.7, 30.0):
            assert float(tabulated.pieces().tail(u)) == pytest.approx(float(stable.pieces().tail(u)), rel=1e-6)
