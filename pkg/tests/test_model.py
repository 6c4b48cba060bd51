import math

import numpy as np
import pytest

from tangentstat import (Observable, PotentialSpec, SystemSpec, TangentPoint,
                         UnitsConfig, hamiltonian_eval, lagrange_bracket,
                         lagrangian_eval, potential_eval, potential_grad)
from tangentstat.errors import DomainError, PreconditionError

HO = SystemSpec(dof=1, potential=PotentialSpec.harmonic(1.0))
ALL_POTENTIALS = [
    PotentialSpec.harmonic(1.0),
    PotentialSpec.harmonic(2.5),
    PotentialSpec.polynomial([1.0, 0.0, 2.0]),
    PotentialSpec.polynomial([0.0, 0.0, 0.0, 0.0, 0.25]),
    PotentialSpec.double_well(1.0),
    PotentialSpec.double_well(1.7),
]


class TestUnits:
    def test_defaults(self):
        u = UnitsConfig()
        assert u.hbar == 1.0 and u.kB == 1.0

    def test_h_is_derived_exactly(self):
        for hbar in (1.0, 0.5, 3.7):
            assert UnitsConfig(hbar=hbar).h == 2.0 * math.pi * hbar

    @pytest.mark.parametrize("bad", [{"hbar": 0.0}, {"hbar": -1.0},
                                     {"kB": 0.0}, {"hbar": math.inf}])
    def test_invalid(self, bad):
        with pytest.raises(PreconditionError):
            UnitsConfig(**bad)


class TestPotential:
    def test_harmonic_eval(self):
        assert potential_eval(PotentialSpec.harmonic(1.0), [2.0]) == 2.0
        assert potential_eval(PotentialSpec.harmonic(1.0), [0.0]) == 0.0

    def test_double_well_minimum(self):
        assert potential_eval(PotentialSpec.double_well(1.0), [1.0]) == 0.0

    def test_gradients(self):
        assert potential_grad(PotentialSpec.harmonic(1.0), [3.0]) == pytest.approx([3.0])
        assert potential_grad(PotentialSpec.double_well(1.0), [1.0]) == pytest.approx([0.0])
        assert potential_grad(PotentialSpec.polynomial([1.0, 0.0, 2.0]), [1.0]) \
            == pytest.approx([4.0])

    def test_nonfinite_input_rejected(self):
        with pytest.raises(DomainError):
            potential_eval(PotentialSpec.harmonic(1.0), [math.nan])
        with pytest.raises(DomainError):
            potential_grad(PotentialSpec.harmonic(1.0), [math.inf])

    @pytest.mark.parametrize("bad", [
        lambda: PotentialSpec.harmonic(0.0),
        lambda: PotentialSpec.harmonic(-2.0),
        lambda: PotentialSpec.double_well(0.0),
        lambda: PotentialSpec.polynomial([]),
        lambda: PotentialSpec(kind="mystery"),
    ])
    def test_invalid_specs(self, bad):
        with pytest.raises(PreconditionError):
            bad()

    def test_confining_classification(self):
        assert PotentialSpec.harmonic(1.0).is_confining()
        assert PotentialSpec.double_well(1.0).is_confining()
        assert PotentialSpec.polynomial([0, 0, 0, 0, 0.25]).is_confining()
        assert not PotentialSpec.polynomial([0.0]).is_confining()  # free
        assert not PotentialSpec.polynomial([0, 1.0]).is_confining()  # linear
        assert not PotentialSpec.polynomial([0, 0, -1.0]).is_confining()

    def test_minima(self):
        assert PotentialSpec.harmonic(2.0).minima() == pytest.approx([0.0])
        assert PotentialSpec.double_well(1.5).minima() == pytest.approx([-1.5, 1.5])
        m = PotentialSpec.polynomial([0, 0, 0, 0, 0.25]).minima()
        assert m == pytest.approx([0.0])

    @pytest.mark.parametrize("pot", ALL_POTENTIALS)
    def test_gradient_matches_finite_differences(self, pot):
        # independent oracle: central differences of potential_eval
        rng = np.random.default_rng(42)
        h = 1e-6
        for q in rng.uniform(-5, 5, size=20):
            grad = potential_grad(pot, [q])[0]
            fd = (potential_eval(pot, [q + h]) - potential_eval(pot, [q - h])) / (2 * h)
            assert grad == pytest.approx(fd, rel=1e-6, abs=1e-6)

    @pytest.mark.parametrize("pot", ALL_POTENTIALS)
    def test_hessian_matches_finite_differences(self, pot):
        rng = np.random.default_rng(43)
        h = 1e-5
        for q in rng.uniform(-3, 3, size=10):
            hess = float(pot.second_derivative(np.array([q]))[0])
            fd = (potential_eval(pot, [q + h]) - 2 * potential_eval(pot, [q])
                  + potential_eval(pot, [q - h])) / h**2
            assert hess == pytest.approx(fd, rel=1e-4, abs=1e-4)

    @pytest.mark.parametrize("pot", ALL_POTENTIALS)
    def test_poly_coeffs_reproduce_value(self, pot):
        rng = np.random.default_rng(44)
        qs = rng.uniform(-3, 3, size=8)
        direct = pot.value(qs)
        via_poly = np.polynomial.polynomial.polyval(qs, pot.poly_coeffs())
        assert direct == pytest.approx(via_poly, rel=1e-12, abs=1e-12)


class TestSystemAndPoints:
    def test_dof_validation(self):
        with pytest.raises(PreconditionError):
            SystemSpec(dof=0, potential=PotentialSpec.harmonic(1.0))

    def test_metadata_is_inert_bookkeeping(self):
        s = SystemSpec(dof=1, potential=PotentialSpec.harmonic(1.0),
                       volume=2.5, n_particles=7)
        assert s.volume == 2.5 and s.n_particles == 7
        # energies do not depend on it
        assert lagrangian_eval(s, TangentPoint(q=[1.0], qtilde=[1.0]))[1] == 1.0

    def test_tangent_point_validation(self):
        with pytest.raises(DomainError):
            TangentPoint(q=[1.0, 2.0], qtilde=[1.0])
        with pytest.raises(DomainError):
            TangentPoint(q=[math.nan], qtilde=[0.0])

    def test_tangent_point_immutable(self):
        x = TangentPoint(q=[1.0], qtilde=[2.0])
        with pytest.raises(ValueError):
            x.q[0] = 5.0


class TestEnergies:
    def test_lagrangian_examples(self):
        assert lagrangian_eval(HO, TangentPoint(q=[0.0], qtilde=[1.0])) == (-0.5, 0.5)
        assert lagrangian_eval(HO, TangentPoint(q=[0.0], qtilde=[0.0])) == (0.0, 0.0)
        assert lagrangian_eval(HO, TangentPoint(q=[1.0], qtilde=[1.0])) == (-1.0, 1.0)

    def test_hamiltonian_examples(self):
        assert hamiltonian_eval(HO, [1.0], [0.0]) == 0.5
        assert hamiltonian_eval(HO, [0.0], [0.0]) == 0.0
        assert hamiltonian_eval(HO, [1.0], [1.0]) == 1.0

    @pytest.mark.parametrize("pot", ALL_POTENTIALS)
    def test_lagrangian_hamiltonian_swap_is_exact(self, pot):
        # same arithmetic under qtilde <-> p: equality must be exact
        system = SystemSpec(dof=3, potential=pot)
        rng = np.random.default_rng(7)
        for _ in range(10):
            v, q = rng.normal(size=3), rng.normal(size=3)
            _, energy = lagrangian_eval(system, TangentPoint(q=q, qtilde=v))
            assert energy == hamiltonian_eval(system, v, q)


class TestBracket:
    def test_generates_velocity(self):
        x = TangentPoint(q=[1.0], qtilde=[2.0])
        val = lagrange_bracket(Observable.coordinate(0), Observable.lagrangian(), x, HO)
        assert val == 2.0

    def test_generates_force(self):
        x = TangentPoint(q=[1.0], qtilde=[0.0])
        val = lagrange_bracket(Observable.velocity(0), Observable.lagrangian(), x, HO)
        assert val == -1.0

    def test_self_bracket_vanishes(self):
        x = TangentPoint(q=[0.3], qtilde=[-1.2])
        lagr = Observable.lagrangian()
        assert lagrange_bracket(lagr, lagr, x, HO) == 0.0

    @pytest.mark.parametrize("pot", ALL_POTENTIALS)
    def test_bracket_generates_dynamics_everywhere(self, pot):
        system = SystemSpec(dof=2, potential=pot)
        lagr = Observable.lagrangian()
        rng = np.random.default_rng(11)
        for _ in range(5):
            q, v = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2)
            x = TangentPoint(q=q, qtilde=v)
            for i in range(2):
                assert lagrange_bracket(Observable.coordinate(i), lagr, x, system) \
                    == pytest.approx(v[i], abs=1e-12)
                assert lagrange_bracket(Observable.velocity(i), lagr, x, system) \
                    == pytest.approx(-potential_grad(pot, q)[i], abs=1e-12)

    def test_antisymmetry_with_custom_observables(self):
        # finite-difference partials; antisymmetry within 1e-6
        def f1(qt, q):
            return math.sin(q[0]) * qt[0] ** 2

        def f2(qt, q):
            return math.exp(-0.5 * (q[0] ** 2 + qt[0] ** 2))

        a = Observable.custom(f1, label="f1")
        b = Observable.custom(f2, label="f2")
        rng = np.random.default_rng(3)
        for _ in range(5):
            x = TangentPoint(q=rng.uniform(-2, 2, 1), qtilde=rng.uniform(-2, 2, 1))
            ab = lagrange_bracket(a, b, x, HO)
            ba = lagrange_bracket(b, a, x, HO)
            assert ab == pytest.approx(-ba, abs=1e-6)

    def test_custom_partials_match_analytic(self):
        # custom wrapper around the energy must agree with the builtin kind
        def e_fn(qt, q):
            return 0.5 * float(np.sum(qt * qt)) + 0.5 * float(np.sum(q * q))

        custom = Observable.custom(e_fn)
        builtin = Observable.energy()
        x = TangentPoint(q=[0.7, -0.2], qtilde=[1.1, 0.4])
        sys2 = SystemSpec(dof=2, potential=PotentialSpec.harmonic(1.0))
        c_qt, c_q = custom.partials(x, sys2)
        b_qt, b_q = builtin.partials(x, sys2)
        assert c_qt == pytest.approx(b_qt, abs=1e-8)
        assert c_q == pytest.approx(b_q, abs=1e-8)


class TestObservables:
    def test_monomial_value_and_partials(self):
        obs = Observable.monomial(q_powers=(2,), qt_powers=(1,))
        sys1 = HO
        x = TangentPoint(q=[3.0], qtilde=[2.0])
        assert obs.evaluate(x, sys1) == 18.0
        dqt, dq = obs.partials(x, sys1)
        assert dq[0] == pytest.approx(12.0)   # 2 q qt
        assert dqt[0] == pytest.approx(9.0)   # q^2

    def test_monomial_partial_at_zero_coordinate(self):
        obs = Observable.monomial(q_powers=(1,))
        x = TangentPoint(q=[0.0], qtilde=[5.0])
        dqt, dq = obs.partials(x, HO)
        assert dq[0] == 1.0 and dqt[0] == 0.0

    def test_constant_observable(self):
        obs = Observable.constant()
        x = TangentPoint(q=[2.0], qtilde=[-1.0])
        assert obs.evaluate(x, HO) == 1.0
        dqt, dq = obs.partials(x, HO)
        assert np.all(dqt == 0.0) and np.all(dq == 0.0)

    def test_negative_monomial_power_rejected(self):
        with pytest.raises(PreconditionError):
            Observable.monomial(q_powers=(-1,))

    def test_energy_kinetic_potential_split(self):
        x = TangentPoint(q=[1.0], qtilde=[2.0])
        e = Observable.energy().evaluate(x, HO)
        k = Observable.kinetic().evaluate(x, HO)
        v = Observable.potential().evaluate(x, HO)
        assert (k, v) == (2.0, 0.5)
        assert e == k + v
