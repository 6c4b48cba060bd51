import math
import warnings

import numpy as np
import pytest

from tangentstat import (Observable, PotentialSpec, SystemSpec, TangentPoint,
                         TangentPolygon, area_evolution, density_along_flow,
                         energy_drift, flow_step, integrate,
                         jacobian_determinant, lagrangian_eval, shoelace_area)
from tangentstat.errors import (BlowUpError, PreconditionError,
                                SelfIntersectionWarning)

HO = SystemSpec(dof=1, potential=PotentialSpec.harmonic(1.0))
FREE = SystemSpec(dof=1, potential=PotentialSpec.polynomial([0.0]))
DW = SystemSpec(dof=1, potential=PotentialSpec.double_well(1.0))
BUILTINS = [HO, FREE, DW]
CONFINING = [HO, DW,
             SystemSpec(dof=1, potential=PotentialSpec.polynomial([0, 0, 0, 0, 0.25]))]


class TestFlowStep:
    def test_fixed_point(self):
        x = flow_step(HO, TangentPoint(q=[0.0], qtilde=[0.0]), 0.37)
        assert x.q[0] == 0.0 and x.qtilde[0] == 0.0

    def test_free_motion_exact(self):
        x = flow_step(FREE, TangentPoint(q=[0.0], qtilde=[1.0]), 0.5)
        assert x.q[0] == 0.5
        assert x.qtilde[0] == 1.0

    def test_ho_against_closed_form(self):
        # q'' = -q from (qtilde, q) = (0, 1): q(tau) = cos tau
        dtau = 1e-3
        x = flow_step(HO, TangentPoint(q=[1.0], qtilde=[0.0]), dtau)
        assert x.q[0] == pytest.approx(math.cos(dtau), abs=1e-12)
        assert x.qtilde[0] == pytest.approx(-math.sin(dtau), abs=1e-12)

    def test_bad_step_rejected(self):
        with pytest.raises(PreconditionError):
            flow_step(HO, TangentPoint(q=[0.0], qtilde=[0.0]), 0.0)


class TestIntegrate:
    def test_quarter_period(self):
        traj = integrate(HO, TangentPoint(q=[1.0], qtilde=[0.0]), math.pi / 2, 1e-3)
        assert traj.qs[-1, 0] == pytest.approx(0.0, abs=1e-8)
        assert traj.qtildes[-1, 0] == pytest.approx(-1.0, abs=1e-8)
        assert traj.final_step_partial
        assert len(traj) == math.ceil(math.pi / 2 / 1e-3) + 1

    def test_zero_duration_rejected(self):
        with pytest.raises(PreconditionError):
            integrate(HO, TangentPoint(q=[1.0], qtilde=[0.0]), 0.0, 1e-3)

    def test_double_well_energy_conserved(self):
        traj = integrate(DW, TangentPoint(q=[0.5], qtilde=[0.0]), 1.0, 1e-3)
        assert energy_drift(DW, traj) <= 1e-9

    def test_tau_grid_uniform_and_increasing(self):
        traj = integrate(HO, TangentPoint(q=[1.0], qtilde=[0.0]), 1.0, 1e-2)
        assert not traj.final_step_partial
        diffs = np.diff(traj.taus)
        assert np.all(diffs > 0)
        assert diffs == pytest.approx(np.full_like(diffs, 1e-2), rel=1e-12)

    def test_blow_up_reported(self):
        unstable = SystemSpec(dof=1,
                              potential=PotentialSpec.polynomial([0, 0, 0, 0, -1.0]))
        with pytest.raises(BlowUpError) as err:
            integrate(unstable, TangentPoint(q=[1.0], qtilde=[1.0]), 5.0, 1e-2)
        assert err.value.tau > 0

    def test_samples_iteration(self):
        traj = integrate(HO, TangentPoint(q=[1.0], qtilde=[0.0]), 0.1, 1e-2)
        pairs = list(traj.samples())
        assert pairs[0][0] == 0.0
        assert pairs[0][1].q[0] == 1.0


class TestEnergyDrift:
    def test_single_sample(self):
        traj = integrate(HO, TangentPoint(q=[1.0], qtilde=[0.0]), 1e-3, 1e-3)
        one = traj.__class__(taus=traj.taus[:1], qs=traj.qs[:1],
                             qtildes=traj.qtildes[:1], step=traj.step)
        assert energy_drift(HO, one) == 0.0

    def test_free_motion_exactly_zero(self):
        traj = integrate(FREE, TangentPoint(q=[0.0], qtilde=[1.3]), 5.0, 1e-2)
        assert energy_drift(FREE, traj) == 0.0

    def test_ho_long_run(self):
        traj = integrate(HO, TangentPoint(q=[1.0], qtilde=[0.0]), 10.0, 1e-3)
        assert energy_drift(HO, traj) <= 1e-10

    @pytest.mark.parametrize("system", BUILTINS)
    def test_conservation_random_states(self, system):
        rng = np.random.default_rng(5)
        for _ in range(3):
            x0 = TangentPoint(q=rng.uniform(-2, 2, 1), qtilde=rng.uniform(-2, 2, 1))
            traj = integrate(system, x0, 10.0, 1e-3)
            assert energy_drift(system, traj) <= 1e-8

    def test_time_reversal(self):
        x0 = TangentPoint(q=[0.8], qtilde=[-0.4])
        fwd = integrate(DW, x0, 3.0, 1e-3)
        back = integrate(DW, TangentPoint(q=fwd.qs[-1], qtilde=-fwd.qtildes[-1]),
                         3.0, 1e-3)
        assert back.qs[-1, 0] == pytest.approx(x0.q[0], abs=1e-7)
        assert -back.qtildes[-1, 0] == pytest.approx(x0.qtilde[0], abs=1e-7)

    def test_rk4_order(self):
        # halving dtau must shrink the final-state error at 4th order (>= 14x)
        x0 = TangentPoint(q=[1.0], qtilde=[0.0])
        tau = math.pi

        def final_error(dtau):
            traj = integrate(HO, x0, tau, dtau)
            return math.hypot(traj.qs[-1, 0] - math.cos(tau),
                              traj.qtildes[-1, 0] + math.sin(tau))

        assert final_error(0.05) / final_error(0.025) >= 14.0


class TestJacobianDeterminant:
    def test_identity_at_zero(self):
        assert jacobian_determinant(HO, TangentPoint(q=[1.0], qtilde=[0.3]),
                                    0.0, 1e-3) == 1.0

    def test_ho_rotation(self):
        det = jacobian_determinant(HO, TangentPoint(q=[0.4], qtilde=[-1.0]),
                                   2.0, 1e-3)
        assert det == pytest.approx(1.0, abs=1e-9)

    def test_double_well(self):
        det = jacobian_determinant(DW, TangentPoint(q=[1.2], qtilde=[0.3]),
                                   1.0, 1e-3)
        assert det == pytest.approx(1.0, abs=1e-8)

    def test_against_polygon_area_oracle(self):
        # independent oracle: advected area of a small square around x0
        x0 = TangentPoint(q=[1.2], qtilde=[0.3])
        det = jacobian_determinant(DW, x0, 1.0, 1e-3)
        side = 1e-3
        poly = TangentPolygon.rectangle(x0.q[0] - side / 2, x0.q[0] + side / 2,
                                        x0.qtilde[0] - side / 2,
                                        x0.qtilde[0] + side / 2, per_side=8)
        results = area_evolution(DW, poly, 1.0, 1e-3, n_checkpoints=3,
                                 refine=False)
        area_ratio = results[-1][1] / results[0][1]
        assert det == pytest.approx(area_ratio, abs=1e-6)

    @pytest.mark.parametrize("system", BUILTINS)
    def test_liouville_long_run(self, system):
        det = jacobian_determinant(system, TangentPoint(q=[0.7], qtilde=[0.2]),
                                   10.0, 1e-3)
        assert abs(det - 1.0) <= 1e-7

    def test_multidimensional(self):
        sys2 = SystemSpec(dof=2, potential=PotentialSpec.double_well(1.0))
        det = jacobian_determinant(sys2, TangentPoint(q=[0.3, 1.1],
                                                      qtilde=[0.5, -0.2]),
                                   3.0, 1e-3)
        assert det == pytest.approx(1.0, abs=1e-8)


class TestPolygon:
    def test_unit_square_area(self):
        assert TangentPolygon.unit_square().area() == 1.0

    def test_clockwise_rejected(self):
        with pytest.raises(PreconditionError):
            TangentPolygon(qs=[0.0, 0.0, 1.0, 1.0], qtildes=[0.0, 1.0, 1.0, 0.0])

    def test_too_few_vertices(self):
        with pytest.raises(PreconditionError):
            TangentPolygon(qs=[0.0, 1.0], qtildes=[0.0, 1.0])

    def test_self_intersection_rejected(self):
        with pytest.raises(PreconditionError):
            TangentPolygon(qs=[0.0, 1.0, 1.0, 0.0], qtildes=[0.0, 1.0, 0.0, 1.0])

    def test_shoelace_signed(self):
        assert shoelace_area(np.array([0.0, 1.0, 1.0, 0.0]),
                             np.array([0.0, 0.0, 1.0, 1.0])) == 1.0


class TestAreaEvolution:
    def test_initial_area_exact(self):
        res = area_evolution(HO, TangentPolygon.unit_square(), 0.0, 1e-3,
                             n_checkpoints=2)
        assert res == [(0.0, 1.0)]

    def test_ho_rotation_preserves_area(self):
        res = area_evolution(HO, TangentPolygon.unit_square(per_side=16),
                             math.pi / 4, 1e-3, n_checkpoints=5)
        assert res[-1][0] == pytest.approx(math.pi / 4)
        for _, area in res:
            assert area == pytest.approx(1.0, abs=1e-6)

    def test_free_shear_preserves_area(self):
        res = area_evolution(FREE, TangentPolygon.unit_square(), 1.0, 1e-3,
                             n_checkpoints=3)
        for _, area in res:
            assert area == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("system", BUILTINS)
    def test_refined_advection_to_tau_5(self, system):
        poly = TangentPolygon.unit_square(per_side=400)
        res = area_evolution(system, poly, 5.0, 1e-3, n_checkpoints=26)
        for _, area in res:
            assert abs(area - 1.0) <= 1e-4

    def test_dof2_rejected(self):
        sys2 = SystemSpec(dof=2, potential=PotentialSpec.harmonic(1.0))
        with pytest.raises(PreconditionError):
            area_evolution(sys2, TangentPolygon.unit_square(), 1.0, 1e-3)

    def test_underresolved_boundary_warns_but_returns(self):
        # 4-vertex square sheared hard: chords cross and a warning fires
        poly = TangentPolygon.unit_square()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = area_evolution(DW, poly, 5.0, 1e-2, n_checkpoints=11,
                                 refine=False)
        assert len(res) == 11
        hits = [w for w in caught if issubclass(w.category, SelfIntersectionWarning)]
        assert hits, "expected a self-intersection warning for the coarse square"


class TestDensityAlongFlow:
    def test_constant_density(self):
        rho = Observable.constant()
        start, end = density_along_flow(HO, rho, TangentPoint(q=[0.3], qtilde=[1.0]),
                                        3.0, 1e-3)
        assert (start, end) == (1.0, 1.0)

    def test_equilibrium_density_is_stationary(self):
        def boltzmann(qt, q):
            lagr = -(0.5 * float(np.sum(qt * qt)) + 0.5 * float(np.sum(q * q)))
            return math.exp(lagr)

        rho = Observable.custom(boltzmann, label="exp(L)")
        start, end = density_along_flow(HO, rho,
                                        TangentPoint(q=[0.9], qtilde=[-0.4]),
                                        3.0, 1e-3)
        assert end == pytest.approx(start, abs=1e-9)

    def test_coordinate_density_is_not_stationary(self):
        rho = Observable.coordinate(0)
        start, end = density_along_flow(HO, rho, TangentPoint(q=[1.0], qtilde=[0.0]),
                                        math.pi, 1e-3)
        assert start == 1.0
        assert end == pytest.approx(-1.0, abs=1e-8)
