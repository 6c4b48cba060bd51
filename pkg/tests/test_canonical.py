import math

import numpy as np
import pytest

from tangentstat import (ChainConfig, Observable, PotentialSpec, SystemSpec,
                         TangentPoint, boltzmann_weight, ensemble_average,
                         hamiltonian_equivalence, integrate,
                         partition_function, sample_canonical, thermodynamics)
from tangentstat._quadrature import simpson_doubling
from tangentstat.canonical import InverseTemperature, _batch_means_stderr
from tangentstat.errors import (PreconditionError, TuningWarning,
                                UnderflowWarning, UnsupportedError)

HO = SystemSpec(dof=1, potential=PotentialSpec.harmonic(1.0))
HO2 = SystemSpec(dof=2, potential=PotentialSpec.harmonic(1.0))
QUARTIC = SystemSpec(dof=1, potential=PotentialSpec.polynomial([0, 0, 0, 0, 0.25]))
DW = SystemSpec(dof=1, potential=PotentialSpec.double_well(1.0))

# frozen before the build by an adaptive-quadrature oracle at rel error 1e-8:
#   Z_quartic = (2 pi)^(-1) sqrt(2 pi) * int exp(-q^4/4) dq
#   DW_Q2     = <q^2> under rho(q) ~ exp(-5 (q^2-1)^2 / 4)
Z_QUARTIC_BETA1 = 1.0227656721131684
DW_MEAN_Q2_BETA5 = 0.8308953526652058


def test_frozen_oracles_against_scipy():
    # guard the fixtures with an independent quadrature route
    scipy_integrate = pytest.importorskip("scipy.integrate")
    iq, _ = scipy_integrate.quad(lambda q: math.exp(-q ** 4 / 4),
                                 -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)
    assert iq * math.sqrt(2 * math.pi) / (2 * math.pi) \
        == pytest.approx(Z_QUARTIC_BETA1, rel=1e-8)
    num, _ = scipy_integrate.quad(
        lambda q: q * q * math.exp(-5 * (q * q - 1) ** 2 / 4),
        -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)
    den, _ = scipy_integrate.quad(
        lambda q: math.exp(-5 * (q * q - 1) ** 2 / 4),
        -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)
    assert num / den == pytest.approx(DW_MEAN_Q2_BETA5, rel=1e-8)


class TestBoltzmannWeight:
    def test_unit_energy(self):
        x = TangentPoint(q=[0.0], qtilde=[math.sqrt(2.0)])
        assert boltzmann_weight(HO, x, 1.0) == pytest.approx(math.exp(-1.0), rel=1e-12)

    def test_ground_state(self):
        assert boltzmann_weight(HO, TangentPoint(q=[0.0], qtilde=[0.0]), 1.0) == 1.0

    def test_infinite_temperature_limit(self):
        x = TangentPoint(q=[2.0], qtilde=[1.5])
        assert boltzmann_weight(HO, x, 1e-300) == pytest.approx(1.0, abs=1e-12)

    def test_underflow_flagged(self):
        x = TangentPoint(q=[50.0], qtilde=[0.0])
        with pytest.warns(UnderflowWarning):
            assert boltzmann_weight(HO, x, 1.0) == 0.0

    def test_beta_validation(self):
        with pytest.raises(PreconditionError):
            boltzmann_weight(HO, TangentPoint(q=[0.0], qtilde=[0.0]), -1.0)
        with pytest.raises(PreconditionError):
            InverseTemperature(0.0)


class TestPartitionFunction:
    def test_ho_closed_form(self):
        assert partition_function(HO, 1.0, "quadrature").Z \
            == pytest.approx(1.0, abs=1e-6)
        assert partition_function(HO, 2.0, "quadrature").Z \
            == pytest.approx(0.5, abs=1e-6)
        assert partition_function(HO, 1.0, "analytic").Z == 1.0

    def test_accepts_inverse_temperature_wrapper(self):
        res = partition_function(HO, InverseTemperature(2.0), "analytic")
        assert res.Z == 0.5

    def test_quartic_against_frozen_oracle(self):
        res = partition_function(QUARTIC, 1.0, "quadrature")
        assert res.Z == pytest.approx(Z_QUARTIC_BETA1, rel=1e-8)

    @pytest.mark.parametrize("system", [HO, QUARTIC, DW])
    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
    def test_importance_mc_consistent_with_quadrature(self, system, beta):
        quad = partition_function(system, beta, "quadrature")
        mc = partition_function(system, beta, "importance-mc",
                                budget=400_000, seed=31)
        # the 1e-12 floor covers the zero-variance harmonic case
        assert abs(mc.Z - quad.Z) <= 3 * mc.stderr + 1e-12 * quad.Z

    def test_beta_scaling_ho(self):
        for beta in np.linspace(0.4, 3.0, 7):
            res = partition_function(HO, float(beta), "quadrature")
            assert res.Z * beta == pytest.approx(1.0, abs=1e-6)

    def test_factorization(self):
        z1 = partition_function(HO, 1.3, "quadrature").Z
        z2 = partition_function(HO2, 1.3, "quadrature").Z
        assert z2 == pytest.approx(z1 ** 2, rel=1e-9)

    def test_non_confining_rejected(self):
        free = SystemSpec(dof=1, potential=PotentialSpec.polynomial([0.0]))
        with pytest.raises(UnsupportedError):
            partition_function(free, 1.0, "quadrature")

    def test_seed_required_for_mc(self):
        with pytest.raises(PreconditionError):
            partition_function(HO, 1.0, "importance-mc")

    def test_mc_bit_reproducible(self):
        a = partition_function(DW, 1.0, "importance-mc", budget=100_000, seed=5)
        b = partition_function(DW, 1.0, "importance-mc", budget=100_000, seed=5)
        assert a.Z == b.Z and a.stderr == b.stderr


class TestSampling:
    def test_symmetric_mean_and_gaussian_marginal(self):
        cfg = ChainConfig(n_samples=200_000, burn_in=2_000, seed=9, thinning=5)
        samples = sample_canonical(HO, 1.0, cfg)
        n = len(samples)
        se_mean = samples.qs.std() / math.sqrt(n) * 3  # thinned, mild correlation
        assert abs(samples.qs.mean()) <= 3 * se_mean
        var = samples.qtildes.var()
        se_var = var * math.sqrt(2.0 / n) * 3
        assert abs(var - 1.0) <= 3 * se_var

    def test_acceptance_rate_reported(self):
        cfg = ChainConfig(n_samples=50_000, burn_in=500, seed=3)
        samples = sample_canonical(HO, 1.0, cfg)
        assert 0.05 <= samples.acceptance_rate <= 0.95

    def test_tuning_warning_for_bad_proposal(self):
        cfg = ChainConfig(n_samples=5_000, burn_in=100, seed=3,
                          proposal_scale=80.0)
        with pytest.warns(TuningWarning):
            sample_canonical(HO, 1.0, cfg)

    def test_chain_config_validation(self):
        with pytest.raises(PreconditionError):
            ChainConfig(n_samples=10, burn_in=10)
        with pytest.raises(PreconditionError):
            ChainConfig(n_samples=10, burn_in=0, proposal_scale=0.0)
        with pytest.raises(PreconditionError):
            ChainConfig(n_samples=10, burn_in=0, thinning=0)


class TestEnsembleAverage:
    def test_energy_equipartition(self):
        res = ensemble_average(HO, Observable.energy(), 2.0, "quadrature")
        assert res.value == pytest.approx(0.5, abs=1e-5)

    def test_kinetic_equipartition(self):
        res = ensemble_average(HO, Observable.kinetic(), 1.0, "quadrature")
        assert res.value == pytest.approx(0.5, abs=1e-5)

    def test_odd_moment_vanishes(self):
        res = ensemble_average(HO, Observable.coordinate(0), 1.0, "quadrature")
        assert abs(res.value) <= 1e-10

    def test_double_well_q2_quadrature_matches_oracle(self):
        res = ensemble_average(DW, Observable.monomial(q_powers=(2,)), 5.0,
                               "quadrature")
        assert res.value == pytest.approx(DW_MEAN_Q2_BETA5, rel=1e-6)

    def test_double_well_q2_metropolis(self):
        cfg = ChainConfig(n_samples=600_000, burn_in=10_000, seed=3, thinning=4)
        res = ensemble_average(DW, Observable.monomial(q_powers=(2,)), 5.0,
                               "metropolis", cfg=cfg)
        assert abs(res.value - DW_MEAN_Q2_BETA5) <= 3 * res.error

    def test_dof2_builtin_factorization(self):
        res = ensemble_average(HO2, Observable.energy(), 1.0, "quadrature")
        assert res.value == pytest.approx(2.0, abs=1e-5)
        res = ensemble_average(HO2, Observable.monomial(q_powers=(2, 2)), 1.0,
                               "quadrature")
        assert res.value == pytest.approx(1.0, abs=1e-5)

    def test_dof2_custom_needs_sampling(self):
        custom = Observable.custom(lambda qt, q: float(q[0] * q[1]))
        with pytest.raises(UnsupportedError):
            ensemble_average(HO2, custom, 1.0, "quadrature")

    def test_batch_means_sanity(self):
        rng = np.random.default_rng(0)
        iid = rng.normal(size=10_000)
        se = _batch_means_stderr(iid)
        assert se == pytest.approx(1.0 / math.sqrt(10_000), rel=0.35)


class TestThermodynamics:
    def test_beta_one(self):
        res = thermodynamics(HO, 1.0)
        assert res.Z == pytest.approx(1.0, abs=1e-4)
        assert res.U == pytest.approx(1.0, abs=1e-4)
        assert res.F == pytest.approx(0.0, abs=1e-4)
        assert res.S == pytest.approx(1.0, abs=1e-4)

    def test_beta_half(self):
        res = thermodynamics(HO, 0.5)
        assert res.T == pytest.approx(2.0, abs=1e-12)
        assert res.Z == pytest.approx(2.0, abs=1e-4)
        assert res.U == pytest.approx(2.0, abs=1e-4)
        assert res.F == pytest.approx(-2 * math.log(2), abs=1e-4)
        assert res.S == pytest.approx(1 + math.log(2), abs=1e-4)

    def test_gibbs_identity_by_construction(self):
        res = thermodynamics(QUARTIC, 1.7)
        assert res.S == pytest.approx((res.U - res.F) / res.T, abs=1e-12)

    def test_entropy_closed_form_ho(self):
        # S = kB (1 + ln(kB T / (hbar omega)))
        for beta in (0.5, 1.0, 2.0):
            res = thermodynamics(HO, beta)
            assert res.S == pytest.approx(1.0 + math.log(1.0 / beta), abs=1e-4)

    def test_zero_step_rejected(self):
        with pytest.raises(PreconditionError):
            thermodynamics(HO, 1.0, dbeta=0.0)

    def test_mc_thermodynamics_consistent(self):
        res = thermodynamics(HO, 1.0, dbeta=0.05, method="importance-mc",
                             budget=200_000, seed=8)
        assert res.Z == pytest.approx(1.0, abs=1e-3)
        assert res.U == pytest.approx(1.0, abs=0.05)


class TestHamiltonianEquivalence:
    def test_ho_quadrature(self):
        res = hamiltonian_equivalence(HO, 1.0, "quadrature")
        assert abs(res.ratio - 1.0) <= 1e-10
        assert res.z_lagrangian == pytest.approx(1.0, abs=1e-6)

    def test_quartic_quadrature(self):
        res = hamiltonian_equivalence(QUARTIC, 1.0, "quadrature")
        assert abs(res.ratio - 1.0) <= 1e-8

    def test_shared_seed_mc_is_exact(self):
        res = hamiltonian_equivalence(HO, 3.0, "importance-mc",
                                      budget=100_000, seed=12)
        assert res.ratio == 1.0

    def test_density_normalization(self):
        # independent route: plain 2-D Simpson of rho = exp(beta L)/(h Z)
        beta = 1.0
        z = partition_function(HO, beta, "quadrature").Z
        lim = 9.0  # exp(-40.5) tail

        def marginal(q):
            inner = np.array([simpson_doubling(
                lambda v, qq=qq: np.exp(-beta * (0.5 * v * v + 0.5 * qq * qq)),
                -lim, lim, 1e-10)[0] for qq in np.atleast_1d(q)])
            return inner

        total, _ = simpson_doubling(marginal, -lim, lim, 1e-9)
        mass = total / (2 * math.pi) / z
        assert mass == pytest.approx(1.0, abs=1e-6)


class TestStationarity:
    def test_advected_cloud_statistics_unchanged(self):
        cfg = ChainConfig(n_samples=120_000, burn_in=5_000, seed=21, thinning=20)
        samples = sample_canonical(HO, 1.0, cfg)
        n = len(samples)
        e0 = samples.energies(HO)
        q2_0 = samples.qs[:, 0] ** 2
        # advect every sample by tau = 1
        from tangentstat._kernels import rk4_advect
        kind, params = HO.potential.kernel_args()
        q1, qt1 = rk4_advect(kind, params, samples.qs, samples.qtildes, 1e-3, 1000)
        e1 = 0.5 * qt1[:, 0] ** 2 + 0.5 * q1[:, 0] ** 2
        q2_1 = q1[:, 0] ** 2
        assert abs(e1.mean() - e0.mean()) <= 3 * e0.std() / math.sqrt(n) + 1e-9
        assert abs(q2_1.mean() - q2_0.mean()) \
            <= 3 * math.sqrt(q2_0.var() + q2_1.var()) / math.sqrt(n)
