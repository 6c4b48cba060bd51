"""Canonical ensemble on the tangent bundle.

The equilibrium density is rho ~ exp(beta * L) = exp(-beta * E); its
normalization Z = (1/h^d) integral exp(beta L) dGamma generates the
thermodynamics U = -d ln Z / d beta, F = -kB T ln Z, S = (U - F)/T.
(The sign conventions are fixed so the closed-form harmonic results
Z = kB T / (hbar omega) and U = kB T hold.)

Deterministic route: order-64 Gauss-Hermite on the velocity (whose
Boltzmann factor is exactly Gaussian) times panel-doubled Simpson on the
position. Stochastic routes: importance sampling from a Hessian-matched
Gaussian (mixture over global minima) and random-walk Metropolis on the
bundle. All stochastic paths are seeded, stream-split and bit-reproducible.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._quadrature import confining_span, gauss_hermite, simpson_doubling, simpson_nodes
from .errors import (PreconditionError, TuningWarning, UnderflowWarning,
                     UnsupportedError)
from .model import Observable, SystemSpec, TangentPoint, lagrangian_eval

GH_ORDER = 64
_LOG_FLOOR = 745.0  # exp(-x) underflows to 0 past this


@dataclass(frozen=True)
class InverseTemperature:
    """beta = 1/(kB T)."""

    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise PreconditionError("beta must be positive and finite")

    def temperature(self, units) -> float:
        return 1.0 / (units.kB * self.beta)


def _beta_value(beta) -> float:
    b = beta.beta if isinstance(beta, InverseTemperature) else float(beta)
    if not (math.isfinite(b) and b > 0):
        raise PreconditionError("beta must be positive and finite")
    return b


@dataclass(frozen=True)
class ThermoResult:
    """Canonical summary at one beta; fields not computed are None."""

    beta: float
    method: str
    Z: float | None = None
    U: float | None = None
    F: float | None = None
    S: float | None = None
    T: float | None = None
    stderr: float = 0.0


@dataclass(frozen=True)
class EnsembleEstimate:
    value: float
    error: float
    method: str


@dataclass(frozen=True)
class ChainConfig:
    """Metropolis chain settings. n_samples counts total chain steps;
    every ``thinning``-th state after ``burn_in`` is retained."""

    n_samples: int
    burn_in: int = 0
    proposal_scale: float | None = None
    seed: int = 0
    thinning: int = 1

    def __post_init__(self):
        if not (isinstance(self.n_samples, int) and self.n_samples > 0):
            raise PreconditionError("n_samples must be a positive integer")
        if not (isinstance(self.burn_in, int) and 0 <= self.burn_in < self.n_samples):
            raise PreconditionError("need n_samples > burn_in >= 0")
        if self.proposal_scale is not None and not (
                math.isfinite(self.proposal_scale) and self.proposal_scale > 0):
            raise PreconditionError("proposal_scale must be positive")
        if not (isinstance(self.thinning, int) and self.thinning >= 1):
            raise PreconditionError("thinning must be a positive integer")


@dataclass(frozen=True)
class CanonicalSamples:
    """Thinned post-burn-in Metropolis samples on the bundle."""

    qs: np.ndarray
    qtildes: np.ndarray
    acceptance_rate: float
    beta: float

    def __len__(self) -> int:
        return self.qs.shape[0]

    def energies(self, system: SystemSpec) -> np.ndarray:
        return (0.5 * np.sum(self.qtildes * self.qtildes, axis=1)
                + np.sum(system.potential.value(self.qs), axis=1))


@dataclass(frozen=True)
class EquivalenceResult:
    beta: float
    z_lagrangian: float
    z_hamiltonian: float
    ratio: float
    method: str


def boltzmann_weight(system: SystemSpec, x: TangentPoint, beta) -> float:
    """exp(beta * L(x)) = exp(-beta * E(x))."""
    b = _beta_value(beta)
    _, energy = lagrangian_eval(system, x)
    arg = b * energy
    if arg > _LOG_FLOOR:
        warnings.warn(
            f"Boltzmann weight underflowed to 0 (beta*E = {arg:.3g})",
            UnderflowWarning)
        return 0.0
    return math.exp(-arg)


def _require_confining(system: SystemSpec):
    if not system.potential.is_confining():
        raise UnsupportedError(
            "canonical integrals need a confining potential")


def _position_span(system: SystemSpec, beta: float) -> tuple[float, float]:
    pot = system.potential
    return confining_span(pot, pot.min_value() + 60.0 / beta)


def _position_factor(system: SystemSpec, beta: float,
                     rel_tol: float) -> tuple[float, float]:
    """integral exp(-beta V(q)) dq over one coordinate, with its delta."""
    pot = system.potential
    lo, hi = _position_span(system, beta)

    def f(q):
        return np.exp(-beta * pot.value(q))

    return simpson_doubling(f, lo, hi, rel_tol)


def _kinetic_factor(beta: float) -> float:
    """integral exp(-beta v^2/2) dv = sqrt(2/beta) * sum of GH weights."""
    _, w = gauss_hermite(GH_ORDER)
    return math.sqrt(2.0 / beta) * float(np.sum(w))


def _proposal_mixture(system: SystemSpec, beta: float):
    """Per-coordinate Gaussian mixture centered on the global minima,
    widths from the local Hessian (1/beta fallback when not positive)."""
    pot = system.potential
    centers = pot.minima()
    sigmas = np.empty_like(centers)
    for k, c in enumerate(centers):
        hess = float(pot.second_derivative(np.array([c]))[0])
        sigmas[k] = 1.0 / math.sqrt(beta * hess) if hess > 0 else 1.0 / math.sqrt(beta)
    return centers, sigmas


def _mixture_logpdf(q: np.ndarray, centers: np.ndarray,
                    sigmas: np.ndarray) -> np.ndarray:
    """log of the equal-weight Gaussian mixture pdf, elementwise on q."""
    z = (q[..., None] - centers) / sigmas
    comp = -0.5 * z * z - np.log(sigmas * math.sqrt(2.0 * math.pi))
    m = comp.max(axis=-1)
    return m + np.log(np.mean(np.exp(comp - m[..., None]), axis=-1))


def _importance_z(system: SystemSpec, beta: float, budget: int, seed: int,
                  n_streams: int, potential_of) -> tuple[float, float]:
    """Z by importance sampling; potential_of(q) -> per-sample potential sum.

    Separable kinetic part handled in closed form; only positions sampled.
    """
    d = system.dof
    centers, sigmas = _proposal_mixture(system, beta)
    n_comp = len(centers)
    per = budget // n_streams
    sizes = [per + (1 if k < budget - per * n_streams else 0)
             for k in range(n_streams)]
    n_tot = 0
    sum_w = 0.0
    sum_w2 = 0.0
    for k, size in enumerate(sizes):
        if size == 0:
            continue
        rng = np.random.default_rng([seed, k])
        comp = rng.integers(0, n_comp, size=(size, d)) if n_comp > 1 \
            else np.zeros((size, d), dtype=int)
        z = rng.standard_normal((size, d))
        q = centers[comp] + sigmas[comp] * z
        log_g = np.sum(_mixture_logpdf(q, centers, sigmas), axis=1)
        log_target = -beta * potential_of(q)
        w = np.exp(log_target - log_g)
        n_tot += size
        sum_w += float(np.sum(w))
        sum_w2 += float(np.sum(w * w))
    mean = sum_w / n_tot
    var = max(sum_w2 / n_tot - mean * mean, 0.0) * n_tot / max(n_tot - 1, 1)
    pref = (2.0 * math.pi / beta) ** (d / 2.0) / system.units.h ** d
    return pref * mean, pref * math.sqrt(var / n_tot)


def partition_function(system: SystemSpec, beta, method: str = "quadrature",
                       budget: int = 100_000, seed: int | None = None,
                       n_streams: int = 4, rel_tol: float = 1e-10) -> ThermoResult:
    """Z = (1/h^d) integral exp(beta L) dGamma (positive by convention)."""
    b = _beta_value(beta)
    _require_confining(system)
    d = system.dof
    if method == "analytic":
        if system.potential.kind != "harmonic":
            raise UnsupportedError("analytic Z exists for the harmonic "
                                   "potential only")
        z = (1.0 / (b * system.units.hbar * system.potential.omega)) ** d
        return ThermoResult(beta=b, method=method, Z=z)
    if method == "quadrature":
        if d > 2:
            raise UnsupportedError("quadrature Z supports d <= 2")
        iv, delta = _position_factor(system, b, rel_tol)
        z1 = _kinetic_factor(b) * iv / system.units.h
        z = z1 ** d
        err = abs(z) * d * (delta / iv if iv > 0 else 0.0)
        return ThermoResult(beta=b, method=method, Z=z, stderr=err)
    if method == "importance-mc":
        if seed is None:
            raise PreconditionError("importance-mc requires an explicit seed")

        def potential_of(q):
            return np.sum(system.potential.value(q), axis=1)

        z, err = _importance_z(system, b, budget, seed, n_streams, potential_of)
        return ThermoResult(beta=b, method=method, Z=z, stderr=err)
    raise PreconditionError(
        "method must be one of ('analytic', 'quadrature', 'importance-mc')")


def sample_canonical(system: SystemSpec, beta, cfg: ChainConfig) -> CanonicalSamples:
    """Metropolis chain targeting rho ~ exp(beta L).

    The proposal is an isotropic Gaussian step (default scale 1/sqrt(beta),
    the thermal width of the velocity marginal). The velocity marginal of
    the target is exactly Gaussian with variance 1/beta, which makes a handy
    sanity check on the returned samples.
    """
    b = _beta_value(beta)
    d = system.dof
    kind, params = system.potential.kernel_args()
    scale = cfg.proposal_scale if cfg.proposal_scale is not None else 1.0 / math.sqrt(b)
    step = np.full(d, scale)
    q0 = np.full(d, float(system.potential.minima()[0]))
    qt0 = np.zeros(d)
    rng = np.random.default_rng(cfg.seed)
    normals = rng.standard_normal((cfg.n_samples, 2 * d))
    uniforms = rng.random(cfg.n_samples)
    qs, qts, n_acc = _kernels.metropolis_chain(
        kind, params, b, q0, qt0, step, step, normals, uniforms,
        cfg.burn_in, cfg.thinning)
    rate = n_acc / cfg.n_samples
    if not 0.05 <= rate <= 0.95:
        warnings.warn(
            f"Metropolis acceptance rate {rate:.3f} is outside [0.05, 0.95]; "
            "adjust proposal_scale", TuningWarning)
    return CanonicalSamples(qs=qs, qtildes=qts, acceptance_rate=rate, beta=b)


def _eval_samples(q_obs: Observable, qts: np.ndarray, qs: np.ndarray,
                  system: SystemSpec) -> np.ndarray:
    """Vectorized observable evaluation on sample arrays (K, d)."""
    kind = q_obs.kind
    if kind == "energy":
        return (0.5 * np.sum(qts * qts, axis=1)
                + np.sum(system.potential.value(qs), axis=1))
    if kind == "kinetic":
        return 0.5 * np.sum(qts * qts, axis=1)
    if kind == "potential":
        return np.sum(system.potential.value(qs), axis=1)
    if kind == "coordinate":
        return qs[:, q_obs.index].copy()
    if kind == "velocity":
        return qts[:, q_obs.index].copy()
    if kind == "monomial":
        out = np.ones(qs.shape[0])
        for i, p in enumerate(q_obs.q_powers):
            if p:
                out *= qs[:, i] ** p
        for i, p in enumerate(q_obs.qt_powers):
            if p:
                out *= qts[:, i] ** p
        return out
    if kind == "lagrangian":
        return -(0.5 * np.sum(qts * qts, axis=1)
                 + np.sum(system.potential.value(qs), axis=1))
    return np.array([float(q_obs.fn(qts[i], qs[i]))
                     for i in range(qs.shape[0])])


def _avg_quadrature_1d(system: SystemSpec, q_obs: Observable, beta: float,
                       rel_tol: float) -> tuple[float, float]:
    """<Q> on a GH (velocity) x Simpson (position) tensor grid, refining the
    position panels until the average stabilizes."""
    pot = system.potential
    lo, hi = _position_span(system, beta)
    u, w = gauss_hermite(GH_ORDER)
    v = u * math.sqrt(2.0 / beta)  # velocity nodes; weights w absorb the Gaussian
    prev = None
    for level in range(6, 22):
        x, s = simpson_nodes(lo, hi, level)
        bolt = np.exp(-beta * pot.value(x))
        vv, xx = np.meshgrid(v, x, indexing="ij")
        qvals = _eval_samples(q_obs, vv.reshape(-1, 1), xx.reshape(-1, 1),
                              system).reshape(vv.shape)
        num = float(w @ qvals @ (s * bolt))
        den = float(np.sum(w) * np.dot(s, bolt))
        avg = num / den
        if prev is not None and abs(avg - prev) <= rel_tol * (1.0 + abs(avg)):
            return avg, abs(avg - prev)
        prev = avg
    raise UnsupportedError("quadrature average did not stabilize")


def _moment_1d(system: SystemSpec, beta: float, q_power: int, qt_power: int,
               rel_tol: float) -> float:
    """<q^a qtilde^b> for one coordinate (independent factors)."""
    pot = system.potential
    if qt_power % 2 == 1:
        m_qt = 0.0
    else:
        u, w = gauss_hermite(GH_ORDER)
        v = u * math.sqrt(2.0 / beta)
        m_qt = float(np.dot(w, v ** qt_power) / np.sum(w))
    if q_power == 0:
        m_q = 1.0
    else:
        lo, hi = _position_span(system, beta)
        num, _ = simpson_doubling(
            lambda q: q ** q_power * np.exp(-beta * pot.value(q)), lo, hi, rel_tol)
        den, _ = simpson_doubling(
            lambda q: np.exp(-beta * pot.value(q)), lo, hi, rel_tol)
        m_q = num / den
    return m_q * m_qt


def _avg_quadrature(system: SystemSpec, q_obs: Observable, beta: float,
                    rel_tol: float) -> tuple[float, float]:
    d = system.dof
    if d == 1:
        return _avg_quadrature_1d(system, q_obs, beta, rel_tol)
    # separable coordinates: builtin observables factorize into 1-D moments
    kind = q_obs.kind
    if kind in ("energy", "kinetic", "potential", "lagrangian"):
        kin = 0.5 * _moment_1d(system, beta, 0, 2, rel_tol)
        lo, hi = _position_span(system, beta)
        pot = system.potential
        num, _ = simpson_doubling(
            lambda q: pot.value(q) * np.exp(-beta * pot.value(q)), lo, hi, rel_tol)
        den, _ = simpson_doubling(
            lambda q: np.exp(-beta * pot.value(q)), lo, hi, rel_tol)
        vbar = num / den
        if kind == "kinetic":
            return d * kin, rel_tol * d * kin
        if kind == "potential":
            return d * vbar, rel_tol * d * vbar
        total = d * (kin + vbar)
        return (total, rel_tol * abs(total)) if kind == "energy" \
            else (-total, rel_tol * abs(total))
    if kind == "coordinate":
        val = _moment_1d(system, beta, 1, 0, rel_tol)
        return val, rel_tol * (1.0 + abs(val))
    if kind == "velocity":
        return 0.0, 0.0
    if kind == "monomial":
        out = 1.0
        powers_q = list(q_obs.q_powers) + [0] * (d - len(q_obs.q_powers))
        powers_qt = list(q_obs.qt_powers) + [0] * (d - len(q_obs.qt_powers))
        for a, b_pow in zip(powers_q, powers_qt):
            out *= _moment_1d(system, beta, a, b_pow, rel_tol)
        return out, rel_tol * (1.0 + abs(out))
    raise UnsupportedError(
        "custom observables at d > 1 need the metropolis method")


def ensemble_average(system: SystemSpec, q_obs: Observable, beta,
                     method: str = "quadrature", budget: int = 100_000,
                     cfg: ChainConfig | None = None, seed: int | None = None,
                     rel_tol: float = 1e-9) -> EnsembleEstimate:
    """<Q> under rho ~ exp(beta L), with a numerical or statistical error."""
    b = _beta_value(beta)
    _require_confining(system)
    if method == "quadrature":
        val, err = _avg_quadrature(system, q_obs, b, rel_tol)
        return EnsembleEstimate(value=val, error=err, method=method)
    if method == "metropolis":
        if cfg is None:
            if seed is None:
                raise PreconditionError("metropolis requires a seed or a ChainConfig")
            cfg = ChainConfig(n_samples=budget,
                              burn_in=min(budget // 10, 5000), seed=seed)
        samples = sample_canonical(system, b, cfg)
        vals = _eval_samples(q_obs, samples.qtildes, samples.qs, system)
        return EnsembleEstimate(value=float(vals.mean()),
                                error=_batch_means_stderr(vals),
                                method=method)
    raise PreconditionError("method must be 'quadrature' or 'metropolis'")


def _batch_means_stderr(vals: np.ndarray) -> float:
    """Standard error of the mean of a correlated series via batch means."""
    k = len(vals)
    if k < 8:
        return float(np.std(vals, ddof=1) / math.sqrt(max(k, 2)))
    nb = max(4, int(math.sqrt(k)))
    size = k // nb
    means = vals[:nb * size].reshape(nb, size).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(nb))


def thermodynamics(system: SystemSpec, beta, dbeta: float | None = None,
                   method: str = "quadrature", budget: int = 100_000,
                   seed: int | None = None, n_streams: int = 4,
                   rel_tol: float = 1e-10) -> ThermoResult:
    """Full canonical summary: U = -d ln Z/d beta (central difference),
    F = -kB T ln Z, S = (U - F)/T."""
    b = _beta_value(beta)
    if dbeta is None:
        dbeta = 1e-3 * b
    if not (math.isfinite(dbeta) and dbeta > 0):
        raise PreconditionError("dbeta must be positive")
    if b - dbeta <= 0:
        raise PreconditionError("beta - dbeta must stay positive")
    seeds = {"0": seed, "+": None, "-": None}
    if seed is not None:
        seeds = {"0": [seed, 20], "+": [seed, 21], "-": [seed, 22]}
    z0 = partition_function(system, b, method=method, budget=budget,
                            seed=seeds["0"], n_streams=n_streams, rel_tol=rel_tol)
    z_hi = partition_function(system, b + dbeta, method=method, budget=budget,
                              seed=seeds["+"], n_streams=n_streams, rel_tol=rel_tol)
    z_lo = partition_function(system, b - dbeta, method=method, budget=budget,
                              seed=seeds["-"], n_streams=n_streams, rel_tol=rel_tol)
    u = -(math.log(z_hi.Z) - math.log(z_lo.Z)) / (2.0 * dbeta)
    kB = system.units.kB
    t = 1.0 / (kB * b)
    f = -kB * t * math.log(z0.Z)
    s = (u - f) / t
    return ThermoResult(beta=b, method=method, Z=z0.Z, U=u, F=f, S=s, T=t,
                        stderr=z0.stderr)


def hamiltonian_equivalence(system: SystemSpec, beta,
                            method: str = "quadrature", budget: int = 100_000,
                            seed: int | None = None, n_streams: int = 4,
                            rel_tol: float = 1e-10) -> EquivalenceResult:
    """Z on the tangent bundle (weight e^{beta L}) versus Z on phase space
    (weight e^{-beta H}), computed with identical numerical settings.

    With unit mass the two integrands coincide under qtilde <-> p, so the
    ratio measures nothing but numerical discrepancy.
    """
    b = _beta_value(beta)
    _require_confining(system)
    d = system.dof

    def lagrangian_weight(v, q):
        # exp(beta L + beta v^2/2): the Gaussian kinetic part is handled
        # analytically, this is the position-dependent remainder
        kin = 0.5 * v * v
        energy = kin + system.potential.value(q)
        return np.exp(-b * energy + b * kin)

    def hamiltonian_weight(p, q):
        kin = 0.5 * p * p
        ham = kin + system.potential.value(q)
        return np.exp(-b * ham + b * kin)

    if method == "quadrature":
        if d > 2:
            raise UnsupportedError("quadrature supports d <= 2")
        z_l = _z_tensor(system, b, lagrangian_weight, rel_tol) ** d
        z_h = _z_tensor(system, b, hamiltonian_weight, rel_tol) ** d
    elif method == "importance-mc":
        if seed is None:
            raise PreconditionError("importance-mc requires an explicit seed")

        def pot_lagrangian(q):
            # E(qtilde=0, q) through the Lagrangian energy expression
            return 0.5 * np.sum(np.zeros_like(q) ** 2, axis=1) \
                + np.sum(system.potential.value(q), axis=1)

        def pot_hamiltonian(q):
            return 0.5 * np.sum(np.zeros_like(q) ** 2, axis=1) \
                + np.sum(system.potential.value(q), axis=1)

        z_l, _ = _importance_z(system, b, budget, seed, n_streams, pot_lagrangian)
        z_h, _ = _importance_z(system, b, budget, seed, n_streams, pot_hamiltonian)
    else:
        raise PreconditionError("method must be 'quadrature' or 'importance-mc'")
    return EquivalenceResult(beta=b, z_lagrangian=z_l, z_hamiltonian=z_h,
                             ratio=z_l / z_h, method=method)


def _z_tensor(system: SystemSpec, beta: float, weight_fn, rel_tol: float) -> float:
    """One-coordinate Z on the GH x Simpson tensor with an explicit
    (Gaussian-compensated) weight function."""
    lo, hi = _position_span(system, beta)
    u, w = gauss_hermite(GH_ORDER)
    v = u * math.sqrt(2.0 / beta)
    prev = None
    for level in range(6, 22):
        x, s = simpson_nodes(lo, hi, level)
        vv, xx = np.meshgrid(v, x, indexing="ij")
        total = float(w @ weight_fn(vv, xx) @ s) * math.sqrt(2.0 / beta)
        z1 = total / system.units.h
        if prev is not None and abs(z1 - prev) <= rel_tol * abs(z1):
            return z1
        prev = z1
    raise UnsupportedError("tensor quadrature did not stabilize")
