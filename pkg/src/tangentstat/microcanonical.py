"""Microcanonical ensemble on the tangent bundle.

The microstate count below energy U is Omega(U) = (1/h^d) * vol{E(x) <= U}
with the volume taken over (qtilde, q) in R^(2d); the shell density
Sigma(U) = dOmega/dU is realized as a finite central energy window; entropy
is S = kB ln Omega and temperature comes from a central difference of S.

Deterministic methods: ``analytic`` (harmonic only), ``quadrature``
(d <= 2; the velocity integral is reduced exactly to a ball volume and the
remaining position integrals are done with edge-regularized Simpson panels).
Stochastic method: ``hit-or-miss`` over a padded bounding box, any d, with
binomial standard errors and seeded, stream-split, bit-reproducible counts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._quadrature import edge_regularized_integral, region_below
from .errors import (CoarseWindowWarning, EmptyShellError, NumericalError,
                     NonphysicalTemperatureError, PreconditionError,
                     UndefinedEntropyError, UnsupportedError)
from .model import SystemSpec

METHODS = ("analytic", "quadrature", "hit-or-miss")


@dataclass(frozen=True)
class MicroResult:
    """Output record; fields not computed by an operation are None."""

    U: float
    method: str
    omega: float | None = None
    sigma: float | None = None
    S: float | None = None
    T: float | None = None
    stderr: float = 0.0
    kB: float = 1.0


@dataclass(frozen=True)
class IntegrationDomain:
    """Per-coordinate box bounds containing the energy region {E <= U}."""

    qt_half: float
    q_lo: float
    q_hi: float
    dof: int

    @classmethod
    def for_energy(cls, system: SystemSpec, u_max: float, pad: float = 0.1,
                   check: bool = True) -> "IntegrationDomain":
        pot = system.potential
        vmin = pot.min_value()
        rest = (system.dof - 1) * vmin
        kin_room = u_max - system.min_energy()
        if kin_room < 0:
            raise EmptyShellError(f"U={u_max} lies below the energy minimum")
        qt_half = math.sqrt(2.0 * kin_room) * (1.0 + pad)
        intervals = region_below(pot, u_max - rest)
        if not intervals:
            raise EmptyShellError(f"U={u_max} lies below the energy minimum")
        lo, hi = intervals[0][0], intervals[-1][1]
        center, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        half *= 1.0 + pad
        dom = cls(qt_half=qt_half, q_lo=center - half, q_hi=center + half,
                  dof=system.dof)
        if check:
            dom._verify_contains_shell(system, u_max)
        return dom

    def volume(self) -> float:
        return ((2.0 * self.qt_half) ** self.dof
                * (self.q_hi - self.q_lo) ** self.dof)

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Uniform points in the box: (qtilde, q) arrays of shape (n, d)."""
        d = self.dof
        qt = rng.uniform(-self.qt_half, self.qt_half, size=(n, d))
        q = rng.uniform(self.q_lo, self.q_hi, size=(n, d))
        return qt, q

    def _verify_contains_shell(self, system: SystemSpec, u_max: float,
                               n: int = 512):
        """Boundary sampling: every box face must sit at energy > U."""
        if self.qt_half == 0.0:
            return
        rng = np.random.default_rng(0)
        d = self.dof
        qt = rng.uniform(-self.qt_half, self.qt_half, size=(n, d))
        q = rng.uniform(self.q_lo, self.q_hi, size=(n, d))
        e_min = math.inf
        for axis in range(d):
            for face_qt in (-self.qt_half, self.qt_half):
                qt_f = qt.copy()
                qt_f[:, axis] = face_qt
                e = _energies(system, qt_f, q)
                e_min = min(e_min, float(e.min()))
            for face_q in (self.q_lo, self.q_hi):
                q_f = q.copy()
                q_f[:, axis] = face_q
                e = _energies(system, qt, q_f)
                e_min = min(e_min, float(e.min()))
        if e_min <= u_max:
            raise NumericalError(
                f"bounding box fails to contain the U={u_max} shell "
                f"(boundary energy {e_min} <= U)")


def _energies(system: SystemSpec, qt: np.ndarray, q: np.ndarray) -> np.ndarray:
    return (0.5 * np.sum(qt * qt, axis=1)
            + np.sum(system.potential.value(q), axis=1))


def _require_confining(system: SystemSpec):
    if not system.potential.is_confining():
        raise UnsupportedError(
            "ensemble integrals need a confining potential "
            "(even leading power with positive coefficient)")


def _measure_below_1d(system: SystemSpec, u: float, rel_tol: float) -> float:
    """vol{qtilde^2/2 + V(q) <= u} = integral 2 sqrt(2 (u - V(q))) dq."""
    pot = system.potential
    total = 0.0
    for lo, hi in region_below(pot, u):
        def f(q):
            return np.sqrt(np.maximum(u - pot.value(q), 0.0))
        val, _ = edge_regularized_integral(f, lo, hi, rel_tol)
        total += val
    return 2.0 * math.sqrt(2.0) * total


def _sublevel_linear_moment(pot, u: float) -> float:
    """integral (u - V(q))_+ dq, exact via the antiderivative of V."""
    if u <= pot.min_value():
        return 0.0
    coeffs = pot.poly_coeffs()
    anti = np.polynomial.polynomial.polyint(coeffs)
    total = 0.0
    for lo, hi in region_below(pot, u):
        p_hi = np.polynomial.polynomial.polyval(hi, anti)
        p_lo = np.polynomial.polynomial.polyval(lo, anti)
        total += u * (hi - lo) - (p_hi - p_lo)
    return float(total)


def _measure_below_2d(system: SystemSpec, u: float, rel_tol: float) -> float:
    """vol{E <= u} in 4 dims = 2 pi * integral G(u - V(q1)) dq1 with
    G(w) = integral (w - V(q2))_+ dq2 (computed exactly per interval)."""
    pot = system.potential
    vmin = pot.min_value()
    total = 0.0
    for lo, hi in region_below(pot, u - vmin):
        def f(q1):
            q1 = np.atleast_1d(q1)
            vals = pot.value(q1)
            return np.array([_sublevel_linear_moment(pot, u - v) for v in vals])
        val, _ = edge_regularized_integral(f, lo, hi, rel_tol)
        total += val
    return 2.0 * math.pi * total


def _omega_analytic(system: SystemSpec, u_excess: float) -> float:
    if system.potential.kind != "harmonic":
        raise UnsupportedError("analytic microstate counts exist for the "
                               "harmonic potential only")
    d = system.dof
    hbar_omega = system.units.hbar * system.potential.omega
    return (u_excess / hbar_omega) ** d / math.factorial(d)


def _count_streams(system: SystemSpec, u_lo: float | None, u_hi: float,
                   budget: int, seed: int, n_streams: int,
                   domain: IntegrationDomain) -> tuple[int, int, int]:
    """Counts of E <= u_hi and (optionally) u_lo < E <= u_hi, summed in
    fixed stream order; reproducible for a given (seed, budget, n_streams)."""
    per = budget // n_streams
    sizes = [per + (1 if k < budget - per * n_streams else 0)
             for k in range(n_streams)]
    below = 0
    window = 0
    total = 0
    for k, size in enumerate(sizes):
        if size == 0:
            continue
        rng = np.random.default_rng([seed, k])
        qt, q = domain.sample(rng, size)
        e = _energies(system, qt, q)
        below += int(np.count_nonzero(e <= u_hi))
        if u_lo is not None:
            window += int(np.count_nonzero((e > u_lo) & (e <= u_hi)))
        total += size
    return below, window, total


def _check_method(method: str):
    if method not in METHODS:
        raise PreconditionError(f"method must be one of {METHODS}")


def _check_seed(method: str, seed):
    if method == "hit-or-miss" and seed is None:
        raise PreconditionError("hit-or-miss requires an explicit seed")


def volume_below(system: SystemSpec, U: float, method: str = "quadrature",
                 budget: int = 100_000, seed: int | None = None,
                 n_streams: int = 4, rel_tol: float = 1e-10) -> MicroResult:
    """Microstate count Omega(U) = (1/h^d) vol{E <= U}."""
    _check_method(method)
    _check_seed(method, seed)
    _require_confining(system)
    e_min = system.min_energy()
    if not math.isfinite(U) or U < e_min:
        raise EmptyShellError(f"U={U} lies below the energy minimum {e_min}")
    d = system.dof
    h_d = system.units.h ** d
    kB = system.units.kB
    if method == "analytic":
        omega = _omega_analytic(system, U - e_min)
        return MicroResult(U=U, method=method, omega=omega, kB=kB)
    if method == "quadrature":
        if d > 2:
            raise UnsupportedError("quadrature microstate counts support d <= 2")
        if U == e_min:
            measure = 0.0
        elif d == 1:
            measure = _measure_below_1d(system, U, rel_tol)
        else:
            measure = _measure_below_2d(system, U, rel_tol)
        return MicroResult(U=U, method=method, omega=measure / h_d, kB=kB)
    if U == e_min:
        return MicroResult(U=U, method=method, omega=0.0, kB=kB)
    domain = IntegrationDomain.for_energy(system, U)
    below, _, total = _count_streams(system, None, U, budget, seed,
                                     n_streams, domain)
    p = below / total
    vol = domain.volume()
    omega = vol * p / h_d
    stderr = vol * math.sqrt(max(p * (1.0 - p), 0.0) / total) / h_d
    return MicroResult(U=U, method=method, omega=omega, stderr=stderr, kB=kB)


def shell_density(system: SystemSpec, U: float, epsilon: float = 1e-3,
                  method: str = "quadrature", budget: int = 100_000,
                  seed: int | None = None, n_streams: int = 4,
                  rel_tol: float = 1e-10) -> MicroResult:
    """Shell density Sigma(U) ~ [Omega(U + eps/2) - Omega(U - eps/2)] / eps."""
    _check_method(method)
    _check_seed(method, seed)
    _require_confining(system)
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise PreconditionError("epsilon must be positive")
    e_min = system.min_energy()
    if U <= e_min:
        raise EmptyShellError(f"U={U} must exceed the energy minimum {e_min}")
    u_lo = max(U - 0.5 * epsilon, e_min)
    u_hi = U + 0.5 * epsilon
    width = u_hi - u_lo
    kB = system.units.kB
    if method == "hit-or-miss":
        domain = IntegrationDomain.for_energy(system, u_hi)
        below, window, total = _count_streams(system, u_lo, u_hi, budget,
                                              seed, n_streams, domain)
        vol = domain.volume()
        h_d = system.units.h ** system.dof
        pw = window / total
        sigma = vol * pw / (width * h_d)
        stderr = vol * math.sqrt(max(pw * (1.0 - pw), 0.0) / total) / (width * h_d)
        omega = vol * (below / total) / h_d
    else:
        hi = volume_below(system, u_hi, method=method, rel_tol=rel_tol)
        lo = volume_below(system, u_lo, method=method, rel_tol=rel_tol)
        sigma = (hi.omega - lo.omega) / width
        stderr = 0.0
        omega = volume_below(system, U, method=method, rel_tol=rel_tol).omega
    if omega > 0 and epsilon * sigma / omega > 0.1:
        warnings.warn(
            f"energy window epsilon={epsilon} is coarse: eps*Sigma/Omega = "
            f"{epsilon * sigma / omega:.3g} > 0.1", CoarseWindowWarning)
    return MicroResult(U=U, method=method, sigma=sigma, omega=omega,
                       stderr=stderr, kB=kB)


def entropy_micro(system: SystemSpec, U: float, method: str = "quadrature",
                  budget: int = 100_000, seed: int | None = None,
                  n_streams: int = 4, rel_tol: float = 1e-10) -> MicroResult:
    """Boltzmann entropy S = kB ln Omega(U)."""
    res = volume_below(system, U, method=method, budget=budget, seed=seed,
                       n_streams=n_streams, rel_tol=rel_tol)
    if res.omega is None or res.omega <= 0.0:
        raise UndefinedEntropyError(f"Omega(U={U}) = {res.omega}; entropy undefined")
    kB = system.units.kB
    s = kB * math.log(res.omega)
    stderr = kB * res.stderr / res.omega
    return MicroResult(U=U, method=method, omega=res.omega, S=s,
                       stderr=stderr, kB=kB)


def temperature_micro(system: SystemSpec, U: float, dU: float = 1e-4,
                      method: str = "quadrature", budget: int = 100_000,
                      seed: int | None = None, n_streams: int = 4,
                      rel_tol: float = 1e-10) -> MicroResult:
    """Microcanonical temperature 1/T = dS/dU by central difference.

    For hit-or-miss the two window counts share one sample stream (common
    random numbers), which makes the counts nested and the derivative
    estimate usable; choose dU large enough that the expected number of
    samples in the [U - dU, U + dU] shell is well above 1.
    """
    if not (math.isfinite(dU) and dU > 0):
        raise PreconditionError("dU must be positive")
    e_min = system.min_energy()
    if U - dU <= e_min:
        raise PreconditionError(f"U - dU = {U - dU} must exceed the minimum {e_min}")
    kB = system.units.kB
    if method == "hit-or-miss":
        _check_method(method)
        _check_seed(method, seed)
        _require_confining(system)
        domain = IntegrationDomain.for_energy(system, U + dU)
        below_hi, window, total = _count_streams(system, U - dU, U + dU,
                                                 budget, seed, n_streams,
                                                 domain)
        below_lo = below_hi - window
        if below_lo <= 0:
            raise UndefinedEntropyError(
                f"no samples below U - dU = {U - dU}; increase the budget")
        ds_du = kB * (math.log(below_hi) - math.log(below_lo)) / (2.0 * dU)
        if ds_du <= 0.0:
            raise NonphysicalTemperatureError(
                f"dS/dU = {ds_du} at U={U}: no samples landed in the "
                f"+-{dU} window; increase dU or the budget")
        t = 1.0 / ds_du
        # Poisson noise of the window count dominates the difference
        stderr = t * t * kB * math.sqrt(max(window, 1)) / below_lo / (2.0 * dU)
        return MicroResult(U=U, method=method, T=t, stderr=stderr, kB=kB)
    s_hi = entropy_micro(system, U + dU, method=method, budget=budget,
                         seed=None, n_streams=n_streams, rel_tol=rel_tol)
    s_lo = entropy_micro(system, U - dU, method=method, budget=budget,
                         seed=None, n_streams=n_streams, rel_tol=rel_tol)
    ds_du = (s_hi.S - s_lo.S) / (2.0 * dU)
    if not math.isfinite(ds_du) or ds_du <= 0.0:
        raise NonphysicalTemperatureError(
            f"dS/dU = {ds_du} at U={U}; temperature undefined")
    t = 1.0 / ds_du
    stderr = t * t * math.hypot(s_hi.stderr, s_lo.stderr) / (2.0 * dU)
    return MicroResult(U=U, method=method, T=t, stderr=stderr,
                       kB=system.units.kB)


def compose_systems(r1: MicroResult, r2: MicroResult) -> MicroResult:
    """Non-interacting composition: Omega multiplies, entropy adds."""
    if r1.omega is None or r2.omega is None:
        raise PreconditionError("both results must carry a microstate count")
    if r1.kB != r2.kB:
        raise PreconditionError("results use different Boltzmann constants")
    omega = r1.omega * r2.omega
    s = None
    if omega > 0.0:
        s = r1.kB * (math.log(r1.omega) + math.log(r2.omega))
    rel = 0.0
    if r1.omega > 0 and r2.omega > 0:
        rel = math.hypot(r1.stderr / r1.omega, r2.stderr / r2.omega)
    return MicroResult(U=r1.U + r2.U, method="composed", omega=omega, S=s,
                       stderr=omega * rel, kB=r1.kB)
