"""Mechanical systems on the tangent bundle.

States are pairs (qtilde, q) where qtilde = dq/dtau is the imaginary-time
velocity. With unit mass the total energy of a state is
E = sum(qtilde**2)/2 + V(q), and the imaginary-time Lagrangian is L = -E.
The harmonic potential is V(q) = omega**2 q**2 / 2 throughout (the 1/2
normalization is what reproduces the closed-form oscillator thermodynamics).

Potentials act per coordinate (separable sums); mass is fixed at 1.
All values here are immutable after construction and safe to share
between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .errors import DomainError, NumericalError, PreconditionError


@dataclass(frozen=True)
class UnitsConfig:
    """Physical constants; the Planck cell h is always derived as 2*pi*hbar."""

    hbar: float = 1.0
    kB: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.hbar) and self.hbar > 0):
            raise PreconditionError("hbar must be positive and finite")
        if not (math.isfinite(self.kB) and self.kB > 0):
            raise PreconditionError("kB must be positive and finite")

    @property
    def h(self) -> float:
        return 2.0 * math.pi * self.hbar


@dataclass(frozen=True)
class PotentialSpec:
    """One-dimensional potential applied independently to every coordinate.

    kinds:
        harmonic     V(q) = omega**2 q**2 / 2,    omega > 0
        polynomial   V(q) = sum_k coeffs[k] q**k  (ascending powers)
        double_well  V(q) = (q**2 - a**2)**2 / 4, a > 0
    """

    kind: str
    omega: float | None = None
    coeffs: tuple[float, ...] | None = None
    a: float | None = None

    def __post_init__(self):
        if self.kind == "harmonic":
            if self.omega is None or not (math.isfinite(self.omega) and self.omega > 0):
                raise PreconditionError("harmonic potential requires omega > 0")
        elif self.kind == "polynomial":
            if not self.coeffs:
                raise PreconditionError("polynomial potential requires coefficients")
            cs = tuple(float(c) for c in self.coeffs)
            if not all(math.isfinite(c) for c in cs):
                raise PreconditionError("polynomial coefficients must be finite")
            object.__setattr__(self, "coeffs", cs)
        elif self.kind == "double_well":
            if self.a is None or not (math.isfinite(self.a) and self.a > 0):
                raise PreconditionError("double well requires a > 0")
        else:
            raise PreconditionError(f"unknown potential kind {self.kind!r}")

    @classmethod
    def harmonic(cls, omega: float = 1.0) -> "PotentialSpec":
        return cls(kind="harmonic", omega=float(omega))

    @classmethod
    def polynomial(cls, coeffs) -> "PotentialSpec":
        return cls(kind="polynomial", coeffs=tuple(float(c) for c in coeffs))

    @classmethod
    def double_well(cls, a: float = 1.0) -> "PotentialSpec":
        return cls(kind="double_well", a=float(a))

    # -- elementwise evaluation (arrays in, arrays out) --------------------

    def value(self, q):
        q = np.asarray(q, dtype=float)
        return _kernels._fallback._value(self._kind_id(), self._params(), q)

    def derivative(self, q):
        q = np.asarray(q, dtype=float)
        return _kernels._fallback._grad(self._kind_id(), self._params(), q)

    def second_derivative(self, q):
        q = np.asarray(q, dtype=float)
        return _kernels._fallback._hess(self._kind_id(), self._params(), q)

    # -- structure ---------------------------------------------------------

    def _kind_id(self) -> int:
        return {"harmonic": _kernels.KIND_HARMONIC,
                "polynomial": _kernels.KIND_POLYNOMIAL,
                "double_well": _kernels.KIND_DOUBLE_WELL}[self.kind]

    def _params(self) -> np.ndarray:
        if self.kind == "harmonic":
            return np.array([self.omega])
        if self.kind == "polynomial":
            return np.array(self.coeffs)
        return np.array([self.a])

    def kernel_args(self) -> tuple[int, np.ndarray]:
        """(kind id, parameter vector) consumed by the flow kernels."""
        return self._kind_id(), self._params()

    def poly_coeffs(self) -> np.ndarray:
        """Ascending-power polynomial coefficients of V (exact for all kinds)."""
        if self.kind == "harmonic":
            return np.array([0.0, 0.0, 0.5 * self.omega**2])
        if self.kind == "polynomial":
            return np.array(self.coeffs)
        a2 = self.a**2
        return np.array([0.25 * a2 * a2, 0.0, -0.5 * a2, 0.0, 0.25])

    def is_confining(self) -> bool:
        """True when V grows without bound in both directions."""
        if self.kind in ("harmonic", "double_well"):
            return True
        c = self.poly_coeffs()
        nz = np.nonzero(c)[0]
        if len(nz) == 0:
            return False
        lead = nz[-1]
        return lead >= 2 and lead % 2 == 0 and c[lead] > 0

    def minima(self) -> np.ndarray:
        """Locations of the global minima of V (one entry for unique minima)."""
        if self.kind == "harmonic":
            return np.array([0.0])
        if self.kind == "double_well":
            return np.array([-self.a, self.a])
        dcoeffs = np.polynomial.polynomial.polyder(self.poly_coeffs())
        if not np.any(dcoeffs):
            return np.array([0.0])
        roots = np.polynomial.polynomial.polyroots(dcoeffs)
        real = np.sort(np.unique(roots[np.abs(roots.imag) < 1e-9].real))
        if len(real) == 0:
            return np.array([0.0])
        vals = self.value(real)
        vmin = vals.min()
        return real[vals <= vmin + 1e-12 * max(1.0, abs(vmin))]

    def min_value(self) -> float:
        """Global minimum of V over one coordinate."""
        return float(self.value(self.minima()).min())


@dataclass(frozen=True)
class SystemSpec:
    """A mechanical system: d identical separable coordinates plus constants.

    ``volume`` and ``n_particles`` are inert bookkeeping; they carry no
    dynamics in this setting.
    """

    dof: int
    potential: PotentialSpec
    units: UnitsConfig = field(default_factory=UnitsConfig)
    label: str = ""
    volume: float = 1.0
    n_particles: int = 1

    def __post_init__(self):
        if not isinstance(self.dof, int) or self.dof < 1:
            raise PreconditionError("dof must be a positive integer")

    def min_energy(self) -> float:
        """Lowest attainable total energy (zero velocity, potential minima)."""
        return self.dof * self.potential.min_value()


def _as_vector(x, d: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != d:
        raise DomainError(f"{name} must be a length-{d} vector")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class TangentPoint:
    """A microstate: position q and imaginary-time velocity qtilde = dq/dtau."""

    q: np.ndarray
    qtilde: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        qt = np.array(self.qtilde, dtype=float).reshape(-1)
        if q.shape != qt.shape:
            raise DomainError("q and qtilde must have the same length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qt))):
            raise DomainError("tangent point coordinates must be finite")
        q.flags.writeable = False
        qt.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qtilde", qt)

    @property
    def d(self) -> int:
        return self.q.shape[0]


def potential_eval(spec: PotentialSpec, q) -> float:
    """Total potential energy sum_i V(q_i)."""
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise DomainError("position must be finite")
    return float(np.sum(spec.value(q)))


def potential_grad(spec: PotentialSpec, q) -> np.ndarray:
    """Analytic gradient of the total potential, component-wise."""
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise DomainError("position must be finite")
    return spec.derivative(q)


def lagrangian_eval(system: SystemSpec, x: TangentPoint) -> tuple[float, float]:
    """(L, E) at a tangent point: E = sum(qtilde**2)/2 + V(q) and L = -E."""
    q = _as_vector(x.q, system.dof, "q")
    qt = _as_vector(x.qtilde, system.dof, "qtilde")
    energy = float(0.5 * np.sum(qt * qt) + np.sum(system.potential.value(q)))
    return -energy, energy


def hamiltonian_eval(system: SystemSpec, p, q) -> float:
    """Reference H(p, q) = sum(p**2)/2 + V(q) on phase space."""
    p = _as_vector(p, system.dof, "p")
    q = _as_vector(q, system.dof, "q")
    return float(0.5 * np.sum(p * p) + np.sum(system.potential.value(q)))


@dataclass(frozen=True)
class Observable:
    """A scalar function Q(qtilde, q) on the tangent bundle.

    Builtin kinds carry analytic partial derivatives; ``custom`` wraps an
    arbitrary callable ``fn(qtilde, q) -> float`` and differentiates it by
    central differences with step ``fd_step * max(1, |coord|)``.
    """

    kind: str
    index: int = 0
    q_powers: tuple[int, ...] = ()
    qt_powers: tuple[int, ...] = ()
    fn: Callable[[np.ndarray, np.ndarray], float] | None = None
    label: str = ""
    fd_step: float = 1e-5

    _KINDS = ("energy", "kinetic", "potential", "coordinate", "velocity",
              "monomial", "lagrangian", "custom")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise PreconditionError(f"unknown observable kind {self.kind!r}")
        if self.kind == "custom" and self.fn is None:
            raise PreconditionError("custom observable requires a callable")
        if any(p < 0 for p in self.q_powers) or any(p < 0 for p in self.qt_powers):
            raise PreconditionError("monomial powers must be nonnegative integers")

    @classmethod
    def energy(cls):
        return cls(kind="energy", label="E")

    @classmethod
    def kinetic(cls):
        return cls(kind="kinetic", label="K")

    @classmethod
    def potential(cls):
        return cls(kind="potential", label="V")

    @classmethod
    def coordinate(cls, i: int = 0):
        return cls(kind="coordinate", index=i, label=f"q[{i}]")

    @classmethod
    def velocity(cls, i: int = 0):
        return cls(kind="velocity", index=i, label=f"qtilde[{i}]")

    @classmethod
    def monomial(cls, q_powers=(), qt_powers=()):
        return cls(kind="monomial", q_powers=tuple(int(p) for p in q_powers),
                   qt_powers=tuple(int(p) for p in qt_powers), label="monomial")

    @classmethod
    def constant(cls):
        """The constant observable 1 (a monomial with no factors)."""
        return cls(kind="monomial", label="1")

    @classmethod
    def lagrangian(cls):
        return cls(kind="lagrangian", label="L")

    @classmethod
    def custom(cls, fn, label: str = "custom", fd_step: float = 1e-5):
        return cls(kind="custom", fn=fn, label=label, fd_step=fd_step)

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, x: TangentPoint, system: SystemSpec) -> float:
        q, qt = x.q, x.qtilde
        if self.kind == "energy":
            return lagrangian_eval(system, x)[1]
        if self.kind == "kinetic":
            return float(0.5 * np.sum(qt * qt))
        if self.kind == "potential":
            return potential_eval(system.potential, q)
        if self.kind == "coordinate":
            return float(q[self.index])
        if self.kind == "velocity":
            return float(qt[self.index])
        if self.kind == "monomial":
            return self._monomial_value(qt, q)
        if self.kind == "lagrangian":
            return lagrangian_eval(system, x)[0]
        return float(self.fn(qt, q))

    def _monomial_value(self, qt, q) -> float:
        out = 1.0
        for i, p in enumerate(self.q_powers):
            out *= float(q[i]) ** p
        for i, p in enumerate(self.qt_powers):
            out *= float(qt[i]) ** p
        return out

    def partials(self, x: TangentPoint, system: SystemSpec) -> tuple[np.ndarray, np.ndarray]:
        """(dQ/dqtilde, dQ/dq), each a length-d vector."""
        d = x.d
        q, qt = x.q, x.qtilde
        dqt = np.zeros(d)
        dq = np.zeros(d)
        if self.kind == "energy":
            dqt[:] = qt
            dq[:] = system.potential.derivative(q)
        elif self.kind == "kinetic":
            dqt[:] = qt
        elif self.kind == "potential":
            dq[:] = system.potential.derivative(q)
        elif self.kind == "coordinate":
            dq[self.index] = 1.0
        elif self.kind == "velocity":
            dqt[self.index] = 1.0
        elif self.kind == "monomial":
            base = self._monomial_value(qt, q)
            for i, p in enumerate(self.q_powers):
                if p > 0:
                    rest = base / float(q[i]) ** p if q[i] != 0.0 else self._monomial_drop(qt, q, ("q", i))
                    dq[i] = p * float(q[i]) ** (p - 1) * rest
            for i, p in enumerate(self.qt_powers):
                if p > 0:
                    rest = base / float(qt[i]) ** p if qt[i] != 0.0 else self._monomial_drop(qt, q, ("qt", i))
                    dqt[i] = p * float(qt[i]) ** (p - 1) * rest
        elif self.kind == "lagrangian":
            dqt[:] = -qt
            dq[:] = -system.potential.derivative(q)
        else:
            self._fd_partials(qt, q, dqt, dq)
        return dqt, dq

    def _monomial_drop(self, qt, q, skip) -> float:
        out = 1.0
        for i, p in enumerate(self.q_powers):
            if skip != ("q", i):
                out *= float(q[i]) ** p
        for i, p in enumerate(self.qt_powers):
            if skip != ("qt", i):
                out *= float(qt[i]) ** p
        return out

    def _fd_partials(self, qt, q, dqt, dq):
        d = len(q)
        qtm = qt.copy()
        qm = q.copy()
        for i in range(d):
            h = self.fd_step * max(1.0, abs(qm[i]))
            qm[i] = q[i] + h
            f_plus = float(self.fn(qt, qm))
            qm[i] = q[i] - h
            f_minus = float(self.fn(qt, qm))
            qm[i] = q[i]
            dq[i] = (f_plus - f_minus) / (2.0 * h)
        for i in range(d):
            h = self.fd_step * max(1.0, abs(qtm[i]))
            qtm[i] = qt[i] + h
            f_plus = float(self.fn(qtm, q))
            qtm[i] = qt[i] - h
            f_minus = float(self.fn(qtm, q))
            qtm[i] = qt[i]
            dqt[i] = (f_plus - f_minus) / (2.0 * h)


def lagrange_bracket(a: Observable, b: Observable, x: TangentPoint,
                     system: SystemSpec) -> float:
    """{A, B} = sum_i dA/dqtilde_i dB/dq_i - dA/dq_i dB/dqtilde_i.

    Antisymmetric by construction; with B = L it generates the
    imaginary-time dynamics ({q_i, L} = qtilde_i, {qtilde_i, L} = -dV/dq_i).
    """
    a_qt, a_q = a.partials(x, system)
    b_qt, b_q = b.partials(x, system)
    val = float(np.sum(a_qt * b_q - a_q * b_qt))
    if not math.isfinite(val):
        raise NumericalError(
            f"non-finite bracket partials for {a.label or a.kind!r}, "
            f"{b.label or b.kind!r} at q={x.q.tolist()}, qtilde={x.qtilde.tolist()}"
        )
    return val
