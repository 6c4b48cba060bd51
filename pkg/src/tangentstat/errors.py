"""Exception and warning types shared across the toolkit."""

from __future__ import annotations

import numpy as np


class TangentStatError(Exception):
    """Base class for all toolkit errors."""


class DomainError(TangentStatError, ValueError):
    """An input lies outside an operation's domain (non-finite, wrong shape)."""


class PreconditionError(TangentStatError, ValueError):
    """A parameter violates a documented precondition."""


class BlowUpError(TangentStatError, ArithmeticError):
    """The flow produced a non-finite state."""

    def __init__(self, tau: float, q, qtilde):
        self.tau = float(tau)
        self.q = np.asarray(q, dtype=float)
        self.qtilde = np.asarray(qtilde, dtype=float)
        super().__init__(
            f"trajectory blew up at tau={tau:.9g}: q={self.q.tolist()}, "
            f"qtilde={self.qtilde.tolist()}"
        )


class NumericalError(TangentStatError, ArithmeticError):
    """A numerical procedure produced non-finite or unusable intermediates."""


class AccuracyError(NumericalError):
    """Quadrature refinement hit its depth limit before converging."""


class EmptyShellError(TangentStatError, ValueError):
    """The requested energy lies below the potential minimum."""


class UnsupportedError(TangentStatError, NotImplementedError):
    """The requested method/system combination is not supported."""


class UndefinedEntropyError(TangentStatError, ValueError):
    """Entropy requested where the microstate count is zero."""


class NonphysicalTemperatureError(TangentStatError, ValueError):
    """The entropy derivative is non-positive."""


class FitError(TangentStatError, ValueError):
    """Too few occupied histogram bins to fit."""


class ConfigError(TangentStatError, ValueError):
    """A configuration document failed strict validation.

    ``code`` is one of ``syntax``, ``unknown-key``, ``out-of-range``,
    ``missing-seed``; ``line`` and ``key`` locate the offending entry
    when known.
    """

    def __init__(self, message: str, code: str, line: int | None = None,
                 key: str | None = None):
        self.code = code
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"[{code}] {message}{suffix}")


class ToolkitWarning(UserWarning):
    """Base class for toolkit warnings."""


class CoarseWindowWarning(ToolkitWarning):
    """The energy window is too coarse relative to the shell volume."""


class TuningWarning(ToolkitWarning):
    """A Monte Carlo chain's acceptance rate is outside [0.05, 0.95]."""


class UnderflowWarning(ToolkitWarning):
    """A Boltzmann weight underflowed to zero."""


class SelfIntersectionWarning(ToolkitWarning):
    """An advected polygon's boundary chords crossed."""
