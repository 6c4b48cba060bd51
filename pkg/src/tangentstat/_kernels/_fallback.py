"""Pure-Python/numpy implementation of the hot kernels.

Semantics are the reference for the compiled backend: every arithmetic
expression here is written in the exact operation order the Cython kernels
use, so the two backends produce bit-identical results (the extension is
compiled with -ffp-contract=off for this reason).

Potential kinds: 0 = harmonic [omega], 1 = polynomial [c0..cm] ascending,
2 = double well [a].
"""

from __future__ import annotations

import math

import numpy as np

KIND_HARMONIC = 0
KIND_POLYNOMIAL = 1
KIND_DOUBLE_WELL = 2


def _grad(kind, params, q):
    """dV/dq, elementwise on an array."""
    if kind == KIND_HARMONIC:
        w2 = params[0] * params[0]
        return w2 * q
    if kind == KIND_POLYNOMIAL:
        m = len(params) - 1
        if m < 1:
            return np.zeros_like(q)
        acc = (m * params[m]) * np.ones_like(q)
        for k in range(m - 1, 0, -1):
            acc = acc * q + k * params[k]
        return acc
    a2 = params[0] * params[0]
    return q * (q * q - a2)


def _value(kind, params, q):
    """V(q), elementwise on an array."""
    if kind == KIND_HARMONIC:
        w2 = params[0] * params[0]
        return 0.5 * w2 * (q * q)
    if kind == KIND_POLYNOMIAL:
        m = len(params) - 1
        acc = params[m] * np.ones_like(q)
        for k in range(m - 1, -1, -1):
            acc = acc * q + params[k]
        return acc
    a2 = params[0] * params[0]
    t = q * q - a2
    return 0.25 * (t * t)


def _hess(kind, params, q):
    """d2V/dq2, elementwise on an array."""
    if kind == KIND_HARMONIC:
        w2 = params[0] * params[0]
        return w2 * np.ones_like(q)
    if kind == KIND_POLYNOMIAL:
        m = len(params) - 1
        if m < 2:
            return np.zeros_like(q)
        acc = (m * (m - 1) * params[m]) * np.ones_like(q)
        for k in range(m - 1, 1, -1):
            acc = acc * q + k * (k - 1) * params[k]
        return acc
    a2 = params[0] * params[0]
    return 3.0 * (q * q) - a2


def _rk4_once(kind, params, q, qt, dtau):
    """One RK4 step of dq/dtau = qt, dqt/dtau = -dV/dq (array state)."""
    h2 = 0.5 * dtau
    k1v = -_grad(kind, params, q)
    k2q = qt + h2 * k1v
    k2v = -_grad(kind, params, q + h2 * qt)
    k3q = qt + h2 * k2v
    k3v = -_grad(kind, params, q + h2 * k2q)
    k4q = qt + dtau * k3v
    k4v = -_grad(kind, params, q + dtau * k3q)
    q_new = q + (dtau * (qt + 2.0 * k2q + 2.0 * k3q + k4q)) / 6.0
    qt_new = qt + (dtau * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)) / 6.0
    return q_new, qt_new


def rk4_path(kind, params, q0, qt0, dtau, n_steps):
    """Integrate one point, recording every step. Returns (Q, QT), shape (n+1, d)."""
    q = np.array(q0, dtype=float)
    qt = np.array(qt0, dtype=float)
    d = q.shape[0]
    out_q = np.empty((n_steps + 1, d))
    out_qt = np.empty((n_steps + 1, d))
    out_q[0] = q
    out_qt[0] = qt
    # divergence propagates as inf/nan, exactly like the compiled backend
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, n_steps + 1):
            q, qt = _rk4_once(kind, params, q, qt, dtau)
            out_q[i] = q
            out_qt[i] = qt
    return out_q, out_qt


def rk4_advect(kind, params, qs, qts, dtau, n_steps):
    """Advect a batch of points; returns only the final states, shape (m, d)."""
    q = np.array(qs, dtype=float)
    qt = np.array(qts, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n_steps):
            q, qt = _rk4_once(kind, params, q, qt, dtau)
    return q, qt


def rk4_tangent(kind, params, q0, qt0, m0, dtau, n_steps):
    """Integrate the flow together with its tangent map M (2d x 2d).

    dM/dtau = J(x) M with J = [[0, I], [-diag V''(q), 0]], evaluated at the
    same RK4 stage positions as the flow. Returns (q, qt, M) at the end.
    """
    q = np.array(q0, dtype=float)
    qt = np.array(qt0, dtype=float)
    m = np.array(m0, dtype=float)
    d = q.shape[0]
    h2 = None
    for _ in range(n_steps):
        h2 = 0.5 * dtau
        # flow stages
        k1v = -_grad(kind, params, q)
        q2 = q + h2 * qt
        k2q = qt + h2 * k1v
        k2v = -_grad(kind, params, q2)
        q3 = q + h2 * k2q
        k3q = qt + h2 * k2v
        k3v = -_grad(kind, params, q3)
        q4 = q + dtau * k3q
        k4q = qt + dtau * k3v
        k4v = -_grad(kind, params, q4)
        # tangent-map stages share the flow stage positions
        k1m = _jac_mul(kind, params, q, m, d)
        k2m = _jac_mul(kind, params, q2, m + h2 * k1m, d)
        k3m = _jac_mul(kind, params, q3, m + h2 * k2m, d)
        k4m = _jac_mul(kind, params, q4, m + dtau * k3m, d)
        q = q + (dtau * (qt + 2.0 * k2q + 2.0 * k3q + k4q)) / 6.0
        qt = qt + (dtau * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)) / 6.0
        m = m + (dtau * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)) / 6.0
    return q, qt, m


def _jac_mul(kind, params, q, m, d):
    """J(q) @ m without forming J: top rows copy, bottom rows scale by -V''."""
    out = np.empty_like(m)
    out[:d, :] = m[d:, :]
    h = _hess(kind, params, q)
    out[d:, :] = (-h)[:, None] * m[:d, :]
    return out


def _value_scalar(kind, params, q):
    """V(q) on a plain float, matching _value's arithmetic exactly."""
    if kind == KIND_HARMONIC:
        w2 = params[0] * params[0]
        return 0.5 * w2 * (q * q)
    if kind == KIND_POLYNOMIAL:
        m = len(params) - 1
        acc = params[m]
        for k in range(m - 1, -1, -1):
            acc = acc * q + params[k]
        return acc
    a2 = params[0] * params[0]
    t = q * q - a2
    return 0.25 * (t * t)


def metropolis_chain(kind, params, beta, q0, qt0, step_q, step_qt,
                     normals, uniforms, burn_in, thinning):
    """Random-walk Metropolis targeting exp(-beta*E) on (qtilde, q).

    Consumes pre-drawn standard normals (n, 2d) and uniforms (n,) so the
    chain is reproducible and backend-independent. Records every
    ``thinning``-th state after ``burn_in`` steps. Returns (Qs, QTs, n_accept).
    """
    n = normals.shape[0]
    d = len(q0)
    pl = [float(v) for v in params]
    beta = float(beta)
    sq = [float(v) for v in step_q]
    sqt = [float(v) for v in step_qt]
    q = [float(v) for v in q0]
    qt = [float(v) for v in qt0]
    energy = 0.0
    for i in range(d):
        energy = energy + 0.5 * qt[i] * qt[i] + _value_scalar(kind, pl, q[i])
    n_keep = 0 if n <= burn_in else 1 + (n - 1 - burn_in) // thinning
    out_q = np.empty((n_keep, d))
    out_qt = np.empty((n_keep, d))
    n_accept = 0
    idx = 0
    qn = [0.0] * d
    qtn = [0.0] * d
    exp = math.exp
    for step in range(n):
        e_new = 0.0
        for i in range(d):
            qn[i] = q[i] + sq[i] * normals[step, i]
            qtn[i] = qt[i] + sqt[i] * normals[step, d + i]
            e_new = e_new + 0.5 * qtn[i] * qtn[i] + _value_scalar(kind, pl, qn[i])
        d_e = e_new - energy
        if d_e <= 0.0 or uniforms[step] < exp(-beta * d_e):
            q, qn = qn, q
            qt, qtn = qtn, qt
            energy = e_new
            n_accept += 1
        if step >= burn_in and (step - burn_in) % thinning == 0:
            for i in range(d):
                out_q[idx, i] = q[i]
                out_qt[idx, i] = qt[i]
            idx += 1
    return out_q, out_qt, n_accept
