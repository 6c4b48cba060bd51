# cython: boundscheck=False, wraparound=False, language_level=3
"""Compiled hot kernels; mirrors _fallback.py bit-for-bit.

Every floating-point expression is written in the same operation order as
the pure-Python backend, and the module is compiled with -ffp-contract=off,
so both backends produce identical results.
"""

from libc.math cimport exp

import numpy as np


cdef inline double _grad_s(int kind, const double* p, Py_ssize_t np_, double q) noexcept nogil:
    cdef double acc, w2, a2
    cdef Py_ssize_t k, m
    if kind == 0:
        w2 = p[0] * p[0]
        return w2 * q
    elif kind == 1:
        m = np_ - 1
        if m < 1:
            return 0.0
        acc = m * p[m]
        for k in range(m - 1, 0, -1):
            acc = acc * q + k * p[k]
        return acc
    else:
        a2 = p[0] * p[0]
        return q * (q * q - a2)


cdef inline double _value_s(int kind, const double* p, Py_ssize_t np_, double q) noexcept nogil:
    cdef double acc, w2, a2, t
    cdef Py_ssize_t k, m
    if kind == 0:
        w2 = p[0] * p[0]
        return 0.5 * w2 * (q * q)
    elif kind == 1:
        m = np_ - 1
        acc = p[m]
        for k in range(m - 1, -1, -1):
            acc = acc * q + p[k]
        return acc
    else:
        a2 = p[0] * p[0]
        t = q * q - a2
        return 0.25 * (t * t)


cdef inline double _hess_s(int kind, const double* p, Py_ssize_t np_, double q) noexcept nogil:
    cdef double acc, w2, a2
    cdef Py_ssize_t k, m
    if kind == 0:
        w2 = p[0] * p[0]
        return w2
    elif kind == 1:
        m = np_ - 1
        if m < 2:
            return 0.0
        acc = (m * (m - 1)) * p[m]
        for k in range(m - 1, 1, -1):
            acc = acc * q + (k * (k - 1)) * p[k]
        return acc
    else:
        a2 = p[0] * p[0]
        return 3.0 * (q * q) - a2


cdef inline void _rk4_scalar(int kind, const double* p, Py_ssize_t np_,
                             double dtau, double* q, double* qt) noexcept nogil:
    cdef double h2 = 0.5 * dtau
    cdef double q0 = q[0], v0 = qt[0]
    cdef double k1v = -_grad_s(kind, p, np_, q0)
    cdef double k2q = v0 + h2 * k1v
    cdef double k2v = -_grad_s(kind, p, np_, q0 + h2 * v0)
    cdef double k3q = v0 + h2 * k2v
    cdef double k3v = -_grad_s(kind, p, np_, q0 + h2 * k2q)
    cdef double k4q = v0 + dtau * k3v
    cdef double k4v = -_grad_s(kind, p, np_, q0 + dtau * k3q)
    q[0] = q0 + (dtau * (v0 + 2.0 * k2q + 2.0 * k3q + k4q)) / 6.0
    qt[0] = v0 + (dtau * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)) / 6.0


def rk4_path(int kind, const double[::1] params, const double[::1] q0, const double[::1] qt0,
             double dtau, Py_ssize_t n_steps):
    """Integrate one point, recording every step. Returns (Q, QT), shape (n+1, d)."""
    cdef Py_ssize_t d = q0.shape[0]
    cdef Py_ssize_t np_ = params.shape[0]
    out_q = np.empty((n_steps + 1, d))
    out_qt = np.empty((n_steps + 1, d))
    cdef double[:, ::1] oq = out_q
    cdef double[:, ::1] ov = out_qt
    cdef const double* p = &params[0]
    cdef Py_ssize_t s, j
    cdef double qj, vj
    for j in range(d):
        oq[0, j] = q0[j]
        ov[0, j] = qt0[j]
    with nogil:
        for s in range(1, n_steps + 1):
            for j in range(d):
                qj = oq[s - 1, j]
                vj = ov[s - 1, j]
                _rk4_scalar(kind, p, np_, dtau, &qj, &vj)
                oq[s, j] = qj
                ov[s, j] = vj
    return out_q, out_qt


def rk4_advect(int kind, const double[::1] params, const double[:, ::1] qs, const double[:, ::1] qts,
               double dtau, Py_ssize_t n_steps):
    """Advect a batch of points; returns only the final states, shape (m, d)."""
    cdef Py_ssize_t m = qs.shape[0]
    cdef Py_ssize_t d = qs.shape[1]
    cdef Py_ssize_t np_ = params.shape[0]
    out_q = np.array(qs, dtype=float)
    out_qt = np.array(qts, dtype=float)
    cdef double[:, ::1] oq = out_q
    cdef double[:, ::1] ov = out_qt
    cdef const double* p = &params[0]
    cdef Py_ssize_t s, i, j
    with nogil:
        for s in range(n_steps):
            for i in range(m):
                for j in range(d):
                    _rk4_scalar(kind, p, np_, dtau, &oq[i, j], &ov[i, j])
    return out_q, out_qt


def rk4_tangent(int kind, const double[::1] params, const double[::1] q0, const double[::1] qt0,
                const double[:, ::1] m0, double dtau, Py_ssize_t n_steps):
    """Integrate the flow together with its tangent map M (2d x 2d)."""
    cdef Py_ssize_t d = q0.shape[0]
    cdef Py_ssize_t n2 = 2 * d
    cdef Py_ssize_t np_ = params.shape[0]
    q_arr = np.array(q0, dtype=float)
    qt_arr = np.array(qt0, dtype=float)
    m_arr = np.array(m0, dtype=float)
    # flow stage scratch, one slot per coordinate
    k1v_a = np.empty(d); k2q_a = np.empty(d); k2v_a = np.empty(d)
    k3q_a = np.empty(d); k3v_a = np.empty(d); k4q_a = np.empty(d); k4v_a = np.empty(d)
    q2_a = np.empty(d); q3_a = np.empty(d); q4_a = np.empty(d)
    h1_a = np.empty(d); h2h_a = np.empty(d); h3_a = np.empty(d); h4_a = np.empty(d)
    k1m_a = np.empty((n2, n2)); k2m_a = np.empty((n2, n2))
    k3m_a = np.empty((n2, n2)); k4m_a = np.empty((n2, n2))
    ms_a = np.empty((n2, n2))
    cdef double[::1] q = q_arr, qt = qt_arr
    cdef double[::1] k1v = k1v_a, k2q = k2q_a, k2v = k2v_a, k3q = k3q_a
    cdef double[::1] k3v = k3v_a, k4q = k4q_a, k4v = k4v_a
    cdef double[::1] q2 = q2_a, q3 = q3_a, q4 = q4_a
    cdef double[::1] h1 = h1_a, h2h = h2h_a, h3 = h3_a, h4 = h4_a
    cdef double[:, ::1] mm = m_arr
    cdef double[:, ::1] k1m = k1m_a, k2m = k2m_a, k3m = k3m_a, k4m = k4m_a
    cdef double[:, ::1] ms = ms_a
    cdef const double* p = &params[0]
    cdef Py_ssize_t s, i, c, j
    cdef double h2
    with nogil:
        for s in range(n_steps):
            h2 = 0.5 * dtau
            for j in range(d):
                k1v[j] = -_grad_s(kind, p, np_, q[j])
                q2[j] = q[j] + h2 * qt[j]
                k2q[j] = qt[j] + h2 * k1v[j]
                k2v[j] = -_grad_s(kind, p, np_, q2[j])
                q3[j] = q[j] + h2 * k2q[j]
                k3q[j] = qt[j] + h2 * k2v[j]
                k3v[j] = -_grad_s(kind, p, np_, q3[j])
                q4[j] = q[j] + dtau * k3q[j]
                k4q[j] = qt[j] + dtau * k3v[j]
                k4v[j] = -_grad_s(kind, p, np_, q4[j])
                h1[j] = _hess_s(kind, p, np_, q[j])
                h2h[j] = _hess_s(kind, p, np_, q2[j])
                h3[j] = _hess_s(kind, p, np_, q3[j])
                h4[j] = _hess_s(kind, p, np_, q4[j])
            # k1m = J(q) M
            for i in range(d):
                for c in range(n2):
                    k1m[i, c] = mm[d + i, c]
                    k1m[d + i, c] = (-h1[i]) * mm[i, c]
            # k2m = J(q2) (M + h2 k1m)
            for i in range(n2):
                for c in range(n2):
                    ms[i, c] = mm[i, c] + h2 * k1m[i, c]
            for i in range(d):
                for c in range(n2):
                    k2m[i, c] = ms[d + i, c]
                    k2m[d + i, c] = (-h2h[i]) * ms[i, c]
            # k3m = J(q3) (M + h2 k2m)
            for i in range(n2):
                for c in range(n2):
                    ms[i, c] = mm[i, c] + h2 * k2m[i, c]
            for i in range(d):
                for c in range(n2):
                    k3m[i, c] = ms[d + i, c]
                    k3m[d + i, c] = (-h3[i]) * ms[i, c]
            # k4m = J(q4) (M + dtau k3m)
            for i in range(n2):
                for c in range(n2):
                    ms[i, c] = mm[i, c] + dtau * k3m[i, c]
            for i in range(d):
                for c in range(n2):
                    k4m[i, c] = ms[d + i, c]
                    k4m[d + i, c] = (-h4[i]) * ms[i, c]
            for i in range(n2):
                for c in range(n2):
                    mm[i, c] = mm[i, c] + (dtau * (k1m[i, c] + 2.0 * k2m[i, c]
                                                   + 2.0 * k3m[i, c] + k4m[i, c])) / 6.0
            for j in range(d):
                q[j] = q[j] + (dtau * (qt[j] + 2.0 * k2q[j] + 2.0 * k3q[j] + k4q[j])) / 6.0
                qt[j] = qt[j] + (dtau * (k1v[j] + 2.0 * k2v[j] + 2.0 * k3v[j] + k4v[j])) / 6.0
    return q_arr, qt_arr, m_arr


def metropolis_chain(int kind, const double[::1] params, double beta,
                     const double[::1] q0, const double[::1] qt0,
                     const double[::1] step_q, const double[::1] step_qt,
                     const double[:, ::1] normals, const double[::1] uniforms,
                     Py_ssize_t burn_in, Py_ssize_t thinning):
    """Random-walk Metropolis targeting exp(-beta*E) on (qtilde, q)."""
    cdef Py_ssize_t n = normals.shape[0]
    cdef Py_ssize_t d = q0.shape[0]
    cdef Py_ssize_t np_ = params.shape[0]
    cdef Py_ssize_t n_keep = 0 if n <= burn_in else 1 + (n - 1 - burn_in) // thinning
    out_q = np.empty((n_keep, d))
    out_qt = np.empty((n_keep, d))
    q_arr = np.array(q0, dtype=float)
    qt_arr = np.array(qt0, dtype=float)
    qn_arr = np.empty(d)
    qtn_arr = np.empty(d)
    cdef double[:, ::1] oq = out_q, ov = out_qt
    cdef double[::1] q = q_arr, qt = qt_arr, qn = qn_arr, qtn = qtn_arr
    cdef const double* p = &params[0]
    cdef Py_ssize_t step, i, idx = 0
    cdef long n_accept = 0
    cdef double energy = 0.0, e_new, d_e
    for i in range(d):
        energy = energy + 0.5 * qt[i] * qt[i] + _value_s(kind, p, np_, q[i])
    with nogil:
        for step in range(n):
            e_new = 0.0
            for i in range(d):
                qn[i] = q[i] + step_q[i] * normals[step, i]
                qtn[i] = qt[i] + step_qt[i] * normals[step, d + i]
                e_new = e_new + 0.5 * qtn[i] * qtn[i] + _value_s(kind, p, np_, qn[i])
            d_e = e_new - energy
            if d_e <= 0.0 or uniforms[step] < exp(-beta * d_e):
                for i in range(d):
                    q[i] = qn[i]
                    qt[i] = qtn[i]
                energy = e_new
                n_accept += 1
            if step >= burn_in and (step - burn_in) % thinning == 0:
                for i in range(d):
                    oq[idx, i] = q[i]
                    ov[idx, i] = qt[i]
                idx += 1
    return out_q, out_qt, n_accept
