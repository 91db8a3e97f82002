# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tabular training loop; bit-compatible with ``_tabular_py``."""

from libc.math cimport fabs, pow, INFINITY

cdef enum:
    ALGO_Q = 0
    ALGO_DOUBLE_Q = 1
    ALGO_SDQ_CAL = 2


cdef inline Py_ssize_t _argmax(double[:, ::1] q, Py_ssize_t s) nogil:
    cdef Py_ssize_t best = 0, i
    cdef double m = q[s, 0]
    for i in range(1, q.shape[1]):
        if q[s, i] > m:
            m = q[s, i]
            best = i
    return best


cdef inline Py_ssize_t _sample(const double[::1] cdf, double u) nogil:
    cdef Py_ssize_t i, n = cdf.shape[0]
    for i in range(n - 1):
        if u < cdf[i]:
            return i
    return n - 1


cdef inline double _gap(double[:, ::1] q, Py_ssize_t s) nogil:
    cdef double best = q[s, 0], second = -INFINITY, v
    cdef Py_ssize_t i
    for i in range(1, q.shape[1]):
        v = q[s, i]
        if v > best:
            second = best
            best = v
        elif v > second:
            second = v
    return best - second


def run_tabular_loop(const double[:, :, ::1] p_cdf, const double[:, ::1] reward,
                     const long[:, ::1] noise_kind, const double[:, ::1] noise_scale,
                     const unsigned char[::1] terminal, const double[::1] start_cdf,
                     double gamma, double beta, int algo,
                     double eps_start, double eps_end, long eps_decay, double alpha_power,
                     long max_episode_steps, long s0, const double[:, ::1] uniforms,
                     const double[:, ::1] q_star, bint track,
                     double[:, ::1] qa, double[:, ::1] qb, long[:, ::1] na, long[:, ::1] nb,
                     double[::1] linf_out, double[::1] gap_out,
                     double[::1] ep_return_out, long[::1] ep_end_out):
    cdef Py_ssize_t S = reward.shape[0], A = reward.shape[1], T = uniforms.shape[0]
    cdef Py_ssize_t t, i, j, s = s0, a, nxt, n_nonterm = 0
    cdef long k, ep_len = 0, n_eps = 0
    cdef double frac, eps, m, v, noise, r, qmin, ra, rb, ya, yb, y, alpha, err, d, g
    cdef double ep_ret = 0.0
    cdef bint done

    for i in range(S):
        if not terminal[i]:
            n_nonterm += 1

    with nogil:
        for t in range(T):
            if eps_decay > 0:
                frac = <double>t / <double>eps_decay
                if frac > 1.0:
                    frac = 1.0
            else:
                frac = 1.0
            eps = eps_start + frac * (eps_end - eps_start)
            if uniforms[t, 0] < eps:
                a = <Py_ssize_t>(uniforms[t, 1] * A)
                if a >= A:
                    a = A - 1
            else:
                a = 0
                m = qa[s, 0] + qb[s, 0]
                for i in range(1, A):
                    v = qa[s, i] + qb[s, i]
                    if v > m:
                        m = v
                        a = i

            nxt = _sample(p_cdf[s, a], uniforms[t, 2])
            k = noise_kind[s, a]
            if k == 2:
                noise = -noise_scale[s, a] if uniforms[t, 3] < 0.5 else noise_scale[s, a]
            elif k == 1:
                noise = (2.0 * uniforms[t, 3] - 1.0) * noise_scale[s, a]
            else:
                noise = 0.0
            r = reward[s, a] + noise
            done = terminal[nxt] != 0

            if algo == ALGO_SDQ_CAL:
                qmin = qa[s, a] if qa[s, a] < qb[s, a] else qb[s, a]
                ra = r + beta * (qmin - qa[s, _argmax(qa, s)])
                rb = r + beta * (qmin - qb[s, _argmax(qb, s)])
                ya = ra
                yb = rb
                if not done:
                    ya = ra + gamma * qb[nxt, _argmax(qa, nxt)]
                    yb = rb + gamma * qa[nxt, _argmax(qb, nxt)]
                na[s, a] += 1
                nb[s, a] += 1
                alpha = 1.0 / pow(<double>na[s, a], alpha_power)
                qa[s, a] = qa[s, a] + alpha * (ya - qa[s, a])
                alpha = 1.0 / pow(<double>nb[s, a], alpha_power)
                qb[s, a] = qb[s, a] + alpha * (yb - qb[s, a])
            elif algo == ALGO_DOUBLE_Q:
                if uniforms[t, 4] < 0.5:
                    y = r
                    if not done:
                        y = r + gamma * qb[nxt, _argmax(qa, nxt)]
                    na[s, a] += 1
                    alpha = 1.0 / pow(<double>na[s, a], alpha_power)
                    qa[s, a] = qa[s, a] + alpha * (y - qa[s, a])
                else:
                    y = r
                    if not done:
                        y = r + gamma * qa[nxt, _argmax(qb, nxt)]
                    nb[s, a] += 1
                    alpha = 1.0 / pow(<double>nb[s, a], alpha_power)
                    qb[s, a] = qb[s, a] + alpha * (y - qb[s, a])
            else:
                y = r
                if not done:
                    y = r + gamma * qa[nxt, _argmax(qa, nxt)]
                na[s, a] += 1
                nb[s, a] = na[s, a]
                alpha = 1.0 / pow(<double>na[s, a], alpha_power)
                qa[s, a] = qa[s, a] + alpha * (y - qa[s, a])
                qb[s, a] = qa[s, a]

            if track:
                err = 0.0
                for i in range(S):
                    for j in range(A):
                        d = fabs(qa[i, j] - q_star[i, j])
                        if d > err:
                            err = d
                        d = fabs(qb[i, j] - q_star[i, j])
                        if d > err:
                            err = d
                linf_out[t] = err
                g = 0.0
                for i in range(S):
                    if not terminal[i]:
                        g += _gap(qa, i)
                gap_out[t] = g / n_nonterm if n_nonterm > 0 else 0.0

            ep_ret += r
            ep_len += 1
            if done or ep_len >= max_episode_steps:
                ep_return_out[n_eps] = ep_ret
                ep_end_out[n_eps] = t + 1
                n_eps += 1
                ep_ret = 0.0
                ep_len = 0
                s = _sample(start_cdf, uniforms[t, 5])
            else:
                s = nxt
    return n_eps
