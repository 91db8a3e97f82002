"""Pure-Python tabular training loop.

Reference twin of ``_tabular_core.pyx``: same arguments, same arithmetic in
the same order, so both produce bit-identical tables and traces. Used when
the compiled extension is unavailable or ``SDQCAL_PURE_PYTHON=1``.
"""

ALGO_Q = 0
ALGO_DOUBLE_Q = 1
ALGO_SDQ_CAL = 2


def _argmax(row):
    best = 0
    m = row[0]
    for i in range(1, len(row)):
        if row[i] > m:
            m = row[i]
            best = i
    return best


def _sample(cdf, u):
    n = len(cdf)
    for i in range(n - 1):
        if u < cdf[i]:
            return i
    return n - 1


def _gap(row):
    best = row[0]
    second = float("-inf")
    for i in range(1, len(row)):
        v = row[i]
        if v > best:
            second = best
            best = v
        elif v > second:
            second = v
    return best - second


def run_tabular_loop(p_cdf, reward, noise_kind, noise_scale, terminal, start_cdf,
                     gamma, beta, algo, eps_start, eps_end, eps_decay, alpha_power,
                     max_episode_steps, s0, uniforms, q_star, track,
                     qa_arr, qb_arr, na_arr, nb_arr,
                     linf_out, gap_out, ep_return_out, ep_end_out):
    S, A = reward.shape
    T = uniforms.shape[0]
    P = p_cdf.tolist()
    R = reward.tolist()
    NK = noise_kind.tolist()
    NS = noise_scale.tolist()
    term = terminal.tolist()
    start = start_cdf.tolist()
    U = uniforms.tolist()
    QS = q_star.tolist()
    qa = qa_arr.tolist()
    qb = qb_arr.tolist()
    na = na_arr.tolist()
    nb = nb_arr.tolist()
    nonterminal = [s for s in range(S) if not term[s]]
    n_nonterm = len(nonterminal)

    s = s0
    ep_ret = 0.0
    ep_len = 0
    n_eps = 0
    for t in range(T):
        u = U[t]
        if eps_decay > 0:
            frac = t / eps_decay
            if frac > 1.0:
                frac = 1.0
        else:
            frac = 1.0
        eps = eps_start + frac * (eps_end - eps_start)
        qa_s = qa[s]
        qb_s = qb[s]
        if u[0] < eps:
            a = int(u[1] * A)
            if a >= A:
                a = A - 1
        else:
            a = 0
            m = qa_s[0] + qb_s[0]
            for i in range(1, A):
                v = qa_s[i] + qb_s[i]
                if v > m:
                    m = v
                    a = i

        nxt = _sample(P[s][a], u[2])
        k = NK[s][a]
        if k == 2:
            noise = -NS[s][a] if u[3] < 0.5 else NS[s][a]
        elif k == 1:
            noise = (2.0 * u[3] - 1.0) * NS[s][a]
        else:
            noise = 0.0
        r = R[s][a] + noise
        done = term[nxt]

        if algo == ALGO_SDQ_CAL:
            qmin = qa_s[a] if qa_s[a] < qb_s[a] else qb_s[a]
            ra = r + beta * (qmin - qa_s[_argmax(qa_s)])
            rb = r + beta * (qmin - qb_s[_argmax(qb_s)])
            ya = ra
            yb = rb
            if not done:
                ya = ra + gamma * qb[nxt][_argmax(qa[nxt])]
                yb = rb + gamma * qa[nxt][_argmax(qb[nxt])]
            na[s][a] += 1
            nb[s][a] += 1
            alpha = 1.0 / (na[s][a] ** alpha_power)
            qa_s[a] = qa_s[a] + alpha * (ya - qa_s[a])
            alpha = 1.0 / (nb[s][a] ** alpha_power)
            qb_s[a] = qb_s[a] + alpha * (yb - qb_s[a])
        elif algo == ALGO_DOUBLE_Q:
            if u[4] < 0.5:
                y = r
                if not done:
                    y = r + gamma * qb[nxt][_argmax(qa[nxt])]
                na[s][a] += 1
                alpha = 1.0 / (na[s][a] ** alpha_power)
                qa_s[a] = qa_s[a] + alpha * (y - qa_s[a])
            else:
                y = r
                if not done:
                    y = r + gamma * qa[nxt][_argmax(qb[nxt])]
                nb[s][a] += 1
                alpha = 1.0 / (nb[s][a] ** alpha_power)
                qb_s[a] = qb_s[a] + alpha * (y - qb_s[a])
        else:
            y = r
            if not done:
                y = r + gamma * qa[nxt][_argmax(qa[nxt])]
            na[s][a] += 1
            nb[s][a] = na[s][a]
            alpha = 1.0 / (na[s][a] ** alpha_power)
            qa_s[a] = qa_s[a] + alpha * (y - qa_s[a])
            qb_s[a] = qa_s[a]

        if track:
            err = 0.0
            for i in range(S):
                qa_i, qb_i, qs_i = qa[i], qb[i], QS[i]
                for j in range(A):
                    d = abs(qa_i[j] - qs_i[j])
                    if d > err:
                        err = d
                    d = abs(qb_i[j] - qs_i[j])
                    if d > err:
                        err = d
            linf_out[t] = err
            g = 0.0
            for i in nonterminal:
                g += _gap(qa[i])
            gap_out[t] = g / n_nonterm if n_nonterm > 0 else 0.0

        ep_ret += r
        ep_len += 1
        if done or ep_len >= max_episode_steps:
            ep_return_out[n_eps] = ep_ret
            ep_end_out[n_eps] = t + 1
            n_eps += 1
            ep_ret = 0.0
            ep_len = 0
            s = _sample(start, u[5])
        else:
            s = nxt

    qa_arr[:] = qa
    qb_arr[:] = qb
    na_arr[:] = na
    nb_arr[:] = nb
    return n_eps
