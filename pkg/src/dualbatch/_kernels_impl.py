"""Hot-loop kernel bodies.

``build(decorate)`` instantiates the kernels either interpreted
(``decorate=None``) or compiled (``decorate=numba.njit(...)``); both variants
run the same statements in the same order, so within a backend results are
bit-reproducible and across backends they agree to rounding of the math
library calls.

The scalar update arithmetic here mirrors losses._delta_scalar expression by
expression; keep them in sync.
"""

import math


def build(decorate):
    if decorate is None:
        def decorate(f):
            return f

    @decorate
    def row_dot(indptr, indices, data, w, i):
        """x_i . w for a dense vector w (sequential accumulation)."""
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * w[indices[p]]
        return acc

    @decorate
    def coord_delta(code, gamma, a, m, y, v, lam_n):
        """Closed-form maximizer of the relaxed 1-D dual subproblem."""
        if code == 0:  # hinge
            ap = y * a + (1.0 - y * m) * lam_n / v
            if ap < 0.0:
                ap = 0.0
            elif ap > 1.0:
                ap = 1.0
            return y * ap - a
        if code == 1:  # smoothed hinge
            ap = (y * a * v + lam_n * (1.0 - y * m)) / (v + lam_n * gamma)
            if ap < 0.0:
                ap = 0.0
            elif ap > 1.0:
                ap = 1.0
            return y * ap - a
        if code == 3:  # square
            return lam_n * (y - m - a) / (lam_n + v)
        # logistic: safeguarded Newton in a' = (alpha+delta)*y
        ratio = v / lam_n
        ay = a * y
        my = m * y
        lo = 1e-14
        hi = 1.0 - 1e-14
        x = ay
        if x < lo:
            x = lo
        elif x > hi:
            x = hi
        for _ in range(200):
            g = -math.log(x / (1.0 - x)) - ratio * (x - ay) - my
            if abs(g) <= 1e-12:
                break
            if g > 0.0:
                lo = x
            else:
                hi = x
            if hi - lo <= 1e-16:
                break
            gp = -1.0 / x - 1.0 / (1.0 - x) - ratio
            xn = x - g / gp
            if xn <= lo or xn >= hi:
                xn = 0.5 * (lo + hi)
            x = xn
        return y * x - a

    @decorate
    def run_chunk(indptr, indices, data, labels, alpha, w, avg_sum, v,
                  draws, dptr, loss_code, gamma, lam_n, inv_lam_n,
                  t_start, avg_from, m_buf, d_buf):
        """Run dptr.shape[0]-1 iterations in place.

        draws[dptr[k]:dptr[k+1]] holds iteration k's coordinate set in
        ascending order. Margins are snapshotted against the pre-iteration w,
        updates computed independently, then applied in ascending coordinate
        order. After finishing global iteration t >= avg_from, alpha is
        accumulated into avg_sum.
        """
        niter = dptr.shape[0] - 1
        n = alpha.shape[0]
        for k in range(niter):
            s0 = dptr[k]
            s1 = dptr[k + 1]
            for j in range(s1 - s0):
                i = draws[s0 + j]
                acc = 0.0
                for p in range(indptr[i], indptr[i + 1]):
                    acc += data[p] * w[indices[p]]
                m_buf[j] = acc
            for j in range(s1 - s0):
                i = draws[s0 + j]
                d_buf[j] = coord_delta(loss_code, gamma, alpha[i], m_buf[j],
                                       labels[i], v[i], lam_n)
            for j in range(s1 - s0):
                i = draws[s0 + j]
                de = d_buf[j]
                if de != 0.0:
                    alpha[i] += de
                    for p in range(indptr[i], indptr[i + 1]):
                        w[indices[p]] += inv_lam_n * (de * data[p])
            if t_start + k + 1 >= avg_from:
                for i in range(n):
                    avg_sum[i] += alpha[i]
        return 0

    return {"row_dot": row_dot, "coord_delta": coord_delta,
            "run_chunk": run_chunk}
