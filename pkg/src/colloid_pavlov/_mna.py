"""Compiled inner loop of the transient solver.

Unknown vector layout: non-ground node voltages first, then one branch
current per voltage source, inductor and resistor. Ground is index -1
everywhere.
"""

import numba
import numpy as np

from .device import _advance, _resistance

OK = 0
SINGULAR = 1
KCL = 2

SOURCE = 0
INDUCTOR = 1
RESISTOR = 2


@numba.njit(cache=True)
def _lu_factor(a, perm):
    # in-place Doolittle with partial pivoting; returns offending column or -1
    n = a.shape[0]
    scale = 0.0
    for i in range(n):
        for j in range(n):
            if abs(a[i, j]) > scale:
                scale = abs(a[i, j])
    for i in range(n):
        perm[i] = i
    for k in range(n):
        p = k
        big = abs(a[k, k])
        for i in range(k + 1, n):
            if abs(a[i, k]) > big:
                big = abs(a[i, k])
                p = i
        if big <= 1e-15 * scale:
            return k
        if p != k:
            for j in range(n):
                tmp = a[k, j]
                a[k, j] = a[p, j]
                a[p, j] = tmp
            tmp_i = perm[k]
            perm[k] = perm[p]
            perm[p] = tmp_i
        for i in range(k + 1, n):
            f = a[i, k] / a[k, k]
            a[i, k] = f
            for j in range(k + 1, n):
                a[i, j] -= f * a[k, j]
    return -1


@numba.njit(cache=True)
def _lu_solve(lu, perm, b, out):
    n = lu.shape[0]
    for i in range(n):
        s = b[perm[i]]
        for j in range(i):
            s -= lu[i, j] * out[j]
        out[i] = s
    for i in range(n - 1, -1, -1):
        s = out[i]
        for j in range(i + 1, n):
            s -= lu[i, j] * out[j]
        out[i] = s / lu[i, i]


@numba.njit(cache=True)
def _node_v(x, idx):
    if idx < 0:
        return 0.0
    return x[idx]


@numba.njit(cache=True)
def run(a_static, n_nodes,
        mem_p, mem_n, mem_par, w0,
        br_p, br_n, br_row, br_kind, br_rhs,
        dt, tol):
    """Integrate ``br_rhs.shape[0]`` steps.

    ``mem_par`` rows are (r_on, r_off, v_th_pot, v_th_dep, k_pot, k_dep,
    alpha, tau_decay). Branch rows (``br_kind``: SOURCE, INDUCTOR, RESISTOR)
    are fully stamped in ``a_static``; ``br_rhs`` holds the per-step source
    voltages, and an inductor row's right-hand side is its history term
    ``a_static[row, row] * i_prev``.
    """
    n_steps = br_rhs.shape[0]
    size = a_static.shape[0]
    n_mem = mem_p.shape[0]
    n_br = br_p.shape[0]

    xs = np.zeros((n_steps, size))
    ws = np.zeros((n_steps, n_mem))
    rs = np.zeros((n_steps, n_mem))
    resid = np.zeros(n_steps)
    imax = np.zeros(n_steps)

    a = np.empty((size, size))
    lu = np.empty((size, size))
    perm = np.empty(size, dtype=np.int64)
    b = np.zeros(size)
    x = np.zeros(size)
    r = np.zeros(size)
    d = np.zeros(size)
    kcl = np.zeros(n_nodes)
    w = w0.copy()
    g_mem = np.zeros(n_mem)
    i_prev = np.zeros(n_br)

    for k in range(n_steps):
        for i in range(size):
            for j in range(size):
                a[i, j] = a_static[i, j]
            b[i] = 0.0
        for m in range(n_mem):
            rm = _resistance(mem_par[m, 0], mem_par[m, 1], w[m])
            rs[k, m] = rm
            ws[k, m] = w[m]
            g = 1.0 / rm
            g_mem[m] = g
            p = mem_p[m]
            q = mem_n[m]
            if p >= 0:
                a[p, p] += g
            if q >= 0:
                a[q, q] += g
            if p >= 0 and q >= 0:
                a[p, q] -= g
                a[q, p] -= g
        for j in range(n_br):
            row = br_row[j]
            if br_kind[j] == INDUCTOR:
                b[row] = a_static[row, row] * i_prev[j]
            elif br_kind[j] == SOURCE:
                b[row] = br_rhs[k, j]

        for i in range(size):
            for j in range(size):
                lu[i, j] = a[i, j]
        bad = _lu_factor(lu, perm)
        if bad >= 0:
            return xs, ws, rs, resid, imax, w, k, SINGULAR, bad
        _lu_solve(lu, perm, b, x)
        # one round of iterative refinement
        for i in range(size):
            s = b[i]
            for j in range(size):
                s -= a[i, j] * x[j]
            r[i] = s
        _lu_solve(lu, perm, r, d)
        for i in range(size):
            x[i] += d[i]

        # KCL: signed sum of currents leaving every node
        for i in range(n_nodes):
            kcl[i] = 0.0
        big = 0.0
        for m in range(n_mem):
            cur = g_mem[m] * (_node_v(x, mem_p[m]) - _node_v(x, mem_n[m]))
            if mem_p[m] >= 0:
                kcl[mem_p[m]] += cur
            if mem_n[m] >= 0:
                kcl[mem_n[m]] -= cur
            if abs(cur) > big:
                big = abs(cur)
        for j in range(n_br):
            cur = x[br_row[j]]
            if br_p[j] >= 0:
                kcl[br_p[j]] += cur
            if br_n[j] >= 0:
                kcl[br_n[j]] -= cur
            if abs(cur) > big:
                big = abs(cur)
        worst = 0.0
        for i in range(n_nodes):
            if abs(kcl[i]) > worst:
                worst = abs(kcl[i])
        resid[k] = worst
        imax[k] = big
        for i in range(size):
            xs[k, i] = x[i]
        if worst > tol * big:
            return xs, ws, rs, resid, imax, w, k, KCL, -1

        for j in range(n_br):
            i_prev[j] = x[br_row[j]]
        for m in range(n_mem):
            v = _node_v(x, mem_p[m]) - _node_v(x, mem_n[m])
            w[m] = _advance(w[m], v, dt, mem_par[m, 2], mem_par[m, 3], mem_par[m, 4],
                            mem_par[m, 5], mem_par[m, 6], mem_par[m, 7])

    return xs, ws, rs, resid, imax, w, n_steps, OK, -1
