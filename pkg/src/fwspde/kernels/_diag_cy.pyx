# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend (see _py.py for the reference semantics).

Per-path normal draws come from the same ``PCG64`` generators as the
numpy backend, fetched blockwise through the Generator API; the stepping
loops run without the GIL so chunked thread parallelism scales.
"""

import numpy as np

cimport cython
from libc.math cimport sqrt, fabs

BACKEND = "cython"

_EXIT_BLOCK = 4096


def batch_paths(a_in, sc_in, x0_in, ctrl, ref, dev_mat, record_idx, seeds,
                int n_steps):
    a_arr = np.ascontiguousarray(a_in, dtype=np.float64)
    sc_arr = np.ascontiguousarray(sc_in, dtype=np.float64)
    x0_arr = np.ascontiguousarray(x0_in, dtype=np.float64)
    cdef double[::1] a = a_arr
    cdef double[::1] sc = sc_arr
    cdef double[::1] x0 = x0_arr
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n_paths = len(seeds)
    rec_arr = np.ascontiguousarray(record_idx, dtype=np.int64)
    cdef long long[::1] rec = rec_arr
    cdef Py_ssize_t n_rec = rec.shape[0]

    cdef bint has_ctrl = ctrl is not None
    cdef bint has_ref = ref is not None
    cdef bint has_mat = dev_mat is not None
    cdef double[:, ::1] ctrl_v = np.ascontiguousarray(ctrl, dtype=np.float64) \
        if has_ctrl else np.zeros((1, m))
    cdef double[:, ::1] ref_v = np.ascontiguousarray(ref, dtype=np.float64) \
        if has_ref else np.zeros((1, m))
    cdef double[:, ::1] mat_v = np.ascontiguousarray(dev_mat, dtype=np.float64) \
        if has_mat else np.zeros((1, m))
    cdef Py_ssize_t n_grid = mat_v.shape[0]

    sup_out = np.zeros(n_paths)
    rec_out = np.zeros((n_paths, n_rec, m))
    cdef double[::1] sup_v = sup_out
    cdef double[:, :, ::1] rec_v = rec_out

    x_buf = np.empty(m)
    cdef double[::1] x = x_buf
    cdef double[:, ::1] draws
    cdef Py_ssize_t p, n, k, j, rpos
    cdef double best, acc, d

    seeds_list = [int(s) for s in seeds]
    for p in range(n_paths):
        gen = np.random.Generator(np.random.PCG64(seeds_list[p]))
        draws_arr = gen.standard_normal((n_steps, m))
        draws = draws_arr
        with nogil:
            for k in range(m):
                x[k] = x0[k]
            best = 0.0
            if has_ref:
                best = _dev(x, ref_v, 0, mat_v, has_mat, m, n_grid)
            rpos = 0
            while rpos < n_rec and rec[rpos] == 0:
                for k in range(m):
                    rec_v[p, rpos, k] = x[k]
                rpos += 1
            for n in range(n_steps):
                if has_ctrl:
                    for k in range(m):
                        x[k] = a[k] * (x[k] + ctrl_v[n, k]) + sc[k] * draws[n, k]
                else:
                    for k in range(m):
                        x[k] = a[k] * x[k] + sc[k] * draws[n, k]
                if has_ref:
                    acc = _dev(x, ref_v, n + 1, mat_v, has_mat, m, n_grid)
                    if acc > best:
                        best = acc
                while rpos < n_rec and rec[rpos] == n + 1:
                    for k in range(m):
                        rec_v[p, rpos, k] = x[k]
                    rpos += 1
            if has_ref:
                sup_v[p] = best if has_mat else sqrt(best)
    return sup_out, rec_out


cdef inline double _dev(double[::1] x, double[:, ::1] ref, Py_ssize_t row,
                        double[:, ::1] mat, bint has_mat,
                        Py_ssize_t m, Py_ssize_t n_grid) noexcept nogil:
    """Squared l2 deviation, or sup over synthesis rows when has_mat."""
    cdef Py_ssize_t j, k
    cdef double acc, d, best
    if not has_mat:
        acc = 0.0
        for k in range(m):
            d = x[k] - ref[row, k]
            acc = acc + d * d
        return acc
    best = 0.0
    for j in range(n_grid):
        acc = 0.0
        for k in range(m):
            acc = acc + mat[j, k] * (x[k] - ref[row, k])
        if fabs(acc) > best:
            best = fabs(acc)
    return best


def exit_paths(a_in, sc_in, x0_in, double radius, long long max_steps, seeds,
               dev_mat=None, int block=_EXIT_BLOCK):
    a_arr = np.ascontiguousarray(a_in, dtype=np.float64)
    sc_arr = np.ascontiguousarray(sc_in, dtype=np.float64)
    x0_arr = np.ascontiguousarray(x0_in, dtype=np.float64)
    cdef double[::1] a = a_arr
    cdef double[::1] sc = sc_arr
    cdef double[::1] x0 = x0_arr
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n_paths = len(seeds)

    cdef bint has_mat = dev_mat is not None
    cdef double[:, ::1] mat_v = np.ascontiguousarray(dev_mat, dtype=np.float64) \
        if has_mat else np.zeros((1, m))
    cdef double[:, ::1] zero_ref = np.zeros((1, m))
    cdef Py_ssize_t n_grid = mat_v.shape[0]

    tau_out = np.full(n_paths, max_steps, dtype=np.int64)
    state_out = np.tile(np.asarray(x0_arr), (n_paths, 1))
    cens_out = np.ones(n_paths, dtype=bool)
    cdef long long[::1] tau_v = tau_out
    cdef double[:, ::1] state_v = state_out
    cdef double r2 = radius * radius

    x_buf = np.empty(m)
    cdef double[::1] x = x_buf
    cdef double[:, ::1] draws
    cdef Py_ssize_t p, n, k
    cdef long long step
    cdef Py_ssize_t nb
    cdef double val
    cdef bint done

    seeds_list = [int(s) for s in seeds]
    for p in range(n_paths):
        gen = np.random.Generator(np.random.PCG64(seeds_list[p]))
        for k in range(m):
            x[k] = x0[k]
        step = 0
        done = False
        while not done and step < max_steps:
            nb = block if block < max_steps - step else <Py_ssize_t>(max_steps - step)
            draws_arr = gen.standard_normal((nb, m))
            draws = draws_arr
            with nogil:
                for n in range(nb):
                    for k in range(m):
                        x[k] = a[k] * x[k] + sc[k] * draws[n, k]
                    val = _dev(x, zero_ref, 0, mat_v, has_mat, m, n_grid)
                    if (val >= r2 and not has_mat) or (has_mat and val >= radius):
                        tau_v[p] = step + n + 1
                        for k in range(m):
                            state_v[p, k] = x[k]
                        done = True
                        break
            step += nb
        if done:
            cens_out[p] = False
        else:
            for k in range(m):
                state_v[p, k] = x[k]
    return tau_out, state_out, cens_out
