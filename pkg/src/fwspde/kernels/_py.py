"""Pure-numpy kernel backend for diagonal linear additive models.

Hot Monte Carlo loops (tube-probability batches, exit-time sampling) for
models whose modes are independent OU channels:

    x_{n+1} = a * (x_n + ctrl_n) + sc * xi_n,   xi iid standard normal.

Per-path draws come from ``PCG64(seed)`` in (step, mode) order, identical
to the compiled backend; arithmetic is arranged so both backends produce
bit-identical results (sequential accumulation over modes, no FMA).
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

_CHUNK_DOUBLES = 16_000_000  # draw-buffer budget per chunk


def _sq_dev(x, ref_row):
    """Squared l2 deviation per path, accumulated mode by mode."""
    acc = np.zeros(x.shape[0])
    for k in range(x.shape[1]):
        d = x[:, k] - ref_row[k]
        acc = acc + d * d
    return acc


def _sup_dev(x, ref_row, dev_mat):
    """Sup over grid rows of |E (x - ref)|, accumulated mode by mode."""
    best = np.zeros(x.shape[0])
    for j in range(dev_mat.shape[0]):
        acc = np.zeros(x.shape[0])
        for k in range(x.shape[1]):
            acc = acc + dev_mat[j, k] * (x[:, k] - ref_row[k])
        best = np.maximum(best, np.abs(acc))
    return best


def batch_paths(a, sc, x0, ctrl, ref, dev_mat, record_idx, seeds, n_steps):
    """Simulate one batch; track deviation from ref and record nodes.

    Returns (sup_dev, recorded) with sup_dev[p] the sup over all nodes of
    the deviation from ``ref`` (l2 over modes, or sup-norm through the
    ``dev_mat`` synthesis matrix when given), and recorded[p, r, :] the
    state at node record_idx[r].
    """
    a = np.asarray(a, dtype=float)
    sc = np.asarray(sc, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    m = len(a)
    n_paths = len(seeds)
    record_idx = np.asarray(record_idx, dtype=np.int64)
    recorded = np.zeros((n_paths, len(record_idx), m))
    sup_dev = np.zeros(n_paths)
    chunk = max(1, int(_CHUNK_DOUBLES / max(1, n_steps * m)))
    for c0 in range(0, n_paths, chunk):
        c1 = min(n_paths, c0 + chunk)
        npc = c1 - c0
        draws = np.empty((npc, n_steps, m))
        for i in range(npc):
            gen = np.random.Generator(np.random.PCG64(int(seeds[c0 + i])))
            draws[i] = gen.standard_normal((n_steps, m))
        x = np.tile(x0, (npc, 1))
        if ref is not None:
            if dev_mat is None:
                best = _sq_dev(x, ref[0])
            else:
                best = _sup_dev(x, ref[0], dev_mat)
        rpos = 0
        while rpos < len(record_idx) and record_idx[rpos] == 0:
            recorded[c0:c1, rpos] = x
            rpos += 1
        for n in range(n_steps):
            if ctrl is None:
                x = a * x + sc * draws[:, n, :]
            else:
                x = a * (x + ctrl[n]) + sc * draws[:, n, :]
            if ref is not None:
                if dev_mat is None:
                    best = np.maximum(best, _sq_dev(x, ref[n + 1]))
                else:
                    best = np.maximum(best, _sup_dev(x, ref[n + 1], dev_mat))
            while rpos < len(record_idx) and record_idx[rpos] == n + 1:
                recorded[c0:c1, rpos] = x
                rpos += 1
        if ref is not None:
            sup_dev[c0:c1] = np.sqrt(best) if dev_mat is None else best
    return sup_dev, recorded


def exit_paths(a, sc, x0, radius, max_steps, seeds, dev_mat=None, block=4096):
    """March each path until its norm reaches ``radius`` (or censoring).

    Norm is coefficient l2, or the sup norm through ``dev_mat``.  Returns
    (tau_steps, exit_state, censored); tau_steps is the index of the first
    node at or beyond the radius.
    """
    a = np.asarray(a, dtype=float)
    sc = np.asarray(sc, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    m = len(a)
    n_paths = len(seeds)
    tau = np.full(n_paths, max_steps, dtype=np.int64)
    state = np.tile(x0, (n_paths, 1))
    censored = np.ones(n_paths, dtype=bool)
    gens = [np.random.Generator(np.random.PCG64(int(s))) for s in seeds]
    active = np.arange(n_paths)
    x = state.copy()
    r2 = radius * radius
    step = 0
    zero_ref = np.zeros(m)
    while len(active) and step < max_steps:
        nb = min(block, max_steps - step)
        draws = np.empty((len(active), nb, m))
        for i, p in enumerate(active):
            draws[i] = gens[p].standard_normal((nb, m))
        alive = np.ones(len(active), dtype=bool)
        for n in range(nb):
            x[alive] = a * x[alive] + sc * draws[alive, n, :]
            if dev_mat is None:
                out = _sq_dev(x, zero_ref) >= r2
            else:
                out = _sup_dev(x, zero_ref, dev_mat) >= radius
            hit = alive & out
            if hit.any():
                idx = np.nonzero(hit)[0]
                paths = active[idx]
                tau[paths] = step + n + 1
                state[paths] = x[idx]
                censored[paths] = False
                alive[idx] = False
                if not alive.any():
                    break
        step += nb
        keep = np.nonzero(alive)[0]
        active = active[keep]
        x = x[keep]
    if len(active):
        state[active] = x
    return tau, state, censored
