"""Hot inner loops: pairwise tables, min-sum message passing, exhaustive search.

Each kernel has a numba version and a vectorised numpy version with the same
signature; the public wrappers dispatch on :func:`birdify._accel.numba_enabled`.
Graphs are given as an edge list ``(ei, ej)`` with ``ei < ej`` and a table
``pair[e, a, b]`` holding the pairwise energy of ``ei`` in state ``a`` and
``ej`` in state ``b``.
"""
import math

import numpy as np

from . import _accel
from ._accel import njit

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# -- pairwise tables -------------------------------------------------------

def _pair_table_numpy(cand, ei, ej, sigma2):
    d = cand[ei][:, :, None, :] - cand[ej][:, None, :, :]
    r2 = np.einsum("eabk,eabk->eab", d, d)
    return (_INV_SQRT_2PI / math.sqrt(sigma2)) * np.exp(-r2 / (2.0 * sigma2)) * np.sqrt(r2) / sigma2


@njit(cache=True)
def _pair_table_numba(cand, ei, ej, sigma2):
    n_edges = ei.shape[0]
    S = cand.shape[1]
    out = np.empty((n_edges, S, S))
    scale = _INV_SQRT_2PI / math.sqrt(sigma2) / sigma2
    for e in range(n_edges):
        i = ei[e]
        j = ej[e]
        for a in range(S):
            xa = cand[i, a, 0]
            ya = cand[i, a, 1]
            for b in range(S):
                dx = xa - cand[j, b, 0]
                dy = ya - cand[j, b, 1]
                r2 = dx * dx + dy * dy
                out[e, a, b] = scale * math.exp(-r2 / (2.0 * sigma2)) * math.sqrt(r2)
    return out


def gaussian_force_table(cand, ei, ej, sigma2):
    """``|F_r|`` between every candidate pair of every edge.

    ``cand`` has shape (K, S, 2); returns (E, S, S).
    """
    cand = np.ascontiguousarray(cand, dtype=np.float64)
    ei = np.ascontiguousarray(ei, dtype=np.int64)
    ej = np.ascontiguousarray(ej, dtype=np.int64)
    if len(ei) == 0:
        return np.zeros((0, cand.shape[1], cand.shape[1]))
    if _accel.numba_enabled():
        return _pair_table_numba(cand, ei, ej, float(sigma2))
    return _pair_table_numpy(cand, ei, ej, float(sigma2))


# -- min-sum message passing -----------------------------------------------

def _minsum_numpy(unary, ei, ej, pair, damping, tol, max_iter):
    K, S = unary.shape
    E = len(ei)
    fwd = np.zeros((E, S))  # ei -> ej, indexed by ej's state
    rev = np.zeros((E, S))  # ej -> ei, indexed by ei's state
    it = 0
    converged = E == 0
    while it < max_iter and not converged:
        inc = np.zeros((K, S))
        np.add.at(inc, ej, fwd)
        np.add.at(inc, ei, rev)
        h_i = unary[ei] + inc[ei] - rev
        h_j = unary[ej] + inc[ej] - fwd
        new_fwd = (h_i[:, :, None] + pair).min(axis=1)
        new_rev = (h_j[:, None, :] + pair).min(axis=2)
        new_fwd -= new_fwd.min(axis=1, keepdims=True)
        new_rev -= new_rev.min(axis=1, keepdims=True)
        new_fwd = damping * fwd + (1.0 - damping) * new_fwd
        new_rev = damping * rev + (1.0 - damping) * new_rev
        delta = max(np.abs(new_fwd - fwd).max(), np.abs(new_rev - rev).max())
        fwd, rev = new_fwd, new_rev
        it += 1
        converged = delta < tol
    belief = unary.copy()
    np.add.at(belief, ej, fwd)
    np.add.at(belief, ei, rev)
    return belief, it, converged


@njit(cache=True)
def _minsum_numba(unary, ei, ej, pair, damping, tol, max_iter):
    K, S = unary.shape
    E = ei.shape[0]
    fwd = np.zeros((E, S))
    rev = np.zeros((E, S))
    new_fwd = np.empty((E, S))
    new_rev = np.empty((E, S))
    inc = np.empty((K, S))
    h_i = np.empty(S)
    h_j = np.empty(S)
    it = 0
    converged = E == 0
    while it < max_iter and not converged:
        inc[:, :] = 0.0
        for e in range(E):
            for s in range(S):
                inc[ej[e], s] += fwd[e, s]
        for e in range(E):
            for s in range(S):
                inc[ei[e], s] += rev[e, s]
        delta = 0.0
        for e in range(E):
            i = ei[e]
            j = ej[e]
            for s in range(S):
                h_i[s] = unary[i, s] + inc[i, s] - rev[e, s]
                h_j[s] = unary[j, s] + inc[j, s] - fwd[e, s]
            lo_f = np.inf
            for b in range(S):
                m = np.inf
                for a in range(S):
                    v = h_i[a] + pair[e, a, b]
                    if v < m:
                        m = v
                new_fwd[e, b] = m
                if m < lo_f:
                    lo_f = m
            lo_r = np.inf
            for a in range(S):
                m = np.inf
                for b in range(S):
                    v = h_j[b] + pair[e, a, b]
                    if v < m:
                        m = v
                new_rev[e, a] = m
                if m < lo_r:
                    lo_r = m
            for s in range(S):
                nf = damping * fwd[e, s] + (1.0 - damping) * (new_fwd[e, s] - lo_f)
                nr = damping * rev[e, s] + (1.0 - damping) * (new_rev[e, s] - lo_r)
                df = abs(nf - fwd[e, s])
                dr = abs(nr - rev[e, s])
                if df > delta:
                    delta = df
                if dr > delta:
                    delta = dr
                new_fwd[e, s] = nf
                new_rev[e, s] = nr
        fwd, new_fwd = new_fwd, fwd
        rev, new_rev = new_rev, rev
        it += 1
        converged = delta < tol
    belief = unary.copy()
    for e in range(E):
        for s in range(S):
            belief[ej[e], s] += fwd[e, s]
    for e in range(E):
        for s in range(S):
            belief[ei[e], s] += rev[e, s]
    return belief, it, converged


def minsum(unary, ei, ej, pair, damping=0.5, tol=1e-9, max_iter=50):
    """Synchronous damped min-sum on a pairwise graph.

    Returns ``(labels, belief, iterations, converged)``; labels take the
    lowest-index minimiser of each node's belief.
    """
    unary = np.ascontiguousarray(unary, dtype=np.float64)
    ei = np.ascontiguousarray(ei, dtype=np.int64)
    ej = np.ascontiguousarray(ej, dtype=np.int64)
    pair = np.ascontiguousarray(pair, dtype=np.float64).reshape(len(ei), unary.shape[1], unary.shape[1])
    if _accel.numba_enabled():
        belief, it, conv = _minsum_numba(unary, ei, ej, pair, float(damping), float(tol), int(max_iter))
    else:
        belief, it, conv = _minsum_numpy(unary, ei, ej, pair, float(damping), float(tol), int(max_iter))
    return np.argmin(belief, axis=1), belief, int(it), bool(conv)


# -- energies and exhaustive search ----------------------------------------

def labeling_energy(labels, unary, ei, ej, pair):
    """Total energy, summed unary terms first then edges, in index order."""
    labels = np.asarray(labels)
    total = 0.0
    for k in range(unary.shape[0]):
        total += unary[k, labels[k]]
    for e in range(len(ei)):
        total += pair[e, labels[ei[e]], labels[ej[e]]]
    return total


def _brute_numpy(unary, ei, ej, pair):
    K, S = unary.shape
    total = np.zeros((S,) * K)
    for k in range(K):
        shape = [1] * K
        shape[k] = S
        total = total + unary[k].reshape(shape)
    for e in range(len(ei)):
        shape = [1] * K
        shape[ei[e]] = S
        shape[ej[e]] = S
        total = total + pair[e].reshape(shape)
    flat = int(np.argmin(total))
    return np.array(np.unravel_index(flat, total.shape), dtype=np.int64)


@njit(cache=True)
def _brute_numba(unary, ei, ej, pair):
    K, S = unary.shape
    E = ei.shape[0]
    lab = np.zeros(K, dtype=np.int64)
    best = np.zeros(K, dtype=np.int64)
    best_e = np.inf
    while True:
        tot = 0.0
        for k in range(K):
            tot += unary[k, lab[k]]
        for e in range(E):
            tot += pair[e, lab[ei[e]], lab[ej[e]]]
        if tot < best_e:
            best_e = tot
            best[:] = lab
        # odometer increment, last node fastest (lexicographic order)
        k = K - 1
        while k >= 0:
            lab[k] += 1
            if lab[k] < S:
                break
            lab[k] = 0
            k -= 1
        if k < 0:
            break
    return best


def brute_force(unary, ei, ej, pair):
    """Exact joint minimiser, lexicographically first among ties."""
    unary = np.ascontiguousarray(unary, dtype=np.float64)
    ei = np.ascontiguousarray(ei, dtype=np.int64)
    ej = np.ascontiguousarray(ej, dtype=np.int64)
    pair = np.ascontiguousarray(pair, dtype=np.float64).reshape(len(ei), unary.shape[1], unary.shape[1])
    if unary.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    if _accel.numba_enabled():
        return _brute_numba(unary, ei, ej, pair)
    return _brute_numpy(unary, ei, ej, pair)
