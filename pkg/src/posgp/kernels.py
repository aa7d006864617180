"""Hot numeric kernels for log-domain barrier iterations.

A compiled geometric program is a flat term table: every monomial term of
every piece (objective first, then one piece per constraint) contributes one
row with a log-coefficient and a sparse exponent vector.  The barrier solver
calls three kernels per Newton iteration:

* ``eval_pieces``    -- per-piece log-sum-exp values and softmax term weights
* ``piece_grads``    -- dense matrix of per-piece gradients
* ``weighted_gram``  -- sum_p outer_p * sum_{t in p} w_t a_t a_t^T

These dominate solve time, so they carry numba ``@njit`` implementations with
a pure-numpy fallback.  The backend is picked once at import from the
``POSGP_BACKEND`` environment variable: ``numba`` (default when importable),
or ``numpy`` to force the fallback.  ``benchmarks/bench_kernels.py`` compares
the two.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = ["BACKEND", "eval_pieces", "piece_grads", "weighted_gram"]


# ---------------------------------------------------------------------------
# pure-numpy fallback


def _eval_pieces_np(logc, tptr, tvar, texp, piece_ptr, nnz_term, z):
    y = logc + np.bincount(nnz_term, weights=texp * z[tvar], minlength=logc.shape[0])
    starts = piece_ptr[:-1]
    m = np.maximum.reduceat(y, starts)
    npieces = piece_ptr.shape[0] - 1
    piece_of_term = np.repeat(np.arange(npieces), np.diff(piece_ptr))
    ey = np.exp(y - m[piece_of_term])
    s = np.add.reduceat(ey, starts)
    vals = m + np.log(s)
    w = ey / s[piece_of_term]
    return vals, w


def _piece_grads_np(tptr, tvar, texp, piece_ptr, nnz_term, w, n):
    npieces = piece_ptr.shape[0] - 1
    piece_of_term = np.repeat(np.arange(npieces), np.diff(piece_ptr))
    rows = piece_of_term[nnz_term]
    flat = np.bincount(rows * n + tvar, weights=w[nnz_term] * texp, minlength=npieces * n)
    return flat.reshape(npieces, n)


def _weighted_gram_np(pair_term, pair_i, pair_j, pair_val, piece_of_term, w, outer, n):
    wt = (outer[piece_of_term] * w)[pair_term] * pair_val
    flat = np.bincount(pair_i * n + pair_j, weights=wt, minlength=n * n)
    return flat.reshape(n, n)


# ---------------------------------------------------------------------------
# numba kernels (same contracts, explicit loops)


def _build_numba():
    from numba import njit

    @njit(cache=True)
    def eval_pieces_nb(logc, tptr, tvar, texp, piece_ptr, nnz_term, z):  # pragma: no cover
        T = logc.shape[0]
        y = np.empty(T)
        for t in range(T):
            acc = logc[t]
            for q in range(tptr[t], tptr[t + 1]):
                acc += texp[q] * z[tvar[q]]
            y[t] = acc
        P = piece_ptr.shape[0] - 1
        vals = np.empty(P)
        w = np.empty(T)
        for p in range(P):
            a, b = piece_ptr[p], piece_ptr[p + 1]
            m = y[a]
            for t in range(a + 1, b):
                if y[t] > m:
                    m = y[t]
            s = 0.0
            for t in range(a, b):
                s += math.exp(y[t] - m)
            v = m + math.log(s)
            vals[p] = v
            for t in range(a, b):
                w[t] = math.exp(y[t] - v)
        return vals, w

    @njit(cache=True)
    def piece_grads_nb(tptr, tvar, texp, piece_ptr, nnz_term, w, n):  # pragma: no cover
        P = piece_ptr.shape[0] - 1
        G = np.zeros((P, n))
        for p in range(P):
            for t in range(piece_ptr[p], piece_ptr[p + 1]):
                wt = w[t]
                for q in range(tptr[t], tptr[t + 1]):
                    G[p, tvar[q]] += wt * texp[q]
        return G

    @njit(cache=True)
    def weighted_gram_nb(pair_term, pair_i, pair_j, pair_val, piece_of_term, w, outer, n):  # pragma: no cover
        H = np.zeros((n, n))
        for q in range(pair_term.shape[0]):
            t = pair_term[q]
            H[pair_i[q], pair_j[q]] += outer[piece_of_term[t]] * w[t] * pair_val[q]
        return H

    return eval_pieces_nb, piece_grads_nb, weighted_gram_nb


def _pick_backend():
    choice = os.environ.get("POSGP_BACKEND", "auto").lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"POSGP_BACKEND must be 'numba' or 'numpy', got {choice!r}")
    if choice == "numpy":
        return "numpy", (_eval_pieces_np, _piece_grads_np, _weighted_gram_np)
    try:
        return "numba", _build_numba()
    except ImportError:
        if choice == "numba":
            raise
        return "numpy", (_eval_pieces_np, _piece_grads_np, _weighted_gram_np)


BACKEND, (eval_pieces, piece_grads, weighted_gram) = _pick_backend()
