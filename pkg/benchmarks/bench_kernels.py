#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the three hot kernels (piece evaluation, piece gradients, weighted
Gram assembly) on compiled mid-size problems and a full barrier solve under
each backend.  Run from the repository root:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from posgp.gp import _Compiled, SolveOptions, normalize
from posgp.kernels import (
    _build_numba,
    _eval_pieces_np,
    _piece_grads_np,
    _weighted_gram_np,
)
from posgp.apps import SisNetwork, build_sis_problem
from posgp.synth import build_hankel_gp, build_robust_gp


def _problems():
    rng = np.random.default_rng(0)
    n = 24
    A = (rng.random((n, n)) < 0.5).astype(float)
    np.fill_diagonal(A, 0.0)
    A = np.maximum(A, A.T)
    sn = SisNetwork(A, eps=1.0, gamma=0.01)
    sp = build_sis_problem(sn)
    robust = build_robust_gp(sp.system, sp.cost, sp.theta, sp.uncertainty, sn.gamma)

    sn4 = SisNetwork(A[:4, :4] + np.eye(4) * 0.0 + 0.3, eps=0.0, gamma=0.01)
    sp4 = build_sis_problem(sn4, reparametrize=True)
    hankel = build_hankel_gp(sp4.system, sp4.cost, sp4.theta, 5.0)
    return [("robust-sis-24", robust), ("hankel-sis-4", hankel)]


def bench_kernels(problem, reps=200):
    comp = _Compiled(problem.vars, (problem.objective,) + problem.posy_constraints, ())
    z = np.zeros(comp.n)
    outer = np.ones(comp.P)

    nb_eval, nb_grads, nb_gram = _build_numba()
    impls = {
        "numba": (nb_eval, nb_grads, nb_gram),
        "numpy": (_eval_pieces_np, _piece_grads_np, _weighted_gram_np),
    }
    results = {}
    for name, (f_eval, f_grads, f_gram) in impls.items():
        vals, w = f_eval(comp.logc, comp.tptr, comp.tvar, comp.texp,
                         comp.piece_ptr, comp.nnz_term, z)
        G = f_grads(comp.tptr, comp.tvar, comp.texp, comp.piece_ptr,
                    comp.nnz_term, w, comp.n)
        H = f_gram(comp.pair_term, comp.pair_i, comp.pair_j, comp.pair_val,
                   comp.piece_of_term, w, outer, comp.n)
        t0 = time.perf_counter()
        for _ in range(reps):
            vals, w = f_eval(comp.logc, comp.tptr, comp.tvar, comp.texp,
                             comp.piece_ptr, comp.nnz_term, z)
            f_grads(comp.tptr, comp.tvar, comp.texp, comp.piece_ptr,
                    comp.nnz_term, w, comp.n)
            f_gram(comp.pair_term, comp.pair_i, comp.pair_j, comp.pair_val,
                   comp.piece_of_term, w, outer, comp.n)
        results[name] = (time.perf_counter() - t0) / reps, vals, G, H
    # both backends must compute the same quantities
    for a, b in zip(results["numba"][1:], results["numpy"][1:]):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    return comp, {k: v[0] for k, v in results.items()}


def bench_solve(problem, backend, reps=3):
    import importlib
    import os

    import posgp.kernels as K
    import posgp.gp as G

    os.environ["POSGP_BACKEND"] = backend
    importlib.reload(K)
    importlib.reload(G)
    G.solve(normalize(problem), SolveOptions())  # warm the JIT before timing
    t0 = time.perf_counter()
    for _ in range(reps):
        res = G.solve(normalize(problem), SolveOptions())
    return (time.perf_counter() - t0) / reps, res.status.value


def main():
    for name, problem in _problems():
        comp, times = bench_kernels(problem)
        print(f"{name}: {comp.P} pieces, {len(comp.logc)} terms, {comp.n} variables")
        for backend, dt in times.items():
            print(f"  kernels/{backend}: {dt * 1e3:8.3f} ms per iteration triple")
        for backend in ("numba", "numpy"):
            dt, status = bench_solve(problem, backend)
            print(f"  solve/{backend}:   {dt * 1e3:8.1f} ms per solve ({status})")
    print("backends agree to 1e-12 on values, gradients and Gram matrices")


if __name__ == "__main__":
    main()
