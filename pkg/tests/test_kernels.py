import os
import subprocess
import sys

import numpy as np
import pytest

from posgp.gp import _Compiled
from posgp.kernels import (
    BACKEND,
    _build_numba,
    _eval_pieces_np,
    _piece_grads_np,
    _weighted_gram_np,
)
from posgp.posy import Monomial, Posynomial, VarSpace


def _compiled_fixture(rng, n_vars=6, n_pieces=12):
    names = [f"v{i}" for i in range(n_vars)]
    vs = VarSpace(names)
    pieces = []
    for _ in range(n_pieces):
        terms = [
            Monomial(
                float(rng.uniform(0.1, 3.0)),
                {nm: float(rng.uniform(-2, 2)) for nm in names if rng.random() < 0.5},
            )
            for _ in range(int(rng.integers(1, 6)))
        ]
        pieces.append(Posynomial(terms))
    return _Compiled(vs, pieces, ())


class TestBackendEquivalence:
    def test_kernel_outputs_match(self):
        nb_eval, nb_grads, nb_gram = _build_numba()
        rng = np.random.default_rng(0)
        for _ in range(10):
            comp = _compiled_fixture(rng)
            z = rng.uniform(-1, 1, size=comp.n)
            outer = rng.uniform(0.1, 2.0, size=comp.P)
            v1, w1 = nb_eval(comp.logc, comp.tptr, comp.tvar, comp.texp,
                             comp.piece_ptr, comp.nnz_term, z)
            v2, w2 = _eval_pieces_np(comp.logc, comp.tptr, comp.tvar, comp.texp,
                                     comp.piece_ptr, comp.nnz_term, z)
            np.testing.assert_allclose(v1, v2, rtol=1e-13, atol=1e-13)
            np.testing.assert_allclose(w1, w2, rtol=1e-12, atol=1e-14)
            g1 = nb_grads(comp.tptr, comp.tvar, comp.texp, comp.piece_ptr,
                          comp.nnz_term, w1, comp.n)
            g2 = _piece_grads_np(comp.tptr, comp.tvar, comp.texp, comp.piece_ptr,
                                 comp.nnz_term, w2, comp.n)
            np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-14)
            h1 = nb_gram(comp.pair_term, comp.pair_i, comp.pair_j, comp.pair_val,
                         comp.piece_of_term, w1, outer, comp.n)
            h2 = _weighted_gram_np(comp.pair_term, comp.pair_i, comp.pair_j,
                                   comp.pair_val, comp.piece_of_term, w2, outer, comp.n)
            np.testing.assert_allclose(h1, h2, rtol=1e-12, atol=1e-13)

    def test_backend_selection(self):
        choice = os.environ.get("POSGP_BACKEND", "auto")
        if choice in ("auto", "numba"):
            # numba is installed in this environment, so auto selection picks it
            assert BACKEND == "numba"
        else:
            assert BACKEND == "numpy"

    def test_numpy_env_flag_selects_fallback(self):
        code = (
            "import posgp.kernels as k; print(k.BACKEND)"
        )
        out = subprocess.run(
            [sys.executable, "-c", code],
            env={**os.environ, "POSGP_BACKEND": "numpy"},
            capture_output=True, text=True, check=True,
        )
        assert out.stdout.strip() == "numpy"

    def test_bad_env_flag_rejected(self):
        code = "import posgp.kernels"
        out = subprocess.run(
            [sys.executable, "-c", code],
            env={**os.environ, "POSGP_BACKEND": "fortran"},
            capture_output=True, text=True,
        )
        assert out.returncode != 0

    def test_solve_matches_across_backends(self):
        script = """
import json
from posgp.posy import Monomial, Posynomial, VarSpace
from posgp.gp import GpProblem, solve
vs = VarSpace(["x", "y"])
p = GpProblem(vs, Posynomial.var("x") + Posynomial.var("y"),
              [Posynomial([Monomial(1.0, {"x": -1.0, "y": -1.0})]),
               Posynomial([Monomial(0.25, {"x": 1.0})])])
r = solve(p)
print(json.dumps([r.status.value, r.point, r.objective_value]))
"""
        outs = []
        for backend in ("numba", "numpy"):
            out = subprocess.run(
                [sys.executable, "-c", script],
                env={**os.environ, "POSGP_BACKEND": backend},
                capture_output=True, text=True, check=True,
            )
            outs.append(out.stdout.strip().splitlines()[-1])
        import json

        a, b = (json.loads(o) for o in outs)
        assert a[0] == b[0] == "optimal"
        for nm in ("x", "y"):
            assert a[1][nm] == pytest.approx(b[1][nm], rel=1e-9)
