import math

import numpy as np
import pytest

from instgen import random_stable_system
from posgp.posy import DiagMonoMatrix, Monomial, PosyMatrix, Posynomial, VarSpace
from posgp.sysmodel import (
    NumericSystem,
    ParamSystem,
    build_bar_matrices,
    certified_decay_rate,
    certified_decay_rate_delay,
    delay_decay_check,
    delay_gains,
    grammians,
    grammians_kron,
    h2_norm,
    hankel_singular_values,
    hinf_freq_sweep,
    hinf_norm,
    instantiate,
    norm_report,
    robust_abscissa_estimate,
    schatten_norm,
    simulate_delay_decay,
    spectral_abscissa,
)


def _sys(F, G, H, **kw):
    return NumericSystem(np.atleast_2d(F), np.atleast_2d(G), np.atleast_2d(H), **kw)


class TestNumericSystem:
    def test_rejects_non_metzler(self):
        with pytest.raises(ValueError):
            _sys([[-1.0, -0.5], [0.0, -1.0]], np.eye(2), np.eye(2))

    def test_rejects_negative_input_map(self):
        with pytest.raises(ValueError):
            _sys([[-1.0]], [[-1.0]], [[1.0]])

    def test_delay_needs_both_blocks(self):
        with pytest.raises(ValueError):
            _sys([[-1.0]], [[1.0]], [[1.0]], Ad=[[0.1]])


class TestInstantiate:
    def test_scalar_assembly(self):
        vs = VarSpace(["th"])
        ps = ParamSystem(
            vs,
            PosyMatrix(1, 1),
            DiagMonoMatrix((Monomial.var("th"),)),
            PosyMatrix.from_numeric([[1.0]]),
            PosyMatrix.from_numeric([[1.0]]),
        )
        S = instantiate(ps, {"th": 2.0})
        assert S.F[0, 0] == -2.0
        assert S.G[0, 0] == 1.0 and S.H[0, 0] == 1.0

    def test_offdiagonal_posynomial(self):
        vs = VarSpace(["t1", "t2"])
        at = PosyMatrix(2, 2)
        at.set(0, 1, Posynomial([Monomial(1.0, {"t1": 1.0, "t2": 1.0})]))
        ps = ParamSystem(
            vs,
            at,
            DiagMonoMatrix((Monomial.var("t1"), Monomial.var("t2"))),
            PosyMatrix.identity(2),
            PosyMatrix.identity(2),
        )
        S = instantiate(ps, {"t1": 2.0, "t2": 3.0})
        assert S.F[0, 1] == 6.0

    def test_symbolic_numeric_round_trip(self):
        from instgen import random_param_system

        rng = np.random.default_rng(0)
        for _ in range(10):
            ps, theta0, _, _ = random_param_system(rng, 3, 2, 2)
            point = {nm: float(rng.uniform(0.5, 2.0)) for nm in ps.vars.names}
            S = instantiate(ps, point)
            np.testing.assert_allclose(
                S.F + ps.R.evaluate(point), ps.Atilde.evaluate(point), atol=1e-12
            )


class TestSpectralAbscissa:
    def test_diagonal(self):
        assert spectral_abscissa(-np.eye(2)) == pytest.approx(-1.0)

    def test_symmetric_2x2(self):
        # eigenvalues -1 +- 0.5
        assert spectral_abscissa([[-1.0, 0.5], [0.5, -1.0]]) == pytest.approx(-0.5)

    def test_antidiagonal(self):
        assert spectral_abscissa([[0.0, 1.0], [1.0, 0.0]]) == pytest.approx(1.0)


class TestH2Norm:
    def test_scalar_closed_form(self):
        # W_C = 1/2 for F=-1, G=H=1
        assert h2_norm(_sys([[-1.0]], [[1.0]], [[1.0]])) == pytest.approx(
            1.0 / math.sqrt(2.0), rel=1e-12
        )

    def test_zero_output(self):
        S = _sys([[-1.0]], [[1.0]], [[0.0]])
        assert h2_norm(S) == 0.0

    def test_diagonal_decoupled(self):
        S = _sys(np.diag([-1.0, -2.0]), np.eye(2), np.eye(2))
        assert h2_norm(S) == pytest.approx(math.sqrt(0.5 + 0.25), rel=1e-12)

    def test_requires_hurwitz(self):
        with pytest.raises(ValueError):
            h2_norm(_sys([[1.0]], [[1.0]], [[1.0]]))


class TestHinfNorm:
    def test_scalar(self):
        assert hinf_norm(_sys([[-1.0]], [[1.0]], [[1.0]])) == pytest.approx(1.0)

    def test_zero_input(self):
        assert hinf_norm(_sys([[-1.0]], [[0.0]], [[1.0]])) == 0.0

    def test_static_gain_sum(self):
        S = _sys(np.diag([-1.0, -2.0]), np.array([[1.0], [1.0]]), np.array([[1.0, 1.0]]))
        assert hinf_norm(S) == pytest.approx(1.5, rel=1e-12)

    def test_freq_sweep_agrees_and_peaks_low(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            S = random_stable_system(rng, int(rng.integers(1, 5)))
            static = hinf_norm(S)
            swept = hinf_freq_sweep(S)
            assert swept == pytest.approx(static, rel=1e-6)
            lowest = hinf_freq_sweep(S, n_points=1, w_lo=1e-3, w_hi=1e-3)
            assert swept == pytest.approx(lowest, rel=1e-9)


class TestHankel:
    def test_scalar(self):
        sv = hankel_singular_values(_sys([[-1.0]], [[1.0]], [[1.0]]))
        assert sv == pytest.approx([0.5], rel=1e-10)

    def test_uncontrollable(self):
        sv = hankel_singular_values(_sys(np.diag([-1.0, -2.0]), np.zeros((2, 1)), np.eye(2)))
        assert sv == pytest.approx([0.0, 0.0], abs=1e-12)

    def test_diagonal_modes(self):
        sv = hankel_singular_values(_sys(np.diag([-1.0, -2.0]), np.eye(2), np.eye(2)))
        assert sv == pytest.approx([0.5, 0.25], rel=1e-10)

    def test_grammian_routes_agree(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            S = random_stable_system(rng, int(rng.integers(1, 7)))
            wc, wo = grammians(S)
            wck, wok = grammians_kron(S)
            assert np.abs(wc - wck).max() <= 1e-8
            assert np.abs(wo - wok).max() <= 1e-8

    def test_schatten_consistency(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            S = random_stable_system(rng, 4)
            sv = hankel_singular_values(S)
            s2 = schatten_norm(sv, 2)
            assert s2 == pytest.approx(math.sqrt(sum(s**2 for s in sv)), abs=1e-10)
            vals = [schatten_norm(sv, p) for p in (1, 2, 4, 6)]
            for a, b in zip(vals, vals[1:]):
                assert b <= a * (1 + 1e-12)

    def test_odd_order_allowed_for_oracle(self):
        # the oracle itself handles any positive order; only the GP needs even p
        assert schatten_norm([0.5, 0.25], 1) == pytest.approx(0.75)


class TestBarMatrices:
    def test_numeric_vs_posy(self):
        rng = np.random.default_rng(4)
        B = rng.random((3, 2)) * (rng.random((3, 2)) < 0.7)
        C = rng.random((2, 3)) * (rng.random((2, 3)) < 0.7)
        nb1, nb2, nc1, nc2 = build_bar_matrices(B, C)
        pb1, pb2, pc1, pc2 = build_bar_matrices(
            PosyMatrix.from_numeric(B), PosyMatrix.from_numeric(C)
        )
        np.testing.assert_allclose(pb1.evaluate({}), nb1, atol=1e-14)
        np.testing.assert_allclose(pb2.evaluate({}), nb2, atol=1e-14)
        np.testing.assert_allclose(pc1.evaluate({}), nc1, atol=1e-14)
        np.testing.assert_allclose(pc2.evaluate({}), nc2, atol=1e-14)

    def test_observability_resolvent(self):
        import scipy.linalg

        rng = np.random.default_rng(5)
        S = random_stable_system(rng, 3)
        _, _, c1, c2 = build_bar_matrices(S.G, S.H)
        nx, ny = 3, S.H.shape[0]
        mo = np.kron(S.F.T, np.eye(ny * nx)) + np.kron(np.eye(nx * ny), S.F)
        wo = -c1 @ np.linalg.solve(mo, c2)
        want = scipy.linalg.solve_continuous_lyapunov(S.F.T, -S.H.T @ S.H)
        np.testing.assert_allclose(wo, want, atol=1e-10)


class TestRobustEstimate:
    def test_zero_eps(self):
        S = _sys([[-1.0]], [[1.0]], [[1.0]])
        assert robust_abscissa_estimate(S, [1], 0.0) == pytest.approx(-1.0)

    def test_scalar_worst_case(self):
        S = _sys([[-1.0]], [[1.0]], [[1.0]])
        assert robust_abscissa_estimate(S, [1], 0.3, samples=50) == pytest.approx(-0.7)

    def test_disconnected_channel(self):
        S = _sys([[-1.0]], [[0.0]], [[1.0]])
        assert robust_abscissa_estimate(S, [1], 5.0, samples=50) == pytest.approx(-1.0)

    def test_monotone_in_samples(self):
        rng = np.random.default_rng(6)
        S = random_stable_system(rng, 3, nw=3, ny=3)
        vals = [
            robust_abscissa_estimate(S, [2, 1], 0.5, samples=s, seed=7)
            for s in (10, 100, 500)
        ]
        assert vals[0] <= vals[1] <= vals[2]

    def test_bad_partition(self):
        S = _sys([[-1.0]], [[1.0]], [[1.0]])
        with pytest.raises(ValueError):
            robust_abscissa_estimate(S, [2], 0.1)


class TestDelay:
    def test_scalar_gains(self):
        S = _sys([[-2.0]], [[1.0]], [[1.0]], Ad=[[0.5]], h=1.0)
        l1, linf = delay_gains(S)
        assert l1 == pytest.approx(1.0 / 1.5, rel=1e-12)
        assert linf == pytest.approx(1.0 / 1.5, rel=1e-12)

    def test_zero_output_map(self):
        S = _sys([[-2.0]], [[1.0]], [[0.0]], Ad=[[0.5]], Cd=[[0.0]], h=1.0)
        assert delay_gains(S) == (0.0, 0.0)

    def test_delay_free_matches_induced_norms(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            S0 = random_stable_system(rng, 3)
            S = NumericSystem(S0.F, S0.G, S0.H, Ad=np.zeros((3, 3)), h=0.5)
            l1, linf = delay_gains(S)
            M = S0.H @ np.linalg.solve(-S0.F, S0.G)
            assert l1 == pytest.approx(np.abs(M).sum(axis=0).max(), rel=1e-12)
            assert linf == pytest.approx(np.abs(M).sum(axis=1).max(), rel=1e-12)

    def test_decay_check_scalar(self):
        S = _sys([[-2.0]], [[1.0]], [[1.0]], Ad=[[0.5]], h=1.0)
        assert delay_decay_check(S, 0.1)          # -2 + 0.1 + 0.5 e^0.1 < 0
        assert not delay_decay_check(S, 10.0)     # e^10 * 0.5 dominates

    def test_decay_check_delay_free_reduction(self):
        S = _sys([[-2.0]], [[1.0]], [[1.0]], Ad=[[0.0]], h=1.0)
        assert delay_decay_check(S, 1.9)
        assert not delay_decay_check(S, 2.1)

    def test_certified_decay_matches_simulation(self):
        S = _sys([[-2.0]], [[1.0]], [[1.0]], Ad=[[0.5]], h=1.0)
        rho = certified_decay_rate_delay(S)
        sim = simulate_delay_decay(S, t_final=40.0)
        assert sim == pytest.approx(rho, rel=0.05)


class TestCertifiedDecay:
    def test_matches_eigenvalue(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            S = random_stable_system(rng, int(rng.integers(1, 5)))
            rho = certified_decay_rate(S.F, tol=1e-10)
            assert rho == pytest.approx(-spectral_abscissa(S.F), rel=1e-8)

    def test_unstable_gives_zero(self):
        assert certified_decay_rate(np.array([[1.0]])) == 0.0


class TestNormReport:
    def test_full_report(self):
        S = _sys([[-2.0]], [[1.0]], [[1.0]])
        rep = norm_report(S)
        assert rep.spectral_abscissa == pytest.approx(-2.0)
        assert rep.h2 == pytest.approx(0.5)
        assert rep.hinf == pytest.approx(0.5)
        assert rep.hankel_sv == pytest.approx([0.25])
        assert rep.schatten[2] == pytest.approx(0.25)


class TestCertificateSuites:
    """Certificate constructions behind the synthesis equivalences."""

    def test_resolvent_certificate(self, n_cases=60):
        # F Hurwitz Metzler with -H F^{-1} g < v admits omega with
        # H omega < v and F omega + g < 0
        rng = np.random.default_rng(9)
        for _ in range(n_cases):
            S = random_stable_system(rng, int(rng.integers(1, 6)))
            F = S.F
            n = F.shape[0]
            g = rng.random(n)
            H = rng.random((int(rng.integers(1, 4)), n))
            base = -H @ np.linalg.solve(F, g)
            v = base + rng.random(H.shape[0]) + 1e-6
            gap = (v - base).min()
            bump = -np.linalg.solve(F, np.ones(n))
            slack = 0.5 * gap / max((H @ bump).max(), 1e-12)
            omega = -np.linalg.solve(F, g + slack * np.ones(n))
            assert np.all(H @ omega < v)
            assert np.all(F @ omega + g < 0)

    def test_perron_frobenius_certificates(self, n_cases=60):
        rng = np.random.default_rng(10)
        for _ in range(n_cases):
            n = int(rng.integers(1, 6))
            M = rng.random((n, n))
            M -= np.diag(np.diag(M))
            M += np.diag(rng.uniform(-2, 1, size=n))
            lam = spectral_abscissa(M)
            gamma_hi = lam + 0.1 + rng.random()
            v = np.linalg.solve(gamma_hi * np.eye(n) - M, np.ones(n))
            assert np.all(v > 0)
            assert np.all(M @ v < gamma_hi * v)
            # below the Perron root no positive certificate exists
            gamma_lo = lam - 0.1 - rng.random()
            candidates = [np.ones(n), v, rng.random(n) + 1e-3]
            for cand in candidates:
                assert (M @ cand - gamma_lo * cand).max() > 0

    def test_norm_certificate_pair(self, n_cases=60):
        # ||M|| < gamma iff the constructed (u, v) satisfies
        # M u < gamma v and M^T v < gamma u
        rng = np.random.default_rng(11)
        for _ in range(n_cases):
            n = int(rng.integers(1, 5))
            m = int(rng.integers(1, 5))
            M = rng.random((m, n)) * (rng.random((m, n)) < 0.8)
            nrm = np.linalg.norm(M, 2) if M.size else 0.0
            gamma = nrm * float(rng.uniform(0.5, 1.5)) + 1e-6
            pair = _norm_pair(M, gamma)
            if nrm < gamma:
                assert pair is not None
                u, v = pair
                assert np.all(M @ u < gamma * v)
                assert np.all(M.T @ v < gamma * u)
            else:
                assert pair is None


def _norm_pair(M, gamma):
    """(u, v) certificate that ||M|| < gamma, or None when impossible."""
    m, n = M.shape
    A = gamma**2 * np.eye(n) - M.T @ M
    try:
        u = np.linalg.solve(A, np.ones(n))
    except np.linalg.LinAlgError:
        return None
    if not np.all(u > 0):
        return None
    ratio = (M.T @ (M @ u)) / (gamma * u)
    if ratio.max() >= gamma:
        return None
    eps = gamma - ratio.max()
    # bump keeps v strictly positive when M has zero rows
    v = M @ u / (gamma - 0.5 * eps) + 1e-12 * max(1.0, float(np.abs(M @ u).max()))
    if np.all(M @ u < gamma * v) and np.all(M.T @ v < gamma * u):
        return u, v
    return None
