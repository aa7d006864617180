import numpy as np
import pytest

from instgen import erdos_renyi, random_dag
from posgp.apps import (
    BufferNetwork,
    SisNetwork,
    build_buffer_network,
    build_sis_problem,
    pagerank,
)
from posgp.gp import SolveStatus, solve
from posgp.synth import build_h2_gp, build_hinf_gp, build_robust_gp, minimize_gamma
from posgp.sysmodel import h2_norm, hinf_norm, instantiate, spectral_abscissa


class TestBufferAssembly:
    def test_two_node_chain(self):
        bn = BufferNetwork(2, [(0, 1, 1.0)], alpha=0.0)
        bp = build_buffer_network(bn)
        assert bp.origins == [0] and bp.destinations == [1]
        S = instantiate(bp.system, {"psi0": 0.7, "phi1": 1.3})
        np.testing.assert_allclose(S.F, [[-0.7, 0.0], [0.7, -1.3]], atol=1e-14)
        np.testing.assert_allclose(S.G, [[1.0], [0.0]])

    def test_alpha_zero_drops_flow_rows(self):
        bn = BufferNetwork(2, [(0, 1, 1.0)], alpha=0.0)
        bp = build_buffer_network(bn)
        assert bp.system.C.shape == (2, 2)
        np.testing.assert_allclose(
            bp.system.C.evaluate({"psi0": 1.0, "phi1": 1.0}), np.eye(2)
        )

    def test_alpha_positive_adds_edge_rows(self):
        bn = BufferNetwork(2, [(0, 1, 1.0)], alpha=0.5)
        bp = build_buffer_network(bn)
        assert bp.system.C.shape == (3, 2)
        C = bp.system.C.evaluate({"psi0": 2.0, "phi1": 1.0})
        assert C[2, 0] == pytest.approx(0.5 * 1.0 * 2.0)

    def test_default_weights_are_inverse_outdegree(self):
        bn = BufferNetwork(3, [(0, 1), (0, 2)])
        bp = build_buffer_network(bn)
        assert all(w == pytest.approx(0.5) for _, _, w in bp.resolved_edges)

    def test_no_origin_rejected(self):
        with pytest.raises(ValueError):
            build_buffer_network(BufferNetwork(2, [(0, 1), (1, 0)]))

    def test_isolated_node_flagged(self):
        bn = BufferNetwork(3, [(0, 1)])
        bp = build_buffer_network(bn)
        assert 2 in bp.destinations
        assert any("isolated" in w for w in bp.warnings)

    def test_flow_conservation_structure(self):
        # column sums of A vanish on non-destination columns at any theta > 0
        rng = np.random.default_rng(0)
        for _ in range(10):
            n = int(rng.integers(4, 10))
            bn = BufferNetwork(n, random_dag(rng, n))
            bp = build_buffer_network(bn)
            point = {nm: float(rng.uniform(0.3, 3.0)) for nm in bp.system.vars.names}
            S = instantiate(bp.system, point)
            colsum = S.F.sum(axis=0)
            for i in range(n):
                if i not in bp.destinations:
                    assert colsum[i] == pytest.approx(0.0, abs=1e-12)

    def test_cost_and_boxes(self):
        bn = BufferNetwork(2, [(0, 1, 1.0)], phi_bar=3.0, psi_bar=4.0)
        bp = build_buffer_network(bn)
        assert bp.cost.cost_value({"psi0": 1.5, "phi1": 2.0}) == pytest.approx(3.5)
        vals = [f({"psi0": 4.0, "phi1": 3.0}) for f in bp.theta.constraints]
        assert sorted(vals) == pytest.approx([1.0, 1.0])

    def test_unbudgeted_min_gamma_reaches_box_corner(self):
        # with upper bounds only, the least certifiable gain bound sits at
        # the all-bounds-active corner; exercises the adaptive t-growth path
        rng = np.random.default_rng(7)
        bn = BufferNetwork(16, random_dag(rng, 16), alpha=0.1)
        bp = build_buffer_network(bn)
        mg = minimize_gamma(build_hinf_gp, bp.system, bp.cost, bp.theta)
        assert mg.gamma is not None
        corner = {nm: 5.0 for nm in bp.system.vars.names}
        want = hinf_norm(instantiate(bp.system, corner))
        assert mg.gamma == pytest.approx(want, rel=2e-3)
        assert mg.gamma > want  # strict margins keep the bound certifiable

    def test_hinf_round_trip_on_diamond(self):
        bn = BufferNetwork(4, [(0, 1), (0, 2), (1, 3), (2, 3)], alpha=0.1)
        bp = build_buffer_network(bn)
        mg = minimize_gamma(build_hinf_gp, bp.system, bp.cost, bp.theta)
        assert mg.gamma is not None
        res = solve(build_hinf_gp(bp.system, bp.cost, bp.theta, 1.5 * mg.gamma))
        assert res.status is SolveStatus.OPTIMAL
        theta = {nm: res.point[nm] for nm in bp.system.vars.names}
        assert hinf_norm(instantiate(bp.system, theta)) < 1.5 * mg.gamma


class TestSisAssembly:
    def _net(self, rng, n=5, eps=0.0):
        A = erdos_renyi(rng, n, 0.4)
        return SisNetwork(A, eps=eps)

    def test_state_matrix(self):
        A = np.array([[0.0, 1.0], [2.0, 0.0]])
        sp = build_sis_problem(SisNetwork(A))
        point = {"beta0": 0.15, "beta1": 0.12, "delta0": 1.5, "delta1": 1.2}
        S = instantiate(sp.system, point)
        np.testing.assert_allclose(
            S.F, [[-1.5, 0.15 * 1.0], [0.12 * 2.0, -1.2]], atol=1e-14
        )
        np.testing.assert_allclose(S.G, np.diag([0.15, 0.12]))
        np.testing.assert_allclose(S.H, np.eye(2))

    def test_cost_normalization_endpoints(self):
        rng = np.random.default_rng(1)
        sn = self._net(rng)
        sp = build_sis_problem(sn)
        n = sn.n
        corner = {f"beta{i}": sn.beta_max for i in range(n)}
        corner.update({f"delta{i}": sn.delta_min for i in range(n)})
        assert sp.cost.cost_value(corner) == pytest.approx(0.0, abs=1e-12)
        full = {f"beta{i}": sn.beta_min for i in range(n)}
        full.update({f"delta{i}": sn.delta_max for i in range(n)})
        assert sp.cost.cost_value(full) == pytest.approx(2.0 * n, rel=1e-12)

    def test_uncertainty_is_single_full_block(self):
        rng = np.random.default_rng(2)
        sp = build_sis_problem(self._net(rng, eps=0.5))
        assert sp.uncertainty.full_blocks == (5,)
        assert sp.uncertainty.scalar_blocks == 0
        assert sp.uncertainty.eps == 0.5

    def test_reparametrization_consistency(self):
        rng = np.random.default_rng(3)
        sn = self._net(rng)
        plain = build_sis_problem(sn, reparametrize=False)
        rep = build_sis_problem(sn, reparametrize=True)
        assert rep.system.has_r0_factorization
        for _ in range(10):
            point = {f"beta{i}": float(rng.uniform(sn.beta_min, sn.beta_max))
                     for i in range(sn.n)}
            point.update({f"delta{i}": float(rng.uniform(sn.delta_min, sn.delta_max))
                          for i in range(sn.n)})
            rp = rep.reparam_point(point)
            # box maps exactly onto [delta_min, delta_max]
            cmin = 1.0 / (sn.delta_max - sn.delta_min + 1.0)
            assert all(cmin - 1e-12 <= rp[f"dc{i}"] <= 1.0 + 1e-12 for i in range(sn.n))
            F1 = instantiate(plain.system, point).F
            F2 = instantiate(rep.system, rp).F
            np.testing.assert_allclose(F1, F2, atol=1e-12)
            back = rep.delta_values(rp)
            for i in range(sn.n):
                assert back[f"delta{i}"] == pytest.approx(point[f"delta{i}"], abs=1e-12)

    def test_reparam_box_endpoints(self):
        sn = SisNetwork(np.zeros((1, 1)))
        rep = build_sis_problem(sn, reparametrize=True)
        cmin = 1.0 / (sn.delta_max - sn.delta_min + 1.0)
        assert rep.reparam_point({"beta0": 0.1, "delta0": sn.delta_min})["dc0"] == pytest.approx(cmin)
        assert rep.reparam_point({"beta0": 0.1, "delta0": sn.delta_max})["dc0"] == pytest.approx(1.0)

    def test_star_eps_zero_reduces_to_decay(self):
        star = np.zeros((10, 10))
        star[0, 1:] = 1.0
        star[1:, 0] = 1.0
        sn = SisNetwork(star, eps=0.0, gamma=0.05)
        sp = build_sis_problem(sn)
        res = solve(build_robust_gp(sp.system, sp.cost, sp.theta, sp.uncertainty, sn.gamma))
        assert res.status is SolveStatus.OPTIMAL
        theta = {nm: res.point[nm] for nm in sp.system.vars.names}
        assert spectral_abscissa(instantiate(sp.system, theta).F) < -sn.gamma

    def test_cost_monotone_in_eps(self):
        rng = np.random.default_rng(4)
        A = erdos_renyi(rng, 6, 0.4)
        norm_a = float(np.linalg.norm(A, 2))
        costs = []
        for frac in (0.0, 0.1, 0.2, 0.3):
            sn = SisNetwork(A, eps=frac * norm_a, gamma=0.02)
            sp = build_sis_problem(sn)
            res = solve(build_robust_gp(sp.system, sp.cost, sp.theta, sp.uncertainty, sn.gamma))
            assert res.status is SolveStatus.OPTIMAL
            costs.append(sp.cost.cost_value(res.point))
        for a, b in zip(costs, costs[1:]):
            assert b >= a - 1e-9

    def test_reparametrized_h2_round_trip(self):
        rng = np.random.default_rng(5)
        A = erdos_renyi(rng, 4, 0.5)
        sn = SisNetwork(A)
        sp = build_sis_problem(sn, reparametrize=True)
        S0 = instantiate(sp.system, sp.reparam_point(
            {**{f"beta{i}": sn.beta_max for i in range(4)},
             **{f"delta{i}": sn.delta_max for i in range(4)}}))
        g = h2_norm(S0) * 1.5
        res = solve(build_h2_gp(sp.system, sp.cost, sp.theta, g))
        assert res.status is SolveStatus.OPTIMAL
        theta = {nm: res.point[nm] for nm in sp.system.vars.names}
        assert h2_norm(instantiate(sp.system, theta)) < g

    def test_investment_table(self):
        rng = np.random.default_rng(6)
        sn = self._net(rng)
        sp = build_sis_problem(sn)
        point = {f"beta{i}": sn.beta_max for i in range(sn.n)}
        point.update({f"delta{i}": sn.delta_min for i in range(sn.n)})
        rows = sp.investment_table(point)
        assert len(rows) == sn.n
        assert all(r["f_beta"] == pytest.approx(0.0, abs=1e-12) for r in rows)
        assert all(r["g_delta"] == pytest.approx(0.0, abs=1e-12) for r in rows)
        assert sum(r["pagerank"] for r in rows) == pytest.approx(1.0, rel=1e-9)


class TestPagerank:
    def test_uniform_on_ring(self):
        n = 6
        A = np.zeros((n, n))
        for i in range(n):
            A[i, (i + 1) % n] = 1.0
        pr = pagerank(A)
        np.testing.assert_allclose(pr, np.full(n, 1.0 / n), atol=1e-10)

    def test_sums_to_one_with_dangling(self):
        A = np.zeros((3, 3))
        A[0, 1] = 1.0
        pr = pagerank(A)
        assert pr.sum() == pytest.approx(1.0, rel=1e-9)
