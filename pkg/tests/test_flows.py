import numpy as np
import pytest
from numpy.testing import assert_allclose

import capres.flows as flows
from capres import Network, build_kkt_cache, min_cost_flow, prox_flow
from capres.flows import InfeasibleScenario, KktCache, prox_kkt_residual
from capres.generators import generate_layered, generate_random_with_witness
from capres.netsimplex import dual_value, network_simplex
from oracles import mcf_oracle, prox_flow_oracle


def random_problem(seed, n=6, m=10, style="continuous"):
    inst, Z = generate_random_with_witness(n, m, 1, style, seed=seed)
    rng = np.random.default_rng(seed)
    net = inst.network.with_capacity(rng.uniform(1.0, 2.0, m))
    return net, inst.S[:, 0], Z[:, 0], rng


class TestNetworkSimplex:
    @pytest.mark.parametrize("seed", range(40))
    def test_matches_dense_oracle(self, seed):
        net, s, _, rng = random_problem(seed, n=6 + seed % 3, m=10 + seed % 5)
        cost = rng.uniform(0, 1, net.m)
        if seed % 4 == 0:
            cost = np.round(cost * 3)  # ties and zero costs
        res = network_simplex(net.n, net.tail, net.head, net.capacity, cost, s)
        want = mcf_oracle(net.n, net.tail, net.head, net.capacity, cost, s)
        assert res.artificial_flow <= 1e-12
        assert res.primal == pytest.approx(want, abs=1e-8)
        assert res.dual == pytest.approx(want, abs=1e-8)

    def test_integer_degenerate(self):
        # many equal-cost paths and integer data exercise degenerate pivots
        net = Network.from_edges(4, [(0, 1), (0, 2), (1, 3), (2, 3), (1, 2), (2, 1)], np.ones(6), np.ones(6))
        s = np.array([2.0, 0.0, 0.0, -2.0])
        res = network_simplex(net.n, net.tail, net.head, net.capacity, net.price, s)
        assert res.primal == pytest.approx(4.0)
        assert_allclose(net.incidence @ res.flow + s, 0.0, atol=1e-12)

    def test_dual_value_is_lower_bound_for_any_potential(self, rng):
        net, s, z, _ = random_problem(7)
        cost = rng.uniform(0, 1, net.m)
        for _ in range(100):
            y = rng.normal(size=net.n) * 3
            assert dual_value(net.tail, net.head, net.capacity, cost, s, y) <= cost @ z + 1e-12

    def test_infeasible_reports_artificial_flow(self):
        res = network_simplex(2, [0], [1], [0.5], [1.0], np.array([1.0, -1.0]))
        assert res.artificial_flow == pytest.approx(1.0)

    def test_scale_invariance_of_pivots(self):
        net, s, _, rng = random_problem(3)
        cost = rng.uniform(0, 1, net.m)
        a = network_simplex(net.n, net.tail, net.head, net.capacity, cost, s)
        b = network_simplex(net.n, net.tail, net.head, net.capacity, 1000 * cost, s)
        assert a.pivots == b.pivots
        assert_allclose(b.flow, a.flow, atol=1e-12)


class TestMinCostFlow:
    def test_single_edge(self):
        net = Network.from_edges(2, [(0, 1)], [1.0], [1.0])
        sol = min_cost_flow(net, np.array([1.0, -1.0]), net.price)
        assert_allclose(sol.flow, [1.0])
        assert sol.objective == pytest.approx(1.0)
        assert sol.certified == pytest.approx(1.0)

    def test_layered_direct_route(self):
        inst = generate_layered(3, 0.01)
        for k in range(3):
            sol = min_cost_flow(inst.network, inst.S[:, k], inst.p)
            assert sol.objective == pytest.approx(1.01, abs=1e-12)
            used = [inst.network.edges[j] for j in np.flatnonzero(sol.flow > 0.5)]
            assert sorted(used) == [(k, 3 + k), (3 + k, 6)]

    @pytest.mark.parametrize("seed", range(10))
    def test_fractional_oracle(self, seed):
        net, s, _, rng = random_problem(100 + seed)
        pi = rng.uniform(0, 1, net.m)
        sol = min_cost_flow(net, s, pi)
        want = mcf_oracle(net.n, net.tail, net.head, net.capacity, pi, s)
        assert sol.objective == pytest.approx(want, abs=1e-8)
        assert sol.certified == pytest.approx(want, abs=1e-8)
        assert sol.certified <= sol.objective + 1e-12
        assert abs(sol.objective - sol.certified) <= 1e-9 * (1 + abs(sol.objective))

    @pytest.mark.parametrize("seed", range(5))
    def test_weak_duality_random_feasible_flows(self, seed):
        net, s, z, rng = random_problem(200 + seed)
        pi = rng.uniform(0, 1, net.m)
        sol = min_cost_flow(net, s, pi)
        # circulations along cycles keep z feasible; push random amounts through some
        for _ in range(50):
            other = min_cost_flow(net, s, rng.uniform(0, 1, net.m)).flow
            lam = rng.uniform()
            f = lam * z + (1 - lam) * other
            assert sol.certified <= pi @ f + 1e-12

    def test_reduced_costs(self):
        net, s, _, rng = random_problem(5)
        pi = rng.uniform(0, 1, net.m)
        sol = min_cost_flow(net, s, pi)
        rc = sol.multipliers
        assert (sol.flow[rc > 1e-9] <= 1e-12).all()
        assert (sol.flow[rc < -1e-9] >= net.capacity[rc < -1e-9] - 1e-12).all()

    def test_infeasible(self):
        net = Network.from_edges(2, [(0, 1)], [0.5], [1.0])
        with pytest.raises(InfeasibleScenario):
            min_cost_flow(net, np.array([1.0, -1.0]), net.price)

    def test_negative_prices_rejected(self):
        net = Network.from_edges(2, [(0, 1)], [1.0], [1.0])
        with pytest.raises(ValueError):
            min_cost_flow(net, np.array([1.0, -1.0]), np.array([-1.0]))


class TestProxFlow:
    def test_feasible_anchor_zero_price(self):
        net, s, z, _ = random_problem(1)
        sol = prox_flow(net, s, np.zeros(net.m), z, 1.0)
        assert_allclose(sol.flow, z, atol=1e-9)
        assert sol.objective == pytest.approx(0.0, abs=1e-15)

    def test_parallel_edges(self):
        net = Network.from_edges(2, [(0, 1), (0, 1)], [1.0, 1.0], [1.0, 1.0])
        sol = prox_flow(net, np.array([1.0, -1.0]), np.zeros(2), np.zeros(2), 1.0)
        assert_allclose(sol.flow, [0.5, 0.5], atol=1e-12)

    @pytest.mark.parametrize("seed", [0, 1])
    def test_active_set_oracle(self, seed):
        net, s, _, rng = random_problem(300 + seed)
        pi = rng.uniform(0, 1, net.m)
        anchor = rng.uniform(-0.5, 2.0, net.m)
        rho = float(rng.uniform(0.2, 3.0))
        sol = prox_flow(net, s, pi, anchor, rho)
        want = prox_flow_oracle(net.n, net.tail, net.head, net.capacity, s, pi, anchor, rho)
        assert_allclose(sol.flow, want, atol=1e-6)

    @pytest.mark.parametrize("seed", range(30))
    def test_kkt_residual(self, seed):
        n, m = [(6, 10), (20, 50), (40, 120)][seed % 3]
        net, s, _, rng = random_problem(400 + seed, n, m, ["continuous", "discrete"][seed % 2])
        pi = rng.uniform(0, 1, m) * rng.choice([1e-3, 1.0, 10.0])
        anchor = rng.uniform(-1, 2, m)
        rho = float(10 ** rng.uniform(-2, 1))
        sol = prox_flow(net, s, pi, anchor, rho, tol=1e-8)
        assert sol.status == "optimal"
        assert sol.residual <= 1e-8 * max(1, np.abs(s).max(), net.capacity.max())
        assert ((sol.flow >= 0) & (sol.flow <= net.capacity)).all()
        kkt = prox_kkt_residual(net, s, pi, anchor, rho, sol.flow, sol.potential)
        assert kkt <= 1e-8

    def test_firmly_nonexpansive(self, rng):
        net, s, _, _ = random_problem(9)
        pi = rng.uniform(0, 1, net.m)
        for _ in range(20):
            a1, a2 = rng.uniform(-1, 2, (2, net.m))
            f1 = prox_flow(net, s, pi, a1, 0.7, tol=1e-11).flow
            f2 = prox_flow(net, s, pi, a2, 0.7, tol=1e-11).flow
            d = f1 - f2
            assert d @ d <= d @ (a1 - a2) + 1e-9
            assert np.linalg.norm(d) <= np.linalg.norm(a1 - a2) + 1e-9

    def test_price_scale_covariance(self, rng):
        net, s, _, _ = random_problem(11)
        pi = rng.uniform(0, 1, net.m)
        anchor = rng.uniform(0, 1, net.m)
        f1 = prox_flow(net, s, pi, anchor, 0.3, tol=1e-11).flow
        f2 = prox_flow(net, s, 10 * pi, anchor, 3.0, tol=1e-11).flow
        assert_allclose(f1, f2, atol=1e-9)

    def test_warm_start_same_answer(self, rng):
        net, s, _, _ = random_problem(12)
        pi = rng.uniform(0, 1, net.m)
        anchor = rng.uniform(0, 1, net.m)
        cold = prox_flow(net, s, pi, anchor, 1.0, tol=1e-11)
        warm = prox_flow(net, s, pi, anchor, 1.0, tol=1e-11, y0=cold.potential + 5.0)
        assert_allclose(warm.flow, cold.flow, atol=1e-9)
        assert warm.iterations <= 2

    @pytest.mark.parametrize("seed", range(20))
    def test_near_linear_regime_with_poor_warm_start(self, seed):
        # tiny rho and prices far from the anchor leave few free edges, so the
        # dual is mostly piecewise linear; a random offset warm start is used
        n, m = [(7, 7), (20, 26), (25, 55)][seed % 3]
        net, s, _, rng = random_problem(500 + seed, n, m)
        pi = rng.uniform(0, 80, m)
        anchor = rng.uniform(-1, 2, m)
        rho = float(10 ** rng.uniform(-3, -2))
        y0 = rng.normal(size=n) * 5 + 100
        sol = prox_flow(net, s, pi, anchor, rho, y0=y0)
        assert sol.status == "optimal" and sol.iterations < 200
        assert prox_kkt_residual(net, s, pi, anchor, rho, sol.flow, sol.potential) <= 1e-8

    @pytest.mark.parametrize("seed", range(10))
    def test_ray_maximizer(self, seed):
        from scipy.optimize import minimize_scalar

        net, s, _, rng = random_problem(600 + seed)
        A = net.incidence.toarray()
        c = net.capacity
        pi, anchor, rho = rng.uniform(0, 2, net.m), rng.uniform(-1, 2, net.m), 0.3
        y, d = rng.normal(size=net.n), rng.normal(size=net.n)

        def g(t):
            yt = y + t * d
            f = np.clip(anchor - (pi + A.T @ yt) / rho, 0, c)
            return pi @ f + 0.5 * rho * np.sum((f - anchor) ** 2) + yt @ (A @ f + s)

        w = anchor - (pi + A.T @ y) / rho
        r = A @ np.clip(w, 0, c) + s
        if r @ d < 0:
            d = -d
        t = flows._ray_maximizer(w, A.T @ d / rho, c, rho, float(r @ d))
        best = minimize_scalar(lambda t: -g(t), bounds=(0, 50), method="bounded", options={"xatol": 1e-12})
        assert g(t) >= -best.fun - 1e-9

    def test_infeasible_scenario(self):
        net = Network.from_edges(2, [(0, 1)], [0.5], [1.0])
        with pytest.raises(InfeasibleScenario):
            prox_flow(net, np.array([1.0, -1.0]), np.zeros(1), np.zeros(1), 1.0)

    def test_rho_positive(self):
        net = Network.from_edges(2, [(0, 1)])
        with pytest.raises(ValueError):
            prox_flow(net, np.array([1.0, -1.0]), np.zeros(1), np.zeros(1), 0.0)


class TestKktCache:
    def test_path_graph_cache_identical(self, rng):
        net = Network.from_edges(3, [(0, 1), (1, 2)], [1.0, 1.0], [1.0, 1.0])
        s = np.array([0.5, 0.0, -0.5])
        pi, anchor = rng.uniform(0, 1, 2), rng.uniform(0, 1, 2)
        cache = build_kkt_cache(net)
        a = prox_flow(net, s, pi, anchor, 1.0, cache=cache)
        b = prox_flow(net, s, pi, anchor, 1.0)
        assert np.array_equal(a.flow, b.flow)

    def test_disconnected(self):
        net = Network.from_edges(4, [(0, 1), (2, 3)])
        with pytest.raises(ValueError, match="not connected"):
            build_kkt_cache(net)

    def test_rejects_other_network(self):
        cache = build_kkt_cache(Network.from_edges(3, [(0, 1), (1, 2)]))
        other = Network.from_edges(3, [(0, 1), (2, 1)])
        with pytest.raises(ValueError):
            prox_flow(other, np.zeros(3), np.zeros(2), np.zeros(2), 1.0, cache=cache)

    def test_prices_do_not_invalidate(self):
        net = Network.from_edges(3, [(0, 1), (1, 2)])
        cache = build_kkt_cache(net)
        cache.check(net.with_prices([5.0, 6.0]).with_capacity([2.0, 2.0]))

    def test_sparse_matches_dense(self, rng, monkeypatch):
        net, s, _, _ = random_problem(13, 20, 50)
        pi, anchor = rng.uniform(0, 1, net.m), rng.uniform(0, 1, net.m)
        dense = prox_flow(net, s, pi, anchor, 0.5, tol=1e-11)
        monkeypatch.setattr(flows, "DENSE_MAX_NODES", 0)
        cache = KktCache(net)
        assert not cache.dense
        sparse = prox_flow(net, s, pi, anchor, 0.5, cache=cache, tol=1e-11)
        assert_allclose(sparse.flow, dense.flow, atol=1e-9)

    def test_large_sparse_graph(self, rng):
        net, s, _, _ = random_problem(14, 500, 1200)
        cache = build_kkt_cache(net)
        assert not cache.dense
        pi, anchor = rng.uniform(0, 1, net.m), rng.uniform(0, 1, net.m)
        sol = prox_flow(net, s, pi, anchor, 0.5, cache=cache)
        assert sol.status == "optimal"
        assert prox_kkt_residual(net, s, pi, anchor, 0.5, sol.flow, sol.potential) <= 1e-8
