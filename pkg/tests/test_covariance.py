"""Tests for flowcov.core.covariance — kernels, path weights and covariance assembly."""

import logging
import math

import numpy as np
import pytest
from builders import (
    chain,
    converging_tree,
    diamond,
    diverging_tree,
    make_net,
    random_network,
    split,
    two_chains,
    two_cycle,
    vortex_csv,
)

from flowcov.core.covariance import (
    cov_matrix_euclidean,
    cov_matrix_exponential,
    cov_matrix_pathsum,
    cov_pathsum,
    covariance_matrix,
    enumerate_paths,
    kernel_cov,
    walk_profile,
    walk_profiles,
)
from flowcov.core.errors import NumericalError
from flowcov.core.grid_parser import parse_grid
from flowcov.core.markov import solve_chain
from flowcov.core.network import build_network
from flowcov.core.types import DirectedNetwork, KernelSpec

E1 = math.exp(-1.0)


def _oracle_instances() -> list[tuple[DirectedNetwork, bool]]:
    rng = np.random.default_rng(20240611)
    out = []
    for k in range(50):
        cyclic = k % 2 == 1
        n = int(rng.integers(4, 13 if cyclic else 21))
        out.append((random_network(rng, n, cyclic), cyclic))
    return out


class TestKernelCov:
    @pytest.mark.parametrize('kind', ['exponential', 'spherical', 'linear_sill'])
    def test_sill_at_zero(self, kind: str):
        assert kernel_cov(KernelSpec(kind, 2.5, 7.0), 0.0) == 2.5

    def test_spherical_support(self):
        k = KernelSpec('spherical', 1.0, 4.0)
        assert kernel_cov(k, 4.0) == 0.0
        assert kernel_cov(k, 9.0) == 0.0

    def test_exponential_at_range(self):
        assert kernel_cov(KernelSpec('exponential', 1.0, 3.0), 3.0) == pytest.approx(0.367879, abs=1e-6)

    def test_linear_sill(self):
        assert kernel_cov(KernelSpec('linear_sill', 2.0, 10.0), 5.0) == pytest.approx(1.0)

    def test_broadcasts(self):
        values = kernel_cov(KernelSpec('exponential', 1.0, 1.0), np.array([0.0, 1.0, 2.0]))
        assert values == pytest.approx([1.0, E1, math.exp(-2.0)])

    def test_bad_kernel(self):
        with pytest.raises(ValueError):
            KernelSpec('gaussian', 1.0, 1.0)
        with pytest.raises(ValueError):
            KernelSpec('exponential', 0.0, 1.0)


class TestEnumeratePaths:
    def test_chain(self):
        net = chain(2, h=3.0)
        paths = enumerate_paths(net, solve_chain(net), 0, 1)
        assert len(paths) == 1
        assert paths[0].length == 3.0
        assert paths[0].weight == pytest.approx(1.0)
        assert paths[0].path == ((0, 1),)

    def test_split(self):
        net = split()
        paths = enumerate_paths(net, solve_chain(net), 0, 1)
        assert len(paths) == 1
        assert paths[0].weight == pytest.approx(math.sqrt(0.5))
        assert paths[0].pi_product == 0.5

    def test_unreachable(self):
        net = two_chains()
        assert enumerate_paths(net, solve_chain(net), 0, 3) == []

    def test_diamond_two_paths(self):
        net = diamond()
        paths = enumerate_paths(net, solve_chain(net), 0, 3)
        assert sorted(p.path for p in paths) == [((0, 1), (1, 3)), ((0, 2), (2, 3))]
        # influx(3) = 2, so each path carries 0.5 / sqrt(0.5) * 1 / sqrt(2)
        assert [p.weight for p in paths] == pytest.approx([0.5, 0.5])

    def test_cycle_never_revisits_source(self):
        net = two_cycle()
        sol = solve_chain(net)
        paths = enumerate_paths(net, sol, 0, 1)
        assert len(paths) == 1
        assert paths[0].weight == pytest.approx(math.sqrt(0.9) * 0.5 / 0.55)

    def test_max_hops(self):
        net = chain(4)
        assert enumerate_paths(net, solve_chain(net), 0, 3, max_hops=2) == []

    def test_same_vertex(self):
        net = chain(2)
        with pytest.raises(ValueError):
            enumerate_paths(net, solve_chain(net), 1, 1)


class TestWalkProfile:
    def test_merges_equal_lengths(self):
        net = diamond()
        prof = walk_profile(net, 0, max_hops=5)
        at_3 = prof.targets == 3
        assert prof.counts[at_3].tolist() == [2.0]
        assert prof.weights[at_3].tolist() == pytest.approx([1.0])

    def test_truncated_mass(self, caplog: pytest.LogCaptureFixture):
        net = chain(4)
        prof = walk_profile(net, 0, max_hops=1)
        assert prof.targets.tolist() == [1]
        assert prof.truncated_mass == pytest.approx(1.0)
        with caplog.at_level(logging.WARNING, logger='flowcov.core.covariance'):
            walk_profiles(net, max_hops=1)
        assert 'max_hops=1' in caplog.text

    def test_truncation_raises_when_strict(self):
        with pytest.raises(NumericalError, match='max_hops=1'):
            walk_profiles(chain(4), max_hops=1, strict=True)

    def test_dead_ends_are_not_truncated(self):
        prof = walk_profile(chain(2), 0, max_hops=1)
        assert prof.targets.tolist() == [1]
        assert prof.truncated_mass == 0.0

    def test_cycle_runs_until_pruned(self):
        net = two_cycle()
        prof = walk_profile(net, 1)
        assert prof.truncated_mass == 0.0
        assert prof.targets.tolist() == [0]


class TestCovPathsum:
    def test_chain(self):
        net = chain(2, h=2.0)
        k = KernelSpec('exponential', 1.0, 2.0)
        assert cov_pathsum(net, solve_chain(net), k, 0, 1) == pytest.approx(0.367879, abs=1e-6)

    def test_split(self):
        net = split(h=1.5)
        k = KernelSpec('exponential', 2.0, 3.0)
        expected = math.sqrt(0.5) * math.exp(-0.5) * 2.0
        assert cov_pathsum(net, solve_chain(net), k, 0, 1) == pytest.approx(expected)
        assert cov_pathsum(net, solve_chain(net), k, 1, 0) == pytest.approx(expected)

    def test_siblings_uncorrelated(self):
        net = split()
        assert cov_pathsum(net, solve_chain(net), KernelSpec('exponential', 1.0, 1.0), 1, 2) == 0.0

    def test_diagonal(self):
        net = chain(2)
        assert cov_pathsum(net, solve_chain(net), KernelSpec('spherical', 3.0, 1.0), 1, 1) == 3.0

    def test_explicit_matches_grouped(self):
        net = random_network(np.random.default_rng(9), 9, cyclic=False)
        sol = solve_chain(net)
        k = KernelSpec('exponential', 1.0, 4.0)
        for x in range(net.n):
            for y in range(x + 1, net.n):
                grouped = cov_pathsum(net, sol, k, x, y, max_hops=net.n, weight_floor=0.0)
                listed = cov_pathsum(net, sol, k, x, y, max_hops=net.n, weight_floor=0.0, explicit=True)
                assert grouped == pytest.approx(listed, abs=1e-14)

    def test_hop_cap_raises(self):
        net = chain(4)
        with pytest.raises(NumericalError, match='max_hops=2'):
            cov_pathsum(net, solve_chain(net), KernelSpec('exponential', 1.0, 5.0), 0, 3, max_hops=2)


class TestCovMatrix:
    def test_chain(self):
        net = chain(2, h=5.0)
        sigma = cov_matrix_exponential(net, solve_chain(net), 1.5, 5.0)
        assert sigma[0, 1] == pytest.approx(1.5 * E1)
        assert np.array_equal(np.diag(sigma), [1.5, 1.5])

    def test_split(self):
        net = split(h=2.0)
        sigma = cov_matrix_exponential(net, solve_chain(net), 1.0, 4.0)
        assert sigma[0, 1] == pytest.approx(math.sqrt(0.5) * math.exp(-0.5))
        assert sigma[1, 2] == 0.0

    def test_closed_form_matches_path_sum(self):
        for net, cyclic in _oracle_instances():
            sol = solve_chain(net)
            sigma = cov_matrix_exponential(net, sol, 1.0, 2.0)
            k = KernelSpec('exponential', 1.0, 2.0)
            if cyclic:
                oracle = cov_matrix_pathsum(net, sol, k)
                assert np.allclose(sigma, oracle, rtol=0.0, atol=1e-8)
            else:
                oracle = cov_matrix_pathsum(net, sol, k, max_hops=net.n, weight_floor=0.0)
                assert np.allclose(sigma, oracle, rtol=0.0, atol=1e-10)

    def test_constant_variance_symmetry_and_zeros(self):
        for net, _cyclic in _oracle_instances():
            sol = solve_chain(net)
            sigma = cov_matrix_exponential(net, sol, 0.7, 3.0)
            assert np.all(np.diag(sigma) == 0.7)
            assert np.array_equal(sigma, sigma.T)
            unconnected = ~(sol.reach | sol.reach.T)
            assert np.all(sigma[unconnected] == 0.0)

    def test_pathsum_symmetry_and_zeros(self):
        net = random_network(np.random.default_rng(31), 14, cyclic=False)
        sol = solve_chain(net)
        sigma = cov_matrix_pathsum(net, sol, KernelSpec('spherical', 2.0, 9.0))
        assert np.array_equal(sigma, sigma.T)
        assert np.all(np.diag(sigma) == 2.0)
        assert np.all(sigma[~(sol.reach | sol.reach.T)] == 0.0)

    def test_spherical_chain(self):
        net = chain(3)
        sigma = cov_matrix_pathsum(net, solve_chain(net), KernelSpec('spherical', 1.0, 1.5))
        r = 1.0 / 1.5
        assert sigma[0, 1] == pytest.approx(1.0 - 1.5 * r + 0.5 * r**3)
        assert sigma[0, 2] == 0.0

    @pytest.mark.parametrize('builder', [converging_tree, diverging_tree])
    def test_tree_equivalence(self, builder):
        rng = np.random.default_rng(77)
        theta_s, theta_r = 1.3, 6.0
        for _ in range(20):
            n = int(rng.integers(2, 31))
            net, parents = builder(rng, n)
            sigma = cov_matrix_exponential(net, solve_chain(net), theta_s, theta_r)
            probs = {(e.tail, e.head): e.prob for e in net.edges}
            lengths = {(e.tail, e.head): e.length for e in net.edges}
            children = [sum(1 for p in parents if p == v) for v in range(n)]

            expected = np.zeros((n, n))
            for x in range(1, n):
                factor, length, child = 1.0, 0.0, x
                while parents[child] >= 0:
                    parent = parents[child]
                    if builder is converging_tree:
                        nu = 1.0 / children[parent]
                        length += lengths[(child, parent)]
                    else:
                        nu = probs[(parent, child)]
                        length += lengths[(parent, child)]
                    factor *= math.sqrt(nu)
                    expected[x, parent] = expected[parent, x] = factor * theta_s * math.exp(-length / theta_r)
                    child = parent
            np.fill_diagonal(expected, theta_s)
            assert np.allclose(sigma, expected, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize('builder', [converging_tree, diverging_tree])
    def test_trees_positive_semidefinite(self, builder):
        rng = np.random.default_rng(5)
        for _ in range(10):
            net, _parents = builder(rng, 25)
            sigma = cov_matrix_exponential(net, solve_chain(net), 1.0, 5.0)
            assert np.linalg.eigvalsh(sigma).min() >= -1e-10

    def test_diamond_positive_semidefinite(self):
        net = diamond()
        sigma = cov_matrix_exponential(net, solve_chain(net), 1.0, 2.0)
        assert np.linalg.eigvalsh(sigma).min() >= -1e-12

    @pytest.mark.parametrize('cyclic', [False, True])
    def test_random_networks_positive_semidefinite(self, cyclic: bool):
        rng = np.random.default_rng(404)
        theta_s = 1.7
        for _ in range(40):
            net = random_network(rng, int(rng.integers(3, 16)), cyclic=cyclic)
            sol = solve_chain(net)
            for theta_r in (0.5, 3.0, 50.0):
                sigma = cov_matrix_exponential(net, sol, theta_s, theta_r)
                assert np.linalg.eigvalsh(sigma).min() >= -1e-8 * theta_s

    def test_vortex_positive_semidefinite(self):
        net = build_network(parse_grid(vortex_csv()))
        sigma = cov_matrix_exponential(net, solve_chain(net), 1.0, 25.0)
        assert np.linalg.eigvalsh(sigma).min() >= -1e-8

    def test_outlet_with_two_edges_and_sink(self):
        # weighted rows of vertex 0 sum past one; the chain itself is transient
        coords = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
        net = make_net(coords, [(0, 1, 0.45), (0, 2, 0.45), (1, 0, 0.5), (2, 0, 0.9)])
        sol = solve_chain(net)
        assert sorted(net.outlets) == [0, 1, 2]
        closed = cov_matrix_exponential(net, sol, 1.0, 1e6)
        summed = cov_matrix_pathsum(net, sol, KernelSpec('exponential', 1.0, 1e6))
        assert np.allclose(closed, summed, rtol=0.0, atol=1e-8)
        assert closed[0, 1] > 0.0

    def test_dispatch(self):
        net = chain(3)
        sol = solve_chain(net)
        k = KernelSpec('exponential', 1.0, 2.0)
        closed = covariance_matrix(net, sol, k, method='closed-form')
        summed = covariance_matrix(net, sol, k, method='path-sum')
        assert np.allclose(closed, summed, atol=1e-12)

    def test_closed_form_needs_exponential(self):
        net = chain(3)
        with pytest.raises(ValueError, match='exponential'):
            covariance_matrix(net, solve_chain(net), KernelSpec('spherical', 1.0, 2.0))

    def test_unknown_method(self):
        net = chain(3)
        with pytest.raises(ValueError, match='method'):
            covariance_matrix(net, solve_chain(net), KernelSpec('exponential', 1.0, 2.0), method='magic')

    def test_pair_matrix_computed_when_missing(self):
        net = two_cycle()
        sol = solve_chain(net, pairs=False)
        sigma = cov_matrix_exponential(net, sol, 1.0, 1.0)
        assert sol.U_pair is not None
        assert sigma[0, 1] > 0


class TestCovMatrixEuclidean:
    def test_coincident_points(self):
        sigma = cov_matrix_euclidean(np.array([[1.0, 1.0], [1.0, 1.0]]), KernelSpec('exponential', 2.0, 5.0))
        assert sigma[0, 1] == 2.0

    def test_distance_equals_range(self):
        sigma = cov_matrix_euclidean(np.array([[0.0, 0.0], [3.0, 4.0]]), KernelSpec('exponential', 1.0, 5.0))
        assert sigma[0, 1] == pytest.approx(0.367879, abs=1e-6)
        assert sigma[0, 0] == 1.0
