import itertools
import os
import time
import unittest

import numpy as np

from guilt_graph.graph import NodeRef, Side, build_graph
from guilt_graph.inference import (
    BeliefTable,
    BeliefVector,
    BpConfig,
    InferenceResult,
    bp_message,
    classify,
    detect_unknown,
    edge_potential,
    init_beliefs,
    run_bp,
    run_lp,
)
from guilt_graph.labeling import DeviceLabel, GroundTruth
from guilt_graph.synthgen import random_bipartite
from guilt_graph.types import InvalidNodeError

# a tree: d0 - a0 - d1 - a1 - d2, a1 - d3 - a2
TREE = [('d0', 'a0'), ('d1', 'a0'), ('d1', 'a1'), ('d2', 'a1'), ('d3', 'a1'), ('d3', 'a2')]


def exact_marginals(g, priors: np.ndarray, epsilon: float) -> np.ndarray:
    """P(bad) of every node by summing the joint distribution over all 2^n states."""
    psi = edge_potential(epsilon)
    n = g.n_nodes
    totals = np.zeros((n, 2))
    for states in itertools.product((0, 1), repeat=n):
        w = np.prod([priors[i, s] for i, s in enumerate(states)])
        for d, a in zip(g.edge_devices.tolist(), g.edge_apps.tolist(), strict=True):
            w *= psi[states[d], states[g.n_devices + a]]
        for i, s in enumerate(states):
            totals[i, s] += w
    return totals[:, 0] / totals.sum(axis=1)


def random_tree(rng: np.random.Generator, n: int) -> tuple[list[tuple[str, str]], list[str]]:
    """Edges of a random bipartite tree on `n` nodes rooted at a device, and its device ids."""
    sides = ['d']
    edges = []
    for i in range(1, n):
        parent = int(rng.integers(0, i))
        sides.append('a' if sides[parent] == 'd' else 'd')
        pair = (f'{sides[parent]}{parent}', f'{sides[i]}{i}')
        edges.append(pair if sides[parent] == 'd' else pair[::-1])
    return edges, [f'd{i}' for i, side in enumerate(sides) if side == 'd']


class TestConfig(unittest.TestCase):
    def test_ranges(self):
        """Test parameter validation of BpConfig and BeliefVector."""
        invalid = [
            {'delta': 0.4},
            {'delta': 1.01},
            {'epsilon': 1.0},
            {'epsilon': 0.49},
            {'max_iterations': 0},
            {'convergence_tol': 0.0},
        ]
        for kwargs in invalid:
            with self.subTest(**kwargs), self.assertRaises(ValueError):
                BpConfig(**kwargs)
        BpConfig(delta=0.5, epsilon=0.5)
        with self.assertRaises(ValueError):
            BeliefVector(0.7, 0.7)
        self.assertEqual(BeliefVector(0.5, 0.5), BeliefVector.uniform())

    def test_edge_potential(self):
        """Test the compatibility matrix puts epsilon on the diagonal."""
        np.testing.assert_allclose([[0.7, 0.3], [0.3, 0.7]], edge_potential(0.7))


class TestMessages(unittest.TestCase):
    def test_single_message(self):
        """Test one message against the hand computed sum-product value."""
        m = bp_message(BeliefVector(0.9, 0.1), [], 0.6)
        self.assertAlmostEqual(0.9 * 0.6 + 0.1 * 0.4, m.p_bad)
        self.assertAlmostEqual(1.0, m.p_bad + m.p_good)

    def test_incoming_multiply(self):
        """Test incoming messages multiply into the cavity before the potential."""
        m = bp_message(BeliefVector.uniform(), [BeliefVector(0.8, 0.2), BeliefVector(0.8, 0.2)], 0.9)
        cavity_bad = 0.64 / (0.64 + 0.04)
        self.assertAlmostEqual(cavity_bad * 0.9 + (1 - cavity_bad) * 0.1, m.p_bad)

    def test_two_node_message(self):
        """Test the message and belief of an app whose only neighbor is a confidently bad device."""
        g = build_graph([('d', 'a')])
        gt = GroundTruth(frozenset({'d'}), frozenset())
        for epsilon, expected in ((0.51, 0.5098), (0.9, 0.892)):
            with self.subTest(epsilon=epsilon):
                m = bp_message(BeliefVector(0.99, 0.01), [], epsilon)
                self.assertAlmostEqual(expected, m.p_bad, places=12)
                cfg = BpConfig(delta=0.99, epsilon=epsilon)
                result = run_bp(g, init_beliefs(g, gt, {'d'}, cfg), cfg)
                self.assertTrue(result.converged)
                self.assertAlmostEqual(expected, result.beliefs[g.app_ref('a')].p_bad, places=12)
                self.assertAlmostEqual(0.99, result.beliefs[g.device_ref('d')].p_bad, places=12)

    def test_uniform_prior_sends_uniform(self):
        """Test a node with no information sends (0.5, 0.5)."""
        m = bp_message(BeliefVector.uniform(), [], 0.95)
        self.assertAlmostEqual(0.5, m.p_bad)


class TestInitBeliefs(unittest.TestCase):
    def setUp(self):
        self.g = build_graph(TREE)
        self.gt = GroundTruth(frozenset({'d0'}), frozenset({'d2'}))

    def test_priors(self):
        """Test training devices get delta, everything else is uniform."""
        priors = init_beliefs(self.g, self.gt, {'d0', 'd2'}, BpConfig(delta=0.9))
        self.assertAlmostEqual(0.9, priors[self.g.device_ref('d0')].p_bad)
        self.assertAlmostEqual(0.1, priors[self.g.device_ref('d2')].p_bad)
        self.assertEqual(BeliefVector.uniform(), priors[self.g.device_ref('d1')])
        self.assertEqual(BeliefVector.uniform(), priors[self.g.app_ref('a0')])
        self.assertEqual(self.g.n_nodes, len(priors))

    def test_training_only(self):
        """Test labeled devices outside the training set stay uniform."""
        priors = init_beliefs(self.g, self.gt, {'d0'}, BpConfig())
        self.assertEqual(BeliefVector.uniform(), priors[self.g.device_ref('d2')])

    def test_bad_training_devices(self):
        """Test unlabeled and unknown training devices are rejected."""
        with self.assertRaises(ValueError):
            init_beliefs(self.g, self.gt, {'d1'}, BpConfig())
        with self.assertRaises(InvalidNodeError):
            init_beliefs(self.g, self.gt, {'d9'}, BpConfig())


class TestBeliefPropagation(unittest.TestCase):
    def setUp(self):
        self.g = build_graph(TREE)
        self.gt = GroundTruth(frozenset({'d0'}), frozenset({'d2'}))

    def test_exact_on_tree(self):
        """Test BP beliefs equal brute-force marginals on random trees."""
        rng = np.random.default_rng(11)
        for case in range(200):
            edges, devices = random_tree(rng, int(rng.integers(2, 11)))
            labels = rng.integers(0, 3, size=len(devices))
            bad = frozenset(d for d, label in zip(devices, labels, strict=True) if label == 1) or frozenset(devices[:1])
            good = frozenset(d for d, label in zip(devices, labels, strict=True) if label == 2) - bad
            g = build_graph(edges)
            cfg = BpConfig(
                delta=float(rng.uniform(0.5, 1.0)), epsilon=float(rng.uniform(0.5, 1.0)), convergence_tol=1e-12
            )
            with self.subTest(case=case, delta=cfg.delta, epsilon=cfg.epsilon):
                priors = init_beliefs(g, GroundTruth(bad, good), bad | good, cfg)
                result = run_bp(g, priors, cfg)
                self.assertTrue(result.converged)
                expected = exact_marginals(g, priors.array, cfg.epsilon)
                np.testing.assert_allclose(expected, result.beliefs.p_bad, atol=1e-6)

    def test_beliefs_normalized(self):
        """Test every final belief is a distribution."""
        cfg = BpConfig()
        result = run_bp(self.g, init_beliefs(self.g, self.gt, {'d0', 'd2'}, cfg), cfg)
        np.testing.assert_allclose(1.0, result.beliefs.array.sum(axis=1))
        for belief in result.beliefs.values():
            self.assertIsInstance(belief, BeliefVector)

    def test_neutral_potential(self):
        """Test epsilon = 0.5 carries no information: unlabeled nodes stay at 0.5."""
        cfg = BpConfig(epsilon=0.5)
        result = run_bp(self.g, init_beliefs(self.g, self.gt, {'d0', 'd2'}, cfg), cfg)
        scores = result.device_scores()
        self.assertAlmostEqual(0.5, scores['d1'])
        self.assertAlmostEqual(0.5, scores['d3'])
        self.assertAlmostEqual(0.99, scores['d0'])

    def test_neighbor_of_bad_leans_bad(self):
        """Test guilt by association: d1 shares an app with the bad device, d3 with the good one."""
        cfg = BpConfig(epsilon=0.8)
        result = run_bp(self.g, init_beliefs(self.g, GroundTruth(frozenset({'d0'})), {'d0'}, cfg), cfg)
        scores = result.device_scores()
        self.assertGreater(scores['d1'], 0.5)
        self.assertGreater(scores['d1'], scores['d3'])

    def test_label_symmetry(self):
        """Test swapping the two classes mirrors every belief."""
        cfg = BpConfig(epsilon=0.7)
        swapped = GroundTruth(frozenset({'d2'}), frozenset({'d0'}))
        a = run_bp(self.g, init_beliefs(self.g, self.gt, {'d0', 'd2'}, cfg), cfg)
        b = run_bp(self.g, init_beliefs(self.g, swapped, {'d0', 'd2'}, cfg), cfg)
        np.testing.assert_allclose(a.beliefs.p_bad, 1.0 - b.beliefs.p_bad, atol=1e-12)

    def test_certain_prior(self):
        """Test delta = 1 keeps the training device at 1 without NaNs."""
        cfg = BpConfig(delta=1.0, epsilon=0.9)
        result = run_bp(self.g, init_beliefs(self.g, self.gt, {'d0', 'd2'}, cfg), cfg)
        self.assertFalse(np.isnan(result.beliefs.array).any())
        self.assertAlmostEqual(1.0, result.device_scores()['d0'])

    def test_isolated_device_keeps_prior(self):
        """Test a device without edges ends where it started."""
        g = build_graph(TREE)
        g = g.keep_apps(np.array([False, True, True]))  # d0 loses its only app
        gt = GroundTruth(frozenset({'d0'}))
        cfg = BpConfig()
        result = run_bp(g, init_beliefs(g, gt, {'d0'}, cfg), cfg)
        self.assertAlmostEqual(0.99, result.device_scores()['d0'])

    def test_message_lookup(self):
        """Test the final message of a single edge."""
        g = build_graph([('d0', 'a0')])
        cfg = BpConfig(delta=0.9, epsilon=0.7)
        result = run_bp(g, init_beliefs(g, GroundTruth(frozenset({'d0'})), {'d0'}, cfg), cfg)
        msg = result.messages.message(g, g.device_ref('d0'), g.app_ref('a0'))
        self.assertAlmostEqual(0.9 * 0.7 + 0.1 * 0.3, msg.p_bad)
        self.assertAlmostEqual(msg.p_bad, result.beliefs[g.app_ref('a0')].p_bad)
        with self.assertRaises(InvalidNodeError):
            result.messages.message(g, g.device_ref('d0'), NodeRef(Side.Device, 0))

    def test_not_converged(self):
        """Test hitting the iteration cap is reported, not raised."""
        cfg = BpConfig(max_iterations=1)
        priors = init_beliefs(self.g, self.gt, {'d0', 'd2'}, cfg)
        with self.assertLogs('guilt_graph.inference', level='WARNING'):
            result = run_bp(self.g, priors, cfg)
        self.assertFalse(result.converged)
        self.assertEqual(1, result.iterations_run)

    def test_priors_cover_every_node(self):
        """Test a prior mapping missing a node is rejected."""
        partial = {self.g.device_ref('d0'): BeliefVector.uniform()}
        with self.assertRaises(ValueError):
            run_bp(self.g, partial, BpConfig())

    def test_mapping_priors(self):
        """Test a plain dict of priors gives the same result as a BeliefTable."""
        cfg = BpConfig(epsilon=0.6)
        table = init_beliefs(self.g, self.gt, {'d0', 'd2'}, cfg)
        as_dict = dict(table.items())
        a = run_bp(self.g, table, cfg)
        b = run_bp(self.g, as_dict, cfg)
        np.testing.assert_array_equal(a.beliefs.array, b.beliefs.array)
        self.assertIs(table, BeliefTable.from_mapping(self.g, table))


class TestClassify(unittest.TestCase):
    def test_threshold_is_strict(self):
        """Test a score equal to the threshold is classified good."""
        g = build_graph(TREE)
        p_bad = np.array([0.9, 0.5, 0.25, 0.5000001, 0.5, 0.5, 0.5])
        result = InferenceResult(BeliefTable(g, np.column_stack([p_bad, 1.0 - p_bad])), 1, True)
        labels = classify(result, 0.5)
        self.assertIs(DeviceLabel.Bad, labels['d0'])
        self.assertIs(DeviceLabel.Good, labels['d1'])
        self.assertIs(DeviceLabel.Good, labels['d2'])
        self.assertIs(DeviceLabel.Bad, labels['d3'])
        self.assertEqual(4, len(labels))

    def test_detect_unknown(self):
        """Test unlabeled devices next to bad devices come out bad."""
        edges = [('b1', 'x'), ('b2', 'x'), ('u1', 'x'), ('g1', 'y'), ('g2', 'y'), ('u2', 'y')]
        g = build_graph(edges)
        gt = GroundTruth(frozenset({'b1', 'b2'}), frozenset({'g1', 'g2'}))
        report = detect_unknown(g, gt, BpConfig(epsilon=0.8))
        self.assertDictEqual({'u1': DeviceLabel.Bad, 'u2': DeviceLabel.Good}, dict(report.predictions))
        self.assertEqual(2, report.n_unknown)
        self.assertEqual(1, report.n_bad)
        self.assertEqual(1, report.n_good)
        self.assertTrue(report.result.converged)
        self.assertSetEqual({'u1', 'u2'}, set(report.scores))
        self.assertGreater(report.scores['u1'], 0.5)
        self.assertLess(report.scores['u2'], 0.5)


class TestLabelPropagation(unittest.TestCase):
    def test_harmonic_solution(self):
        """Test LP reaches the harmonic solution of the clamped linear system."""
        edges = [
            ('d0', 'a0'),
            ('d1', 'a0'),
            ('d1', 'a1'),
            ('d2', 'a1'),
            ('d2', 'a2'),
            ('d3', 'a2'),
            ('d3', 'a0'),
            ('d4', 'a2'),
        ]
        g = build_graph(edges)
        gt = GroundTruth(frozenset({'d0'}), frozenset({'d4'}))
        result = run_lp(g, gt, {'d0', 'd4'}, max_iterations=100_000, tol=1e-13)
        self.assertTrue(result.converged)

        adj = g.adjacency.toarray()
        clamped = {g.device_ref('d0').index: 1.0, g.device_ref('d4').index: 0.0}
        free = [i for i in range(g.n_nodes) if i not in clamped]
        laplacian = np.diag(adj.sum(axis=1)) - adj
        rhs = -laplacian[np.ix_(free, list(clamped))] @ np.array(list(clamped.values()))
        expected = np.linalg.solve(laplacian[np.ix_(free, free)], rhs)
        np.testing.assert_allclose(expected, result.beliefs.p_bad[free], atol=1e-9)
        self.assertEqual(1.0, result.device_scores()['d0'])
        self.assertEqual(0.0, result.device_scores()['d4'])

    def test_isolated_nodes_stay_neutral(self):
        """Test a node without neighbors keeps 0.5."""
        g = build_graph(TREE).keep_apps(np.array([True, False, True]))  # d2 loses a1
        result = run_lp(g, GroundTruth(frozenset({'d0'})), {'d0'})
        self.assertEqual(0.5, result.device_scores()['d2'])
        self.assertAlmostEqual(1.0, result.device_scores()['d1'], delta=1e-4)


@unittest.skipUnless(os.environ.get('GG_PERF'), 'set GG_PERF=1 to run timing tests')
class TestPerformance(unittest.TestCase):
    def test_bp_iterations_at_scale(self):
        """Test 10 BP iterations over about two million edges finish within 10 seconds."""
        g = random_bipartite(250_000, 6_000, 2_100_000, seed=3)
        rng = np.random.default_rng(3)
        picked = rng.choice(g.n_devices, size=2_000, replace=False)
        gt = GroundTruth(
            frozenset(g.devices[i] for i in picked[:1_000]), frozenset(g.devices[i] for i in picked[1_000:])
        )
        cfg = BpConfig(max_iterations=10, convergence_tol=1e-15)
        priors = init_beliefs(g, gt, gt.labeled, cfg)
        start = time.perf_counter()
        result = run_bp(g, priors, cfg)
        elapsed = time.perf_counter() - start
        self.assertEqual(10, result.iterations_run)
        self.assertLessEqual(elapsed, 10.0)


if __name__ == '__main__':
    unittest.main()
