import tempfile
import unittest
from dataclasses import replace
from pathlib import Path

from guilt_graph.evaluation import EvalConfig, epsilon_sweep
from guilt_graph.graph import read_edge_list
from guilt_graph.ingest import EntityMode, load_edges
from guilt_graph.labeling import GroundTruth, VerdictTable
from guilt_graph.postanalysis import LeakCatalog, asn_stats, scan_leaks, short_lived_domains
from guilt_graph.synthgen import (
    NodeKind,
    SynthConfig,
    TopologyMode,
    generate,
    plant_leaks,
    random_bipartite,
    write_corpus,
)
from guilt_graph.topology import (
    PairClass,
    cluster_distance_stats,
    eigenvector_centrality,
    group_centrality,
    shortest_paths,
)
from guilt_graph.types import SynthConfigError

SMALL = SynthConfig(
    n_bad_devices=40,
    n_good_devices=120,
    n_bad_apps=10,
    n_good_apps=40,
    n_communities=4,
    p_homophile=0.3,
    p_cross=0.02,
    seed=5,
)
SMALL_DNS = SynthConfig(
    n_bad_devices=40,
    n_good_devices=120,
    n_bad_apps=10,
    n_good_apps=20,
    p_homophile=0.3,
    p_cross=0.2,
    bridge_length=6,
    topology_mode=TopologyMode.DnsLike,
    seed=5,
)


def class_distances(corpus):
    g, gt = corpus.graph, corpus.ground_truth
    bad = [g.device_ref(d) for d in sorted(gt.bad_devices)]
    good = [g.device_ref(d) for d in sorted(gt.good_devices)]
    return cluster_distance_stats(shortest_paths(g, bad + good), bad, good)


def class_centrality(corpus):
    """Mean eigenvector centrality of the labeled bad and good devices."""
    g, gt = corpus.graph, corpus.ground_truth
    groups = {
        'bad': [g.device_ref(d) for d in gt.bad_devices],
        'good': [g.device_ref(d) for d in gt.good_devices],
    }
    bad, good = group_centrality(eigenvector_centrality(g), groups)
    return bad.mean_ec, good.mean_ec


class TestConfig(unittest.TestCase):
    def test_infeasible(self):
        """Test infeasible parameter combinations raise SynthConfigError."""
        invalid = [
            {'n_bad_devices': 0},
            {'p_cross': 0.2, 'p_homophile': 0.2},
            {'p_homophile': 1.5},
            {'p_cross': -0.1},
            {'n_communities': 300},
            {'bridge_length': 5},
            {'bridge_length': 0},
            {'vt_range': (0, 3)},
            {'vt_range': (8, 4)},
            {'vt_range': (3, 61)},
            {'p_private': -1.0},
            {'leak_fraction': 1.5},
            {'topology_mode': 'ring'},
        ]
        for kwargs in invalid:
            with self.subTest(**{k: str(v) for k, v in kwargs.items()}), self.assertRaises(SynthConfigError):
                SynthConfig(**kwargs)

    def test_from_mapping(self):
        """Test plain tables build configs and unknown keys are reported."""
        cfg = SynthConfig.from_mapping({'topology_mode': 'dns-like', 'vt_range': [2, 9], 'seed': 3})
        self.assertIs(TopologyMode.DnsLike, cfg.topology_mode)
        self.assertTupleEqual((2, 9), cfg.vt_range)
        with self.assertRaises(SynthConfigError):
            SynthConfig.from_mapping({'n_devices': 3})

    def test_presets(self):
        """Test both packaged presets load and accept overrides."""
        mobile = SynthConfig.preset('mobile-like')
        self.assertIs(TopologyMode.MobileLike, mobile.topology_mode)
        self.assertEqual(12, mobile.n_communities)
        dns = SynthConfig.preset(TopologyMode.DnsLike, seed=99)
        self.assertIs(TopologyMode.DnsLike, dns.topology_mode)
        self.assertEqual(99, dns.seed)
        self.assertEqual(1, dns.n_communities)


class TestGenerate(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.mobile = generate(SMALL)
        cls.dns = generate(SMALL_DNS)

    def test_deterministic(self):
        """Test the same configuration gives the same corpus and another seed a different one."""
        again = generate(SMALL)
        self.assertSetEqual(self.mobile.graph.edge_set(), again.graph.edge_set())
        self.assertListEqual(list(self.mobile.records())[:50], list(again.records())[:50])
        other = generate(replace(SMALL, seed=6))
        self.assertNotEqual(self.mobile.graph.edge_set(), other.graph.edge_set())

    def test_node_kinds(self):
        """Test device counts per kind and that bridges exist only in dns-like corpora."""
        self.assertEqual(40, len(self.mobile.devices_of(NodeKind.Bad)))
        self.assertEqual(120, len(self.mobile.devices_of(NodeKind.Good)))
        self.assertListEqual([], self.mobile.devices_of(NodeKind.Chain))
        self.assertGreaterEqual(len(self.dns.devices_of(NodeKind.Chain)), 3)
        self.assertEqual(len(self.dns.graph.devices), len(self.dns.device_kinds))

    def test_every_device_has_an_edge(self):
        """Test top-up leaves no bad or good device isolated."""
        for corpus in (self.mobile, self.dns):
            degrees = dict(zip(corpus.graph.devices, corpus.graph.device_degrees().tolist(), strict=True))
            self.assertTrue(all(degrees[d] > 0 for d in corpus.device_kinds))

    def test_class_separation(self):
        """Test good devices never use bad apps, and dns-like bad devices never use good apps."""
        for corpus in (self.mobile, self.dns):
            kinds = corpus.app_kinds
            for device, app in corpus.graph.edges():
                if corpus.device_kinds[device] is NodeKind.Good:
                    self.assertIsNot(NodeKind.Bad, kinds[app])
                if corpus.device_kinds[device] is NodeKind.Bad and corpus is self.dns:
                    self.assertIsNot(NodeKind.Good, kinds[app])

    def test_chain_devices(self):
        """Test every bridge device joins exactly two apps."""
        g = self.dns.graph
        for device in self.dns.devices_of(NodeKind.Chain):
            self.assertEqual(2, g.degree(g.device_ref(device)))

    def test_ground_truth_follows_kinds(self):
        """Test labeled bad devices were generated bad and labeled good devices were generated good."""
        for corpus in (self.mobile, self.dns):
            gt = corpus.ground_truth
            self.assertTrue(gt.bad_devices)
            self.assertTrue(gt.good_devices)
            self.assertLessEqual(set(gt.bad_devices), set(corpus.devices_of(NodeKind.Bad)))
            self.assertLessEqual(set(gt.good_devices), set(corpus.devices_of(NodeKind.Good)))

    def test_records(self):
        """Test traffic rebuilds the graph and every packet goes to its app's servers."""
        records = list(self.mobile.records())
        expected = sum(self.mobile.packets_for(app) for _, app in self.mobile.graph.edges())
        self.assertEqual(expected, len(records))
        for rec in records[:200]:
            self.assertIn(rec.dst_ip, self.mobile.app_ips[rec.app_string])
            self.assertIn(rec.dst_domain, self.mobile.app_domains[rec.app_string])
        edges = {(rec.src_ip, rec.app_string) for rec in records}
        self.assertSetEqual(self.mobile.graph.edge_set(), edges)

    def test_infrastructure_expectations(self):
        """Test the AS and short-lived domain counts recovered from traffic equal the built ones."""
        records = list(self.mobile.records())
        devices = self.mobile.graph.devices
        asns = asn_stats(records, devices, self.mobile.enrichment)
        short = short_lived_domains(records, devices, self.mobile.enrichment)
        expected = self.mobile.infra_expectations()
        self.assertDictEqual({d: e[0] for d, e in expected.items()}, asns)
        self.assertDictEqual({d: e[1] for d, e in expected.items()}, short)
        bad = self.mobile.devices_of(NodeKind.Bad)
        self.assertTrue(all(asns[d] >= SMALL.bad_app_ips for d in bad))

    def test_no_cross_edges(self):
        """Test p_cross = 0 leaves the two classes in different components."""
        for mode in TopologyMode:
            with self.subTest(mode=mode):
                cfg = SynthConfig(
                    n_bad_devices=20,
                    n_good_devices=40,
                    n_bad_apps=6,
                    n_good_apps=12,
                    n_communities=2,
                    p_homophile=0.4,
                    p_cross=0.0,
                    topology_mode=mode,
                )
                summary = class_distances(generate(cfg))
                self.assertEqual(0, summary[PairClass.BG].pairs)
                self.assertGreater(summary[PairClass.BG].unreachable, 0)


class TestLeaksAndFiles(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.corpus = generate(SMALL)

    def test_planted_leaks_are_recovered(self):
        """Test a leak scan finds exactly the planted pairs and only in bad-device traffic."""
        catalog = LeakCatalog.load()
        bad = self.corpus.devices_of(NodeKind.Bad)
        traffic, manifest = plant_leaks(list(self.corpus.records()), SMALL, bad, catalog, fraction=0.5)
        bad_set = set(bad)
        candidates = sum(1 for rec in self.corpus.records() if rec.src_ip in bad_set)
        self.assertEqual(round(0.5 * candidates), len(manifest))

        scan = scan_leaks(traffic, None, catalog)
        found = {(f.packet_index, f.device, f.leak_type, f.key) for f in scan.findings}
        self.assertSetEqual({(p.packet_index, p.device, p.leak_type, p.key) for p in manifest}, found)
        self.assertLessEqual({f.device for f in scan.findings}, bad_set)

        again = plant_leaks(list(self.corpus.records()), SMALL, bad, catalog, fraction=0.5)[1]
        self.assertListEqual(manifest, again)

    def test_no_leaks_by_default(self):
        """Test a zero leak fraction leaves traffic untouched."""
        records = list(self.corpus.records())[:20]
        traffic, manifest = plant_leaks(records, SMALL, self.corpus.devices_of(NodeKind.Bad))
        self.assertListEqual(records, traffic)
        self.assertListEqual([], manifest)

    def test_write_corpus(self):
        """Test the written files load back into the same graph, labels and verdicts."""
        with tempfile.TemporaryDirectory() as tmp:
            paths = write_corpus(self.corpus, Path(tmp))
            for name in ('traffic', 'edges', 'verdicts', 'ip_verdicts', 'ground_truth', 'dns', 'asn', 'infra_manifest'):
                self.assertTrue(paths[name].exists(), name)
            edges = self.corpus.graph.edge_set()
            self.assertSetEqual(edges, read_edge_list(paths['edges']))
            self.assertSetEqual(edges, load_edges(paths['traffic'], EntityMode.AppString))
            gt = GroundTruth.load_file(paths['ground_truth'])
            self.assertEqual(self.corpus.ground_truth.bad_devices, gt.bad_devices)
            self.assertEqual(self.corpus.ground_truth.good_devices, gt.good_devices)
            self.assertEqual(len(self.corpus.app_verdicts), len(VerdictTable.load_file(paths['verdicts'])))
            manifest = paths['leak_manifest'].read_text(encoding='utf-8').splitlines()
            self.assertListEqual(['packet_index,device_id,app,category,type,key,value'], manifest)


class TestRandomBipartite(unittest.TestCase):
    def test_sizes(self):
        """Test node counts, the edge bound and seeding."""
        g = random_bipartite(50, 20, 200, seed=1)
        self.assertEqual(50, g.n_devices)
        self.assertEqual(20, g.n_apps)
        self.assertLessEqual(g.n_edges, 200)
        self.assertGreater(g.n_edges, 150)
        self.assertEqual('d00', g.devices[0])
        self.assertSetEqual(g.edge_set(), random_bipartite(50, 20, 200, seed=1).edge_set())

    def test_invalid(self):
        """Test non-positive sizes are rejected."""
        with self.assertRaises(SynthConfigError):
            random_bipartite(0, 5, 5)


class TestPresetCorpora(unittest.TestCase):
    """Behavior of the two calibrated full-size corpora."""

    EPSILONS = (0.51, 0.6, 0.7, 0.8, 0.9)

    @classmethod
    def setUpClass(cls):
        cls.mobile = generate(SynthConfig.preset(TopologyMode.MobileLike))
        cls.dns = generate(SynthConfig.preset(TopologyMode.DnsLike))

    def sweep(self, corpus):
        return epsilon_sweep(corpus.graph, corpus.ground_truth, EvalConfig(k=5, epsilon_values=self.EPSILONS))

    def test_weak_potential_suffices_on_mobile(self):
        """Test a near-neutral potential separates the mobile-like classes better than a strong one."""
        sweep = self.sweep(self.mobile)
        self.assertEqual(set(self.EPSILONS), set(sweep))
        self.assertGreaterEqual(sweep[0.51], 0.95)
        self.assertLessEqual(sweep[0.9], sweep[0.51] - 0.005)

    def test_potential_barely_matters_on_dns(self):
        """Test the AUC of the dns-like corpus hardly moves across the edge potential."""
        sweep = self.sweep(self.dns)
        self.assertEqual(set(self.EPSILONS), set(sweep))
        self.assertLessEqual(sweep.spread(), 0.01)
        self.assertGreaterEqual(min(sweep.values()), 0.95)

    def test_cluster_distances(self):
        """Test bad-good paths are longer than bad-bad paths, much more so in the dns-like corpus."""
        mobile, dns = class_distances(self.mobile), class_distances(self.dns)
        self.assertGreater(mobile.gap(), 0.0)
        self.assertGreater(dns.gap(), mobile.gap())
        self.assertGreaterEqual(dns[PairClass.BG].mean, SynthConfig.preset('dns-like').bridge_length)

    def test_mobile_orderings(self):
        """Test mobile-like distances order BB < BG < GG and bad devices are more central."""
        distances = class_distances(self.mobile)
        self.assertLess(distances[PairClass.BB].mean, distances[PairClass.BG].mean)
        self.assertLess(distances[PairClass.BG].mean, distances[PairClass.GG].mean)
        bad, good = class_centrality(self.mobile)
        self.assertGreater(bad, good)

    def test_dns_orderings(self):
        """Test dns-like bad-good paths are six hops longer than bad-bad paths and good devices are more central."""
        distances = class_distances(self.dns)
        self.assertGreaterEqual(distances[PairClass.BG].mean - distances[PairClass.BB].mean, 6.0)
        bad, good = class_centrality(self.dns)
        self.assertGreater(good, bad)


if __name__ == '__main__':
    unittest.main()
