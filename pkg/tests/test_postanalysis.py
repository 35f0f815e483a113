import tempfile
import unittest
from datetime import date
from pathlib import Path

from guilt_graph.ingest import TrafficRecord
from guilt_graph.postanalysis import (
    DnsEnrichment,
    DomainSpan,
    LeakCatalog,
    LeakEntry,
    LeakReport,
    asn_stats,
    count_cdf,
    find_leaks,
    leak_type_ratios,
    scan_leaks,
    select_extremes,
    share_above,
    short_lived_domains,
    unflagged_leaking_app_fraction,
    write_findings,
)
from guilt_graph.types import EvaluationError, ParseError

CATALOG = LeakCatalog([
    LeakEntry('Device Identifier', 'IMEI', 'imei'),
    LeakEntry('Phone', 'IMSI', 'imsi'),
    LeakEntry('Location', 'GPS', 'lat'),
])


def packet(
    src: str,
    app: str | None,
    path: str | None = None,
    headers: tuple[tuple[str, str], ...] = (),
    dst: str = '172.16.0.1',
    domain: str | None = None,
) -> TrafficRecord:
    return TrafficRecord(1, src, dst, domain, 'GET', path, app, headers)


class TestSelectExtremes(unittest.TestCase):
    def test_top_and_bottom(self):
        """Test the highest and lowest devices come out in rank order."""
        scores = {'a': 0.9, 'b': 0.1, 'c': 0.5, 'd': 0.7, 'e': 0.3}
        top, bottom = select_extremes(scores, 2)
        self.assertListEqual(['a', 'd'], top)
        self.assertListEqual(['b', 'e'], bottom)

    def test_ties_by_device_id(self):
        """Test equal scores break ties by device id and the lists stay disjoint."""
        scores = dict.fromkeys(('d', 'b', 'a', 'c'), 0.5)
        top, bottom = select_extremes(scores, 2)
        self.assertListEqual(['a', 'b'], top)
        self.assertListEqual(['d', 'c'], bottom)

    def test_too_few(self):
        """Test fewer than 2n scored devices raises EvaluationError."""
        with self.assertRaises(EvaluationError):
            select_extremes({'a': 0.1, 'b': 0.2, 'c': 0.3}, 2)
        with self.assertRaises(ValueError):
            select_extremes({'a': 0.1}, 0)


class TestCatalog(unittest.TestCase):
    def test_packaged_catalog(self):
        """Test the bundled catalog loads and covers the common identifier types."""
        catalog = LeakCatalog.load()
        self.assertGreater(len(catalog), 50)
        self.assertEqual('IMEI', catalog.match('IMEI').leak_type)
        self.assertIsNone(catalog.match('color'))
        self.assertIn('IMSI', catalog.leak_types)

    def test_file_errors(self):
        """Test duplicate and empty keywords are reported with their line."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'catalog.csv'
            path.write_text('category,type,keyword\nA,T,imei\nA,T,IMEI\n', encoding='utf-8')
            with self.assertRaises(ParseError) as cm:
                LeakCatalog.from_csv(path)
            self.assertEqual(3, cm.exception.line_no)
            path.write_text('category,type,keyword\nA,T, \n', encoding='utf-8')
            with self.assertRaises(ParseError):
                LeakCatalog.from_csv(path)

    def test_uppercase_entry_rejected(self):
        """Test catalog entries must be lowercase."""
        with self.assertRaises(ValueError):
            LeakEntry('A', 'T', 'IMEI')


class TestLeaks(unittest.TestCase):
    def test_find_leaks(self):
        """Test keys match case-insensitively in headers and query strings, empty values do not count."""
        rec = packet('10.0.0.1', 'com.a', '/x?IMEI=35&lat=&q=1', headers=(('imsi', '4600'), ('ua', 'z')))
        found = {(e.leak_type, key) for e, key in find_leaks(rec, CATALOG)}
        self.assertSetEqual({('IMEI', 'IMEI'), ('IMSI', 'imsi')}, found)

    def test_whitespace_value_leaks(self):
        """Test a value of blanks is still a non-empty value."""
        rec = packet('10.0.0.1', 'com.a', '/x?lat=%20', headers=(('imsi', '  '),))
        found = {(e.leak_type, key) for e, key in find_leaks(rec, CATALOG)}
        self.assertSetEqual({('GPS', 'lat'), ('IMSI', 'imsi')}, found)

    def test_scan(self):
        """Test per-device counters over a packet stream."""
        records = [
            packet('10.0.0.1', 'com.a', '/x?imei=35'),
            packet('10.0.0.1', 'com.a', '/x?q=1'),
            packet('10.0.0.1', 'com.b', headers=(('lat', '33.7'),)),
            packet('10.0.0.1', None, '/y?imsi=1'),
            packet('10.0.0.2', 'com.c', '/x?imei=35'),
        ]
        scan = scan_leaks(records, ['10.0.0.1', '10.0.0.3'], CATALOG)
        self.assertSetEqual({'10.0.0.1', '10.0.0.3'}, set(scan.reports))
        r = scan.reports['10.0.0.1']
        self.assertSetEqual({'IMEI', 'GPS', 'IMSI'}, r.leaked_types)
        self.assertEqual(3, r.leaking_packets)
        self.assertEqual(4, r.total_packets)
        self.assertEqual(2, r.total_apps)
        self.assertEqual(1.0, r.leaking_app_ratio)
        self.assertEqual(0.75, r.leaking_traffic_ratio)
        self.assertEqual(0.0, scan.reports['10.0.0.3'].leaking_traffic_ratio)
        self.assertListEqual([0, 2, 3], [f.packet_index for f in scan.findings])
        self.assertIsNone(scan.findings[-1].app)

        everyone = scan_leaks(records, None, CATALOG)
        self.assertSetEqual({'10.0.0.1', '10.0.0.2'}, set(everyone.reports))

    def test_merge(self):
        """Test merging two partial reports of one device adds the counters."""
        a = LeakReport('d', {'IMEI'}, {'com.a'}, {'com.a'}, 1, 2)
        b = LeakReport('d', {'GPS'}, set(), {'com.b'}, 0, 3)
        merged = a.merge(b)
        self.assertSetEqual({'IMEI', 'GPS'}, merged.leaked_types)
        self.assertEqual(5, merged.total_packets)
        self.assertEqual(0.5, merged.leaking_app_ratio)
        with self.assertRaises(ValueError):
            a.merge(LeakReport('e'))

    def test_type_ratios(self):
        """Test the share of a group leaking each type, catalog types included at zero."""
        reports = {
            'd1': LeakReport('d1', {'IMEI', 'GPS'}),
            'd2': LeakReport('d2', {'IMEI'}),
        }
        ratios = leak_type_ratios(reports, ['d1', 'd2', 'd3', 'd4'], CATALOG)
        self.assertDictEqual({'IMEI': 0.5, 'IMSI': 0.0, 'GPS': 0.25}, ratios)
        self.assertDictEqual({}, leak_type_ratios(reports, []))

    def test_unflagged_apps(self):
        """Test the share of leaking apps outside the bad app set."""
        reports = {
            'd1': LeakReport('d1', leaking_apps={'com.a', 'com.b'}),
            'd2': LeakReport('d2', leaking_apps={'com.c'}),
        }
        self.assertAlmostEqual(2 / 3, unflagged_leaking_app_fraction(reports, {'com.a'}))
        self.assertIsNone(unflagged_leaking_app_fraction({'d': LeakReport('d')}, set()))

    def test_findings_file(self):
        """Test findings are written sorted by packet index."""
        records = [packet('10.0.0.1', None, '/x?imei=1'), packet('10.0.0.1', 'com.a', '/x?lat=2')]
        scan = scan_leaks(records, None, CATALOG)
        with tempfile.TemporaryDirectory() as tmp:
            lines = write_findings(Path(tmp) / 'f.csv', scan.findings[::-1]).read_text(encoding='utf-8').splitlines()
        self.assertListEqual(
            ['packet_index,device_id,app,type,key', '0,10.0.0.1,,IMEI,imei', '1,10.0.0.1,com.a,GPS,lat'], lines
        )


class TestInfrastructure(unittest.TestCase):
    def setUp(self):
        self.enrich = DnsEnrichment(
            {
                'fresh.example': DomainSpan(date(2019, 1, 1), date(2019, 2, 1)),
                'edge.example': DomainSpan(date(2019, 1, 1), date(2019, 4, 1)),  # exactly 90 days
                'old.example': DomainSpan(date(2015, 1, 1), date(2019, 1, 1)),
            },
            {'172.16.0.1': 64500, '172.16.0.2': 64501, '172.16.0.3': 64500},
        )
        self.records = [
            packet('10.0.0.1', 'com.a', dst='172.16.0.1', domain='FRESH.example'),
            packet('10.0.0.1', 'com.a', dst='172.16.0.2', domain='edge.example'),
            packet('10.0.0.1', 'com.a', dst='172.16.0.3', domain='fresh.example'),
            packet('10.0.0.1', 'com.a', dst='172.16.0.9', domain='unknown.example'),
            packet('10.0.0.2', 'com.b', dst='172.16.0.1', domain='old.example'),
        ]

    def test_asn_counts(self):
        """Test distinct autonomous systems per device, unmapped IPs ignored."""
        counts = asn_stats(self.records, ['10.0.0.1', '10.0.0.2', '10.0.0.3'], self.enrich)
        self.assertDictEqual({'10.0.0.1': 2, '10.0.0.2': 1, '10.0.0.3': 0}, counts)

    def test_short_lived(self):
        """Test the lifetime window is strict and domains compare case-insensitively."""
        counts = short_lived_domains(self.records, ['10.0.0.1', '10.0.0.2'], self.enrich)
        self.assertDictEqual({'10.0.0.1': 1, '10.0.0.2': 0}, counts)
        self.assertEqual(2, short_lived_domains(self.records, ['10.0.0.1'], self.enrich, window_days=91)['10.0.0.1'])

    def test_group_statistics(self):
        """Test the CDF and the share above a threshold."""
        counts = {'a': 1, 'b': 3, 'c': 3, 'd': 30}
        self.assertListEqual([(1, 0.25), (3, 0.75), (30, 1.0)], count_cdf(counts))
        self.assertEqual(0.25, share_above(counts, 20))
        self.assertEqual(0.0, share_above({}, 20))

    def test_enrichment_files(self):
        """Test enrichment files read back and malformed rows are reported."""
        with tempfile.TemporaryDirectory() as tmp:
            dns, asn = self.enrich.write(Path(tmp) / 'dns.csv', Path(tmp) / 'asn.csv')
            loaded = DnsEnrichment.load_files(dns, asn)
            self.assertEqual(self.enrich.domains, loaded.domains)
            self.assertEqual(self.enrich.asns, loaded.asns)
            self.assertDictEqual({}, dict(DnsEnrichment.load_files(asn_file=asn).domains))

            bad = Path(tmp) / 'bad.csv'
            bad.write_text('domain,first_seen,last_seen\nx.example,2019-05-01,2019-01-01\n', encoding='utf-8')
            with self.assertRaises(ParseError) as cm:
                DnsEnrichment.load_files(dns_file=bad)
            self.assertEqual(2, cm.exception.line_no)

    def test_span_order(self):
        """Test a span ending before it starts is rejected."""
        with self.assertRaises(ValueError):
            DomainSpan(date(2019, 2, 1), date(2019, 1, 1))


if __name__ == '__main__':
    unittest.main()
