# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

"""
Post-analysis of classified devices.

Privacy leaks are key-value pairs in HTTP headers or URL query strings whose key is a
catalog keyword and whose value is non-empty. Infrastructure statistics count the distinct
autonomous systems and the short-lived domains each device contacts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date
from importlib import resources
from typing import TYPE_CHECKING

from guilt_graph.types import EvaluationError, ParseError
from guilt_graph.util import empirical_cdf, read_csv, write_csv

if TYPE_CHECKING:
    from collections.abc import Iterable, Mapping, Sequence
    from pathlib import Path
    from typing import Self

    from guilt_graph.ingest import TrafficRecord
    from guilt_graph.types import AppId, DeviceId, StrPath

__all__ = [
    'DnsEnrichment',
    'DomainSpan',
    'LeakCatalog',
    'LeakEntry',
    'LeakFinding',
    'LeakReport',
    'LeakScan',
    'asn_stats',
    'count_cdf',
    'find_leaks',
    'leak_type_ratios',
    'scan_leaks',
    'select_extremes',
    'share_above',
    'short_lived_domains',
    'unflagged_leaking_app_fraction',
    'write_findings',
    'write_infra_stats',
    'write_leak_reports',
]

logger = logging.getLogger(__name__)

SHORT_LIVED_DAYS = 90
CATALOG_RESOURCE = 'leak_catalog.csv'


def select_extremes(scores: Mapping[DeviceId, float], n: int) -> tuple[list[DeviceId], list[DeviceId]]:
    """
    The `n` highest-scoring devices (highest first) and the `n` lowest (lowest first).
    Equal scores are ordered by device id, so both lists are deterministic and disjoint.

    Raises EvaluationError if fewer than 2n devices are scored.
    """
    if n < 1:
        raise ValueError(f'n must be >= 1, got {n}')
    if len(scores) < 2 * n:
        raise EvaluationError(f'Need at least {2 * n} scored devices, have {len(scores)}')
    ranked = sorted(scores, key=lambda d: (-scores[d], d))
    return ranked[:n], ranked[::-1][:n]


@dataclass(frozen=True, slots=True)
class LeakEntry:
    """One catalog keyword and the private information type it reveals."""

    category: str
    leak_type: str
    keyword: str

    def __post_init__(self):
        """Validate the keyword at object creation."""
        if not self.keyword or self.keyword != self.keyword.lower():
            raise ValueError(f'Catalog keyword {self.keyword!r} must be non-empty lowercase')


class LeakCatalog:
    """Keywords per private information type, loaded from CSV `category,type,keyword`."""

    def __init__(self, entries: Iterable[LeakEntry]):
        self.entries: tuple[LeakEntry, ...] = tuple(entries)
        self._by_keyword: dict[str, LeakEntry] = {}
        for e in self.entries:
            if e.keyword in self._by_keyword:
                raise ValueError(f'Catalog keyword {e.keyword!r} is listed twice')
            self._by_keyword[e.keyword] = e

    @classmethod
    def from_csv(cls, catalog_file: StrPath) -> Self:
        """
        ### Factory Method ###
        Read a catalog file. Keywords are lowercased on load.
        """
        entries: list[LeakEntry] = []
        seen: set[str] = set()
        for line_no, row in read_csv(catalog_file, ('category', 'type', 'keyword')):
            keyword = row['keyword'].strip().lower()
            if not keyword:
                raise ParseError('empty keyword', line_no=line_no)
            if keyword in seen:
                raise ParseError(f'duplicate keyword {keyword!r}', line_no=line_no)
            seen.add(keyword)
            entries.append(LeakEntry(row['category'].strip(), row['type'].strip(), keyword))
        return cls(entries)

    @classmethod
    def load(cls) -> Self:
        """
        ### Factory Method ###
        The packaged catalog of commonly leaked information types.
        """
        with resources.as_file(resources.files('guilt_graph') / 'data' / CATALOG_RESOURCE) as path:
            return cls.from_csv(path)

    def match(self, key: str) -> LeakEntry | None:
        """Catalog entry whose keyword equals `key`, ignoring case."""
        return self._by_keyword.get(key.lower())

    @property
    def leak_types(self) -> list[str]:
        """Information types in catalog order."""
        return list(dict.fromkeys(e.leak_type for e in self.entries))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True, slots=True, order=True)
class LeakFinding:
    """A catalog key with a non-empty value found in one packet."""

    packet_index: int
    """Position of the packet in the scanned record stream, from 0"""
    device: DeviceId
    app: AppId | None
    leak_type: str
    key: str


def find_leaks(rec: TrafficRecord, catalog: LeakCatalog) -> list[tuple[LeakEntry, str]]:
    """(catalog entry, key as written) for every leaking header or query pair of one packet."""
    found: list[tuple[LeakEntry, str]] = []
    for key, value in (*rec.header_pairs, *rec.query_pairs()):
        if not value:
            continue
        entry = catalog.match(key)
        if entry is not None:
            found.append((entry, key))
    return found


@dataclass
class LeakReport:
    """Per-device leak counters. Two reports of the same device merge by addition."""

    device: DeviceId
    leaked_types: set[str] = field(default_factory=set)
    leaking_apps: set[AppId] = field(default_factory=set)
    apps: set[AppId] = field(default_factory=set)
    leaking_packets: int = 0
    total_packets: int = 0

    @property
    def total_apps(self) -> int:
        return len(self.apps)

    @property
    def leaking_app_ratio(self) -> float:
        """Leaking apps over all apps of the device."""
        return len(self.leaking_apps) / self.total_apps if self.apps else 0.0

    @property
    def leaking_traffic_ratio(self) -> float:
        """Leaking packets over all packets of the device."""
        return self.leaking_packets / self.total_packets if self.total_packets else 0.0

    def merge(self, other: LeakReport) -> LeakReport:
        if other.device != self.device:
            raise ValueError('Only reports of the same device can be merged')
        return LeakReport(
            self.device,
            self.leaked_types | other.leaked_types,
            self.leaking_apps | other.leaking_apps,
            self.apps | other.apps,
            self.leaking_packets + other.leaking_packets,
            self.total_packets + other.total_packets,
        )


@dataclass(frozen=True)
class LeakScan:
    reports: dict[DeviceId, LeakReport]
    findings: list[LeakFinding]


def scan_leaks(
    records: Iterable[TrafficRecord], devices: Iterable[DeviceId] | None, catalog: LeakCatalog
) -> LeakScan:
    """
    Scan packets of `devices` (every device when None) for catalog leaks.

    Every requested device gets a report, even without traffic. A packet's app is its app string;
    packets without one count as traffic but not as an app.
    """
    wanted = None if devices is None else set(devices)
    reports: dict[DeviceId, LeakReport] = {d: LeakReport(d) for d in sorted(wanted or ())}
    findings: list[LeakFinding] = []
    for i, rec in enumerate(records):
        device = rec.src_ip
        if wanted is not None and device not in wanted:
            continue
        report = reports.setdefault(device, LeakReport(device))
        report.total_packets += 1
        if rec.app_string is not None:
            report.apps.add(rec.app_string)

        leaks = find_leaks(rec, catalog)
        if not leaks:
            continue
        report.leaking_packets += 1
        if rec.app_string is not None:
            report.leaking_apps.add(rec.app_string)
        for entry, key in leaks:
            report.leaked_types.add(entry.leak_type)
            findings.append(LeakFinding(i, device, rec.app_string, entry.leak_type, key))

    logger.info('leak scan: %d findings over %d devices', len(findings), len(reports))
    return LeakScan(reports, findings)


def leak_type_ratios(
    reports: Mapping[DeviceId, LeakReport], devices: Iterable[DeviceId], catalog: LeakCatalog | None = None
) -> dict[str, float]:
    """Fraction of `devices` leaking each information type. Types of `catalog` are listed even at 0."""
    group = sorted(set(devices))
    if not group:
        return {}
    counts: dict[str, int] = dict.fromkeys(catalog.leak_types, 0) if catalog else {}
    for d in group:
        report = reports.get(d)
        for leak_type in report.leaked_types if report else ():
            counts[leak_type] = counts.get(leak_type, 0) + 1
    return {t: c / len(group) for t, c in counts.items()}


def unflagged_leaking_app_fraction(reports: Mapping[DeviceId, LeakReport], bad_apps: Iterable[AppId]) -> float | None:
    """Share of leaking apps that are not in the bad app set. None when nothing leaks."""
    leaking = set().union(*(r.leaking_apps for r in reports.values()))
    if not leaking:
        return None
    return len(leaking - set(bad_apps)) / len(leaking)


@dataclass(frozen=True, slots=True)
class DomainSpan:
    """First and last passive-DNS sighting of a domain."""

    first_seen: date
    last_seen: date

    def __post_init__(self):
        """Validate the date order at object creation."""
        if self.first_seen > self.last_seen:
            raise ValueError(f'first_seen {self.first_seen} is after last_seen {self.last_seen}')

    @property
    def lifetime_days(self) -> int:
        return (self.last_seen - self.first_seen).days


@dataclass(frozen=True)
class DnsEnrichment:
    """Passive-DNS lifetimes per domain and the autonomous system of each IP."""

    domains: Mapping[str, DomainSpan] = field(default_factory=dict)
    asns: Mapping[str, int] = field(default_factory=dict)

    @classmethod
    def load_files(cls, dns_file: StrPath | None = None, asn_file: StrPath | None = None) -> Self:
        """
        ### Factory Method ###
        Read `domain,first_seen,last_seen` (ISO dates) and `ip,asn` CSV files. Either may be omitted.
        """
        domains: dict[str, DomainSpan] = {}
        if dns_file is not None:
            for line_no, row in read_csv(dns_file, ('domain', 'first_seen', 'last_seen')):
                try:
                    span = DomainSpan(date.fromisoformat(row['first_seen']), date.fromisoformat(row['last_seen']))
                except ValueError as e:
                    raise ParseError(f'bad domain row: {e}', line_no=line_no) from None
                domains[row['domain'].lower()] = span
        asns: dict[str, int] = {}
        if asn_file is not None:
            for line_no, row in read_csv(asn_file, ('ip', 'asn')):
                try:
                    asns[row['ip']] = int(row['asn'])
                except ValueError:
                    raise ParseError(f'bad asn {row["asn"]!r}', line_no=line_no) from None
        return cls(domains, asns)

    def write(self, dns_file: StrPath, asn_file: StrPath) -> tuple[Path, Path]:
        dns_rows = (
            (d, s.first_seen.isoformat(), s.last_seen.isoformat()) for d, s in sorted(self.domains.items())
        )
        return (
            write_csv(dns_file, ('domain', 'first_seen', 'last_seen'), dns_rows),
            write_csv(asn_file, ('ip', 'asn'), sorted(self.asns.items())),
        )


def asn_stats(
    records: Iterable[TrafficRecord], devices: Iterable[DeviceId], enrich: DnsEnrichment
) -> dict[DeviceId, int]:
    """Distinct autonomous systems contacted by each device. IPs without an AS are ignored."""
    seen: dict[DeviceId, set[int]] = {d: set() for d in sorted(set(devices))}
    for rec in records:
        asn = enrich.asns.get(rec.dst_ip)
        if asn is not None and rec.src_ip in seen:
            seen[rec.src_ip].add(asn)
    return {d: len(s) for d, s in seen.items()}


def short_lived_domains(
    records: Iterable[TrafficRecord],
    devices: Iterable[DeviceId],
    enrich: DnsEnrichment,
    window_days: int = SHORT_LIVED_DAYS,
) -> dict[DeviceId, int]:
    """Distinct domains each device contacted whose lifetime is strictly shorter than `window_days`."""
    seen: dict[DeviceId, set[str]] = {d: set() for d in sorted(set(devices))}
    for rec in records:
        if rec.dst_domain is None or rec.src_ip not in seen:
            continue
        span = enrich.domains.get(rec.dst_domain.lower())
        if span is not None and span.lifetime_days < window_days:
            seen[rec.src_ip].add(rec.dst_domain.lower())
    return {d: len(s) for d, s in seen.items()}


def count_cdf(counts: Mapping[DeviceId, int]) -> list[tuple[float, float]]:
    """CDF of per-device counts across a device group."""
    return empirical_cdf(counts.values())


def share_above(counts: Mapping[DeviceId, int], threshold: int) -> float:
    """Fraction of devices whose count is strictly above `threshold`."""
    if not counts:
        return 0.0
    return sum(1 for c in counts.values() if c > threshold) / len(counts)


def write_leak_reports(report_file: StrPath, reports: Mapping[DeviceId, LeakReport], group: str) -> Path:
    header = (
        'group',
        'device_id',
        'leaked_types',
        'n_leaked_types',
        'leaking_apps',
        'total_apps',
        'leaking_packets',
        'total_packets',
        'leaking_app_ratio',
        'leaking_traffic_ratio',
    )
    rows = (
        (
            group,
            d,
            ';'.join(sorted(r.leaked_types)),
            len(r.leaked_types),
            len(r.leaking_apps),
            r.total_apps,
            r.leaking_packets,
            r.total_packets,
            r.leaking_app_ratio,
            r.leaking_traffic_ratio,
        )
        for d, r in sorted(reports.items())
    )
    return write_csv(report_file, header, rows)


def write_findings(findings_file: StrPath, findings: Sequence[LeakFinding]) -> Path:
    rows = ((f.packet_index, f.device, f.app or '', f.leak_type, f.key) for f in sorted(findings))
    return write_csv(findings_file, ('packet_index', 'device_id', 'app', 'type', 'key'), rows)


def write_infra_stats(
    infra_file: StrPath,
    groups: Mapping[str, Sequence[DeviceId]],
    asns: Mapping[DeviceId, int],
    short: Mapping[DeviceId, int],
) -> Path:
    """CSV `group,device_id,asn_count,short_lived_domains`."""
    rows = ((name, d, asns.get(d, 0), short.get(d, 0)) for name, members in groups.items() for d in members)
    return write_csv(infra_file, ('group', 'device_id', 'asn_count', 'short_lived_domains'), rows)
