# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

"""
Synthetic device-app corpora with controllable homophily.

Two topologies are generated:

- mobile-like: bad devices use a shared pool of bad apps and also sprinkle edges over popular
  good apps; good devices live in app communities. Bad and good clusters sit about one hop apart.
- dns-like: bad and good clusters are only joined by a few long chains of suspicious
  apps and devices, so inter-cluster paths are much longer than intra-cluster ones.

A corpus carries everything the pipeline consumes: traffic, app and IP verdicts,
passive-DNS and AS enrichment, and manifests of what was planted for oracle checks.
"""

from __future__ import annotations

import logging
import tomllib
from dataclasses import dataclass, fields, replace
from datetime import date, timedelta
from enum import StrEnum
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, override

import numpy as np

from guilt_graph.graph import BipartiteGraph, write_edge_list
from guilt_graph.ingest import TrafficRecord, write_traffic
from guilt_graph.labeling import LabelingConfig, VerdictRecord, VerdictTable, build_ground_truth
from guilt_graph.postanalysis import SHORT_LIVED_DAYS, DnsEnrichment, DomainSpan, LeakCatalog
from guilt_graph.types import SynthConfigError
from guilt_graph.util import write_csv

if TYPE_CHECKING:
    from collections.abc import Collection, Iterator, Sequence
    from typing import Self

    from guilt_graph.labeling import GroundTruth
    from guilt_graph.types import AppId, DeviceId, StrPath

__all__ = [
    'NodeKind',
    'PlantedLeak',
    'SynthConfig',
    'SynthCorpus',
    'TopologyMode',
    'generate',
    'plant_leaks',
    'random_bipartite',
    'write_corpus',
]

logger = logging.getLogger(__name__)

BASE_TIMESTAMP = 1554076800
BASE_DATE = date(2018, 1, 1)
GOOD_ASN_POOL = (64500, 64501, 64502, 64503, 64504)
BAD_ASN_BASE = 4200000000
PLANT_STREAM = 1
"""Sub-stream of the seed used for leak planting, independent of the corpus draws"""


class TopologyMode(StrEnum):
    MobileLike = 'mobile-like'
    DnsLike = 'dns-like'

    @override
    def __repr__(self) -> str:
        return f'<{self.name}>'


class NodeKind(StrEnum):
    """Generation class of a device or app."""

    Bad = 'bad'
    Good = 'good'
    Chain = 'chain'
    """Bridge node between the clusters of a dns-like corpus"""
    Private = 'private'
    """App used by a single device"""

    @override
    def __repr__(self) -> str:
        return f'<{self.name}>'


@dataclass(frozen=True, slots=True)
class SynthConfig:
    """Generator parameters. The defaults are the mobile-like preset."""

    n_bad_devices: int = 400
    n_good_devices: int = 1600
    n_bad_apps: int = 20
    n_good_apps: int = 240
    p_homophile: float = 0.16
    """Edge probability of a device to an app of its own class (community)"""
    p_cross: float = 0.01
    """mobile-like: bad device to good app edge probability. dns-like: chance that a bad app gets a bridge"""
    topology_mode: TopologyMode = TopologyMode.MobileLike
    seed: int = 0
    n_communities: int = 12
    """Good app communities; good devices only use apps of their own community"""
    p_private: float = 0.12
    """Expected number of single-device apps per device"""
    bridge_length: int = 8
    """Hops between the bad and the good end of a dns-like bridge"""
    popularity_sigma: float = 0.5
    """Log-normal spread of good app popularity"""
    packets_per_edge: int = 2
    bad_app_ips: int = 12
    bad_app_domains: int = 20
    vt_range: tuple[int, int] = (3, 12)
    """Inclusive range of engines flagging a bad app"""
    total_engines: int = 60
    leak_fraction: float = 0.0
    """Share of bad-device packets that get a planted privacy leak"""

    def __post_init__(self):
        """Reject infeasible configurations at object creation."""
        if not isinstance(self.topology_mode, TopologyMode):
            try:
                object.__setattr__(self, 'topology_mode', TopologyMode(self.topology_mode))
            except ValueError:
                raise SynthConfigError(f'unknown topology_mode {self.topology_mode!r}') from None
        object.__setattr__(self, 'vt_range', tuple(self.vt_range))

        for name in ('n_bad_devices', 'n_good_devices', 'n_bad_apps', 'n_good_apps', 'n_communities'):
            if getattr(self, name) < 1:
                raise SynthConfigError(f'{name} must be >= 1')
        for name in ('packets_per_edge', 'bad_app_ips', 'bad_app_domains', 'total_engines'):
            if getattr(self, name) < 1:
                raise SynthConfigError(f'{name} must be >= 1')
        if not 0.0 <= self.p_cross < self.p_homophile <= 1.0:
            raise SynthConfigError('need 0 <= p_cross < p_homophile <= 1')
        if self.n_communities > min(self.n_good_apps, self.n_good_devices):
            raise SynthConfigError('every good community needs at least one app and one device')
        if self.bridge_length < 2 or self.bridge_length % 2:
            raise SynthConfigError('bridge_length must be an even number >= 2')
        if len(self.vt_range) != 2 or not 1 <= self.vt_range[0] <= self.vt_range[1] <= self.total_engines:
            raise SynthConfigError(f'vt_range must satisfy 1 <= low <= high <= {self.total_engines}')
        if self.p_private < 0 or self.popularity_sigma < 0:
            raise SynthConfigError('p_private and popularity_sigma must be non-negative')
        if not 0.0 <= self.leak_fraction <= 1.0:
            raise SynthConfigError('leak_fraction must be within [0, 1]')

    @classmethod
    def preset(cls, mode: TopologyMode | str, **overrides: object) -> Self:
        """
        ### Factory Method ###
        Load the committed calibrated configuration of a topology mode, then apply `overrides`.
        """
        mode = TopologyMode(mode)
        resource = resources.files('guilt_graph') / 'data' / f'{mode.value.replace("-", "_")}.toml'
        return cls.from_mapping(tomllib.loads(resource.read_text(encoding='utf-8')) | overrides)

    @classmethod
    def from_mapping(cls, values: dict[str, object]) -> Self:
        """
        ### Factory Method ###
        Build from plain key-value pairs (a TOML table). Unknown keys raise SynthConfigError.
        """
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise SynthConfigError(f'unknown synth key(s): {", ".join(unknown)}')
        try:
            return cls(**values)  # type: ignore[arg-type]
        except TypeError as e:
            raise SynthConfigError(str(e)) from None


@dataclass(frozen=True, slots=True, order=True)
class PlantedLeak:
    """A catalog key-value pair added to one packet."""

    packet_index: int
    device: DeviceId
    app: AppId
    category: str
    leak_type: str
    key: str
    value: str


def _device_ip(n: int) -> DeviceId:
    return f'10.{(n >> 16) & 255}.{(n >> 8) & 255}.{n & 255}'


def _server_ip(n: int) -> str:
    return f'172.{16 + (n >> 16)}.{(n >> 8) & 255}.{n & 255}'


def _top_up(mask: np.ndarray, allowed: np.ndarray, weights: np.ndarray, rng: np.random.Generator):
    """Give every row without an edge one allowed column, drawn by weight."""
    for row in np.flatnonzero(~mask.any(axis=1)).tolist():
        cols = np.flatnonzero(allowed[row])
        w = weights[cols]
        mask[row, rng.choice(cols, p=w / w.sum())] = True


def _by_degree(degrees: np.ndarray) -> np.ndarray:
    """Column order, highest degree first, ties by position."""
    return np.lexsort((np.arange(degrees.size), -degrees))


class SynthCorpus:
    """A generated corpus: graph, ground truth, verdicts, enrichment and lazily generated traffic."""

    def __init__(
        self,
        cfg: SynthConfig,
        graph: BipartiteGraph,
        device_kinds: dict[DeviceId, NodeKind],
        app_kinds: dict[AppId, NodeKind],
        app_weights: dict[AppId, float],
        app_verdicts: VerdictTable,
        ip_verdicts: VerdictTable,
        app_ips: dict[AppId, tuple[str, ...]],
        app_domains: dict[AppId, tuple[str, ...]],
        enrichment: DnsEnrichment,
    ):
        self.cfg: SynthConfig = cfg
        self.graph: BipartiteGraph = graph
        """Raw (unfiltered) device-app graph"""

        self.device_kinds: dict[DeviceId, NodeKind] = device_kinds
        self.app_kinds: dict[AppId, NodeKind] = app_kinds

        self.app_weights: dict[AppId, float] = app_weights
        """Popularity weight of each core good app"""

        self.app_verdicts: VerdictTable = app_verdicts
        self.ip_verdicts: VerdictTable = ip_verdicts
        self.app_ips: dict[AppId, tuple[str, ...]] = app_ips
        self.app_domains: dict[AppId, tuple[str, ...]] = app_domains
        self.enrichment: DnsEnrichment = enrichment

        self.ground_truth: GroundTruth = build_ground_truth(graph, app_verdicts, LabelingConfig())[1]
        """Ground truth by the default labeling rules"""

    def devices_of(self, kind: NodeKind) -> list[DeviceId]:
        return sorted(d for d, k in self.device_kinds.items() if k is kind)

    def apps_of(self, kind: NodeKind) -> list[AppId]:
        return sorted(a for a, k in self.app_kinds.items() if k is kind)

    def packets_for(self, app: AppId) -> int:
        """Packets per device-app edge; enough to touch every IP and domain of the app."""
        return max(self.cfg.packets_per_edge, len(self.app_ips[app]), len(self.app_domains[app]))

    def records(self) -> Iterator[TrafficRecord]:
        """Traffic in (device, app) order. Every device contacts every IP and domain of each of its apps."""
        ts = BASE_TIMESTAMP
        for device, app in self.graph.edges():
            ips, domains = self.app_ips[app], self.app_domains[app]
            for p in range(self.packets_for(app)):
                yield TrafficRecord(
                    timestamp=ts,
                    src_ip=device,
                    dst_ip=ips[p % len(ips)],
                    dst_domain=domains[p % len(domains)],
                    http_method='GET',
                    http_path=f'/api/v1/resource/{p}?pkg={app}&v=1',
                    app_string=app,
                    header_pairs=(('ver', '1.0'), ('lang', 'en'), ('ts', str(ts))),
                )
                ts += 1

    def infra_expectations(self) -> dict[DeviceId, tuple[int, int]]:
        """(distinct ASNs, distinct short-lived domains) each device is built to contact."""
        expected: dict[DeviceId, tuple[int, int]] = {}
        for device in self.graph.devices:
            asns: set[int] = set()
            short: set[str] = set()
            for app in self.graph.neighbors(self.graph.device_ref(device)):
                app_id = self.graph.node_id(app)
                asns.update(self.enrichment.asns[ip] for ip in self.app_ips[app_id])
                short.update(
                    d for d in self.app_domains[app_id] if self.enrichment.domains[d].lifetime_days < SHORT_LIVED_DAYS
                )
            expected[device] = (len(asns), len(short))
        return expected


def generate(cfg: SynthConfig) -> SynthCorpus:
    """
    Draw a corpus from `cfg`. The same configuration (seed included) always gives the same corpus.

    Device indices: bad, good, then bridge devices. App indices: bad, core good, bridge, then private apps.
    """
    rng = np.random.default_rng(cfg.seed)
    nb, ng, nba, nga = cfg.n_bad_devices, cfg.n_good_devices, cfg.n_bad_apps, cfg.n_good_apps
    mobile = cfg.topology_mode is TopologyMode.MobileLike

    weights = rng.lognormal(0.0, cfg.popularity_sigma, nga)
    weights /= weights.mean()

    bad_mask = rng.random((nb, nba)) < cfg.p_homophile
    _top_up(bad_mask, np.ones_like(bad_mask), np.ones(nba), rng)

    communities = cfg.n_communities if mobile else 1
    allowed = (np.arange(ng) % communities)[:, None] == (np.arange(nga) % communities)[None, :]
    good_mask = (rng.random((ng, nga)) < np.minimum(cfg.p_homophile * weights, 1.0)[None, :]) & allowed
    _top_up(good_mask, allowed, weights, rng)

    cross_mask = np.zeros((nb, nga), dtype=bool)
    if mobile:
        cross_mask = rng.random((nb, nga)) < np.minimum(cfg.p_cross * weights, 1.0)[None, :]

    dev_parts: list[np.ndarray] = []
    app_parts: list[np.ndarray] = []
    for mask, dev_offset, app_offset in ((bad_mask, 0, 0), (good_mask, nb, nba), (cross_mask, 0, nba)):
        d, a = np.nonzero(mask)
        dev_parts.append(d + dev_offset)
        app_parts.append(a + app_offset)

    device_kind = [NodeKind.Bad] * nb + [NodeKind.Good] * ng
    app_kind = [NodeKind.Bad] * nba + [NodeKind.Good] * nga
    chain_devs: list[int] = []
    chain_apps: list[int] = []

    if not mobile and cfg.p_cross > 0:
        n_bridges = max(1, int(rng.binomial(nba, cfg.p_cross)))
        bad_order = _by_degree(bad_mask.sum(axis=0))
        good_order = _by_degree(good_mask.sum(axis=0))
        for k in range(n_bridges):
            prev_app = int(bad_order[k % nba])
            end_app = nba + int(good_order[k % nga])
            hops = cfg.bridge_length // 2
            for h in range(hops):
                dev = len(device_kind)
                device_kind.append(NodeKind.Chain)
                chain_devs.append(dev)
                if h < hops - 1:
                    nxt = len(app_kind)
                    app_kind.append(NodeKind.Chain)
                    chain_apps.append(nxt)
                else:
                    nxt = end_app
                dev_parts.append(np.array([dev, dev]))
                app_parts.append(np.array([prev_app, nxt]))
                prev_app = nxt

    n_private = rng.poisson(cfg.p_private, nb + ng)
    for dev in np.flatnonzero(n_private).tolist():
        first = len(app_kind)
        app_kind.extend([NodeKind.Private] * int(n_private[dev]))
        app_parts.append(np.arange(first, len(app_kind)))
        dev_parts.append(np.full(int(n_private[dev]), dev))

    device_ids = [_device_ip(int(n) + 1) for n in rng.permutation(len(device_kind))]
    app_ids = [f'com.synth.app{int(n):05d}' for n in rng.permutation(len(app_kind))]

    graph = BipartiteGraph.from_indices(device_ids, app_ids, np.concatenate(dev_parts), np.concatenate(app_parts))
    used = graph.app_degrees() > 0
    if not used.all():
        graph = graph.keep_apps(used)

    app_verdicts, ip_verdicts, app_ips, app_domains, enrichment = _infrastructure(cfg, rng, app_ids, app_kind)
    in_graph = set(graph.apps)
    corpus = SynthCorpus(
        cfg,
        graph,
        dict(zip(device_ids, device_kind, strict=True)),
        {a: k for a, k in zip(app_ids, app_kind, strict=True) if a in in_graph},
        {app_ids[nba + i]: float(w) for i, w in enumerate(weights.tolist())},
        app_verdicts,
        ip_verdicts,
        app_ips,
        app_domains,
        enrichment,
    )
    logger.info(
        'synthetic %s corpus: %r, %d bridge devices, %d bad / %d good labeled',
        cfg.topology_mode,
        graph,
        len(chain_devs),
        len(corpus.ground_truth.bad_devices),
        len(corpus.ground_truth.good_devices),
    )
    return corpus


def _infrastructure(
    cfg: SynthConfig, rng: np.random.Generator, app_ids: Sequence[AppId], app_kind: Sequence[NodeKind]
) -> tuple[VerdictTable, VerdictTable, dict[AppId, tuple[str, ...]], dict[AppId, tuple[str, ...]], DnsEnrichment]:
    """
    Verdicts, server IPs, domains and their enrichment for every app.

    Bad apps get many IPs, each in its own AS, and many short-lived domains.
    Other apps get one or two IPs from a small AS pool and one long-lived domain.
    """
    app_verdicts: list[VerdictRecord] = []
    ip_verdicts: list[VerdictRecord] = []
    app_ips: dict[AppId, tuple[str, ...]] = {}
    app_domains: dict[AppId, tuple[str, ...]] = {}
    asns: dict[str, int] = {}
    domains: dict[str, DomainSpan] = {}
    next_ip = 1
    next_domain = 1
    next_bad_asn = BAD_ASN_BASE
    lo, hi = cfg.vt_range

    for app, kind in zip(app_ids, app_kind, strict=True):
        match kind:
            case NodeKind.Bad:
                app_verdicts.append(VerdictRecord(app, int(rng.integers(lo, hi + 1)), cfg.total_engines))
                n_ips, n_domains = cfg.bad_app_ips, cfg.bad_app_domains
            case NodeKind.Good:
                app_verdicts.append(VerdictRecord(app, 0, cfg.total_engines))
                n_ips, n_domains = int(rng.integers(1, 3)), 1
            case NodeKind.Chain:
                app_verdicts.append(VerdictRecord(app, 1, cfg.total_engines))
                n_ips, n_domains = 1, 1
            case NodeKind.Private:
                n_ips, n_domains = 1, 1

        ips = tuple(_server_ip(next_ip + i) for i in range(n_ips))
        next_ip += n_ips
        for ip in ips:
            if kind is NodeKind.Bad:
                asns[ip] = next_bad_asn
                next_bad_asn += 1
                ip_verdicts.append(VerdictRecord(ip, int(rng.integers(2, 6)), cfg.total_engines))
            else:
                asns[ip] = GOOD_ASN_POOL[int(rng.integers(len(GOOD_ASN_POOL)))]
                ip_verdicts.append(VerdictRecord(ip, 1 if kind is NodeKind.Chain else 0, cfg.total_engines))

        names = tuple(f'd{next_domain + i:06d}.example.net' for i in range(n_domains))
        next_domain += n_domains
        for name in names:
            first = BASE_DATE + timedelta(days=int(rng.integers(0, 365)))
            if kind is NodeKind.Bad:
                lifetime = int(rng.integers(10, 81))
            elif kind is NodeKind.Good:
                lifetime = int(rng.integers(365, 1500))
            else:
                lifetime = 400
            domains[name] = DomainSpan(first, first + timedelta(days=lifetime))

        app_ips[app] = ips
        app_domains[app] = names

    return (
        VerdictTable(app_verdicts),
        VerdictTable(ip_verdicts),
        app_ips,
        app_domains,
        DnsEnrichment(domains, asns),
    )


def plant_leaks(
    traffic: Sequence[TrafficRecord],
    cfg: SynthConfig,
    bad_devices: Collection[DeviceId],
    catalog: LeakCatalog | None = None,
    fraction: float | None = None,
) -> tuple[list[TrafficRecord], list[PlantedLeak]]:
    """
    Add one catalog key with a non-empty value to a `fraction` (default `cfg.leak_fraction`)
    of the packets sent by `bad_devices`. Returns the new traffic and the manifest of planted leaks.
    """
    fraction = cfg.leak_fraction if fraction is None else fraction
    records = list(traffic)
    if fraction <= 0:
        return records, []

    catalog = catalog or LeakCatalog.load()
    rng = np.random.default_rng([cfg.seed, PLANT_STREAM])
    bad = set(bad_devices)
    candidates = [i for i, rec in enumerate(records) if rec.src_ip in bad]
    if not candidates:
        return records, []
    chosen = np.sort(rng.choice(len(candidates), size=round(fraction * len(candidates)), replace=False))

    manifest: list[PlantedLeak] = []
    for c in chosen.tolist():
        i = candidates[c]
        entry = catalog.entries[int(rng.integers(len(catalog)))]
        value = f'x{int(rng.integers(1, 10**9))}'
        rec = records[i]
        records[i] = replace(rec, header_pairs=(*rec.header_pairs, (entry.keyword, value)))
        manifest.append(
            PlantedLeak(i, rec.src_ip, rec.app_string or '', entry.category, entry.leak_type, entry.keyword, value)
        )
    logger.info('planted %d leaks in %d bad-device packets', len(manifest), len(candidates))
    return records, manifest


def write_corpus(corpus: SynthCorpus, out_dir: StrPath, catalog: LeakCatalog | None = None) -> dict[str, Path]:
    """Write every file of the corpus under `out_dir`. Returns the written paths by name."""
    out = Path(out_dir)
    traffic, leaks = plant_leaks(list(corpus.records()), corpus.cfg, corpus.devices_of(NodeKind.Bad), catalog)
    dns, asn = corpus.enrichment.write(out / 'dns.csv', out / 'asn.csv')
    paths = {'dns': dns, 'asn': asn}

    paths['traffic'] = out / 'traffic.tsv'
    write_traffic(paths['traffic'], traffic)
    paths['edges'] = write_edge_list(out / 'edges.tsv', corpus.graph.edges())
    paths['verdicts'] = corpus.app_verdicts.write(out / 'verdicts.csv')
    paths['ip_verdicts'] = corpus.ip_verdicts.write(out / 'ip_verdicts.csv')
    paths['ground_truth'] = corpus.ground_truth.write(out / 'ground_truth.csv')
    paths['device_kinds'] = write_csv(
        out / 'device_kinds.csv', ('device_id', 'kind'), sorted(corpus.device_kinds.items())
    )
    paths['leak_manifest'] = write_csv(
        out / 'leak_manifest.csv',
        ('packet_index', 'device_id', 'app', 'category', 'type', 'key', 'value'),
        ((p.packet_index, p.device, p.app, p.category, p.leak_type, p.key, p.value) for p in leaks),
    )
    expected = corpus.infra_expectations()
    paths['infra_manifest'] = write_csv(
        out / 'infra_manifest.csv',
        ('device_id', 'kind', 'asn_count', 'short_lived_domains'),
        ((d, corpus.device_kinds[d], *expected[d]) for d in sorted(expected)),
    )
    logger.info('wrote synthetic corpus to %s', out)
    return paths


def random_bipartite(n_devices: int, n_apps: int, n_edges: int, seed: int = 0) -> BipartiteGraph:
    """Uniform random bipartite graph; duplicate draws merge, so slightly fewer than `n_edges` edges remain."""
    if min(n_devices, n_apps, n_edges) < 1:
        raise SynthConfigError('random_bipartite needs positive sizes')
    rng = np.random.default_rng(seed)
    dev_idx = rng.integers(0, n_devices, n_edges)
    app_idx = rng.integers(0, n_apps, n_edges)
    width_d, width_a = len(str(n_devices)), len(str(n_apps))
    devices = [f'd{i:0{width_d}d}' for i in range(n_devices)]
    apps = [f'a{i:0{width_a}d}' for i in range(n_apps)]
    return BipartiteGraph.from_indices(devices, apps, dev_idx, app_idx)
