# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

"""
App and device ground truth from offline scanner verdicts.

Apps (or destination IPs) are labeled from the number of engines that flag them;
devices are labeled from the labels of the apps they use.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import StrEnum
from typing import TYPE_CHECKING, Protocol, override

import numpy as np

from guilt_graph.graph import remove_popular_apps
from guilt_graph.ingest import EntityMode
from guilt_graph.types import GroundTruthError, ParseError
from guilt_graph.util import read_csv, write_csv

if TYPE_CHECKING:
    from collections.abc import Iterable, Mapping, Sequence
    from pathlib import Path
    from typing import Self

    from guilt_graph.graph import BipartiteGraph
    from guilt_graph.types import AppId, DeviceId, StrPath

__all__ = [
    'AppLabel',
    'DeviceLabel',
    'GroundTruth',
    'LabelingConfig',
    'VerdictProvider',
    'VerdictRecord',
    'GridRow',
    'VerdictTable',
    'build_ground_truth',
    'label_app',
    'label_apps',
    'label_devices',
    'label_grid',
    'label_ip',
    'write_app_labels',
]

logger = logging.getLogger(__name__)

IP_BAD_ENGINES = 2
"""Engines needed to call a destination IP bad"""


class AppLabel(StrEnum):
    """Verdict-derived label of an app or destination IP."""

    Bad = 'bad'
    Suspicious = 'suspicious'
    Good = 'good'
    NoInfo = 'no-info'

    @override
    def __repr__(self) -> str:
        return f'<{self.name}>'


class DeviceLabel(StrEnum):
    """Ground-truth (or predicted) class of a device."""

    Bad = 'bad'
    Good = 'good'

    @override
    def __repr__(self) -> str:
        return f'<{self.name}>'


@dataclass(frozen=True, slots=True)
class VerdictRecord:
    """Aggregated multi-engine scan result for one app or IP."""

    entity_id: str
    positives: int
    total_engines: int

    def __post_init__(self):
        """Validate the engine counts at object creation."""
        if self.total_engines < 1:
            raise ValueError(f'{self.entity_id}: total_engines must be positive')
        if not 0 <= self.positives <= self.total_engines:
            raise ValueError(f'{self.entity_id}: positives must be within [0, {self.total_engines}]')


class VerdictProvider(Protocol):
    """Anything that can look up the verdict of an app or IP. A live scanner client would fit here."""

    def lookup(self, entity_id: str) -> VerdictRecord | None: ...


class VerdictTable:
    """A static snapshot of verdicts, loaded from CSV `entity_id,positives,total_engines`."""

    def __init__(self, records: Iterable[VerdictRecord] = ()):
        self._records: dict[str, VerdictRecord] = {r.entity_id: r for r in records}

    @classmethod
    def load_file(cls, verdict_file: StrPath) -> Self:
        """
        ### Factory Method ###
        Read a verdict CSV with a header row.

        - Raises OSError if the file does not exist.
        - Raises ParseError if a row is malformed.
        """
        records: list[VerdictRecord] = []
        for line_no, row in read_csv(verdict_file, ('entity_id', 'positives', 'total_engines')):
            try:
                records.append(VerdictRecord(row['entity_id'], int(row['positives']), int(row['total_engines'])))
            except (TypeError, ValueError) as e:
                raise ParseError(f'bad verdict row: {e}', line_no=line_no) from None
        return cls(records)

    def lookup(self, entity_id: str) -> VerdictRecord | None:
        return self._records.get(entity_id)

    def merged(self, other: VerdictTable) -> VerdictTable:
        """Union of two tables, `other` winning on shared ids."""
        return VerdictTable([*self._records.values(), *other._records.values()])

    def write(self, verdict_file: StrPath) -> Path:
        rows = ((r.entity_id, r.positives, r.total_engines) for r in sorted(self._records.values(), key=_by_id))
        return write_csv(verdict_file, ('entity_id', 'positives', 'total_engines'), rows)

    def __len__(self) -> int:
        return len(self._records)


def _by_id(record: VerdictRecord) -> str:
    return record.entity_id


@dataclass(frozen=True, slots=True)
class LabelingConfig:
    """Thresholds for ground-truth construction."""

    vt: int = 5
    """Engines needed to call an app bad"""
    n_p: int = 1000
    """Apps used by more than this many devices are popular and filtered out"""
    n_ab: int = 2
    """Bad apps needed to call a device bad"""
    mode: EntityMode = EntityMode.AppString

    def __post_init__(self):
        """Validate the thresholds at object creation."""
        if not isinstance(self.mode, EntityMode):
            object.__setattr__(self, 'mode', EntityMode(self.mode))
        for name in ('vt', 'n_p', 'n_ab'):
            if getattr(self, name) < 1:
                raise ValueError(f'{name} must be >= 1')


@dataclass(frozen=True)
class GroundTruth:
    """Labeled device sets and the app labels they were derived from."""

    bad_devices: frozenset[DeviceId] = frozenset()
    good_devices: frozenset[DeviceId] = frozenset()
    app_labels: Mapping[AppId, AppLabel] = field(default_factory=dict)

    def __post_init__(self):
        """Validate that the two device sets are disjoint."""
        object.__setattr__(self, 'bad_devices', frozenset(self.bad_devices))
        object.__setattr__(self, 'good_devices', frozenset(self.good_devices))
        overlap = self.bad_devices & self.good_devices
        if overlap:
            raise GroundTruthError(f'{len(overlap)} device(s) labeled both bad and good, e.g. {min(overlap)}')

    def label_of(self, device: DeviceId) -> DeviceLabel | None:
        if device in self.bad_devices:
            return DeviceLabel.Bad
        if device in self.good_devices:
            return DeviceLabel.Good
        return None

    @property
    def labeled(self) -> frozenset[DeviceId]:
        return self.bad_devices | self.good_devices

    def bad_apps(self) -> set[AppId]:
        return {a for a, label in self.app_labels.items() if label is AppLabel.Bad}

    def check_graph(self, g: BipartiteGraph):
        """Raise GroundTruthError if a labeled device is missing from `g`."""
        missing = [d for d in self.labeled if not g.has_device(d)]
        if missing:
            raise GroundTruthError(f'{len(missing)} labeled device(s) absent from the graph, e.g. {min(missing)}')

    def flipped(self, device: DeviceId) -> GroundTruth:
        """Copy with one device moved to the opposite class."""
        bad, good = set(self.bad_devices), set(self.good_devices)
        if device in bad:
            bad.remove(device)
            good.add(device)
        elif device in good:
            good.remove(device)
            bad.add(device)
        else:
            raise GroundTruthError(f'Device {device!r} is not labeled')
        return GroundTruth(frozenset(bad), frozenset(good), self.app_labels)

    def write(self, gt_file: StrPath) -> Path:
        """Export as CSV `device_id,label`, sorted by device id."""
        rows = [(d, DeviceLabel.Bad) for d in self.bad_devices]
        rows.extend((d, DeviceLabel.Good) for d in self.good_devices)
        rows.sort()
        return write_csv(gt_file, ('device_id', 'label'), rows)

    @classmethod
    def load_file(cls, gt_file: StrPath) -> Self:
        """Read a `device_id,label` CSV written by `write`. App labels are not stored there."""
        bad: set[DeviceId] = set()
        good: set[DeviceId] = set()
        for line_no, row in read_csv(gt_file, ('device_id', 'label')):
            try:
                label = DeviceLabel(row['label'])
            except ValueError:
                raise ParseError(f'unknown device label {row["label"]!r}', line_no=line_no) from None
            (bad if label is DeviceLabel.Bad else good).add(row['device_id'])
        return cls(frozenset(bad), frozenset(good))


def label_app(v: VerdictRecord | None, cfg: LabelingConfig) -> AppLabel:
    """Label an app from its verdict: `vt` or more engines is bad, fewer but some is suspicious."""
    return _threshold_label(v, cfg.vt)


def label_ip(v: VerdictRecord | None) -> AppLabel:
    """Label a destination IP: two or more engines is bad, exactly one is suspicious."""
    return _threshold_label(v, IP_BAD_ENGINES)


def _threshold_label(v: VerdictRecord | None, bad_at: int) -> AppLabel:
    if v is None:
        return AppLabel.NoInfo
    if v.positives >= bad_at:
        return AppLabel.Bad
    if v.positives >= 1:
        return AppLabel.Suspicious
    return AppLabel.Good


def label_apps(g: BipartiteGraph, provider: VerdictProvider, cfg: LabelingConfig) -> dict[AppId, AppLabel]:
    """Label every app node of `g`, using the app rule or the IP rule depending on `cfg.mode`."""
    if cfg.mode is EntityMode.DestinationIP:
        return {app: label_ip(provider.lookup(app)) for app in g.apps}
    return {app: label_app(provider.lookup(app), cfg) for app in g.apps}


def label_devices(g: BipartiteGraph, app_labels: Mapping[AppId, AppLabel], cfg: LabelingConfig) -> GroundTruth:
    """
    Label devices of an already popularity-filtered graph.

    - bad: uses `cfg.n_ab` or more bad apps
    - good: uses at least one app, none of them bad or suspicious
    - anything else stays unlabeled (the unknown pool)
    """
    label_of_app = [app_labels.get(a, AppLabel.NoInfo) for a in g.apps]
    is_bad = np.fromiter((lbl is AppLabel.Bad for lbl in label_of_app), dtype=bool, count=g.n_apps)
    is_susp = np.fromiter((lbl is AppLabel.Suspicious for lbl in label_of_app), dtype=bool, count=g.n_apps)

    inc = g.incidence()
    bad_counts = inc @ is_bad.astype(np.float64)
    susp_counts = inc @ is_susp.astype(np.float64)
    degrees = g.device_degrees()

    bad_mask = bad_counts >= cfg.n_ab
    # devices isolated by the popularity filter have no evidence either way and stay unlabeled
    good_mask = (bad_counts == 0) & (susp_counts == 0) & (degrees > 0)
    gt = GroundTruth(
        frozenset(d for d, b in zip(g.devices, bad_mask.tolist(), strict=True) if b),
        frozenset(d for d, ok in zip(g.devices, good_mask.tolist(), strict=True) if ok),
        dict(zip(g.apps, label_of_app, strict=True)),
    )
    logger.info(
        'ground truth: %d bad apps, %d bad devices, %d good devices (vt=%d, N_p=%d, N(A_B)=%d)',
        int(is_bad.sum()),
        len(gt.bad_devices),
        len(gt.good_devices),
        cfg.vt,
        cfg.n_p,
        cfg.n_ab,
    )
    return gt


def build_ground_truth(
    raw: BipartiteGraph, provider: VerdictProvider, cfg: LabelingConfig
) -> tuple[BipartiteGraph, GroundTruth]:
    """Popularity-filter `raw`, label its apps and devices. Returns the filtered graph with its ground truth."""
    g = remove_popular_apps(raw, cfg.n_p)
    return g, label_devices(g, label_apps(g, provider, cfg), cfg)


@dataclass(frozen=True, slots=True)
class GridRow:
    """Ground-truth sizes for one (vt, N_p) setting. `n_p` is None for the unfiltered graph."""

    vt: int
    n_p: int | None
    bad_apps: int
    bad_devices: int
    good_devices: int


def label_grid(
    raw: BipartiteGraph,
    provider: VerdictProvider,
    cfg: LabelingConfig,
    vts: Sequence[int] = (3, 4, 5, 6, 7),
    nps: Sequence[int | None] = (None, 10000, 5000, 1000),
) -> list[GridRow]:
    """Ground-truth sizes for every vt and popularity threshold combination."""
    rows: list[GridRow] = []
    for n_p in nps:
        g = raw if n_p is None else remove_popular_apps(raw, n_p)
        for vt in vts:
            point = LabelingConfig(vt=vt, n_p=n_p or cfg.n_p, n_ab=cfg.n_ab, mode=cfg.mode)
            gt = label_devices(g, label_apps(g, provider, point), point)
            rows.append(GridRow(vt, n_p, len(gt.bad_apps()), len(gt.bad_devices), len(gt.good_devices)))
    return rows


def write_app_labels(label_file: StrPath, app_labels: Mapping[AppId, AppLabel]) -> Path:
    return write_csv(label_file, ('app_id', 'label'), sorted(app_labels.items()))
