# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

"""
The device-app bipartite graph.

Devices and apps are dense integer indexed, each side sorted lexicographically by id.
Whole-graph (global) node numbering puts every device first, then every app.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import StrEnum
from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING, override

import numpy as np
from scipy import sparse

from guilt_graph.types import InvalidNodeError, ParseError
from guilt_graph.util import empirical_cdf

if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator, Sequence
    from typing import Self

    from guilt_graph.types import AppId, DeviceId, Edge, StrPath

__all__ = [
    'BipartiteGraph',
    'NodeRef',
    'Side',
    'build_graph',
    'degree_cdf',
    'neighbors',
    'read_edge_list',
    'remove_popular_apps',
    'write_edge_list',
]

logger = logging.getLogger(__name__)


class Side(StrEnum):
    """Which side of the bipartition a node lives on."""

    Device = 'device'
    App = 'app'

    @override
    def __repr__(self) -> str:
        return f'<{self.name}>'

    def other(self) -> Side:
        return Side.App if self is Side.Device else Side.Device


@dataclass(frozen=True, order=True, slots=True)
class NodeRef:
    """A side-tagged node index."""

    side: Side
    index: int

    def __post_init__(self):
        """Validate the NodeRef struct at object creation."""
        if not isinstance(self.side, Side):
            object.__setattr__(self, 'side', Side(self.side))
        if self.index < 0:
            raise InvalidNodeError(f'Node index must be non-negative, got {self.index}')

    @override
    def __str__(self) -> str:
        return f'{self.side}:{self.index}'


def _csr(rows: np.ndarray, cols: np.ndarray, n_rows: int, n_cols: int) -> sparse.csr_array:
    """CSR built from (row, col) pairs already sorted by row then col."""
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
    data = np.ones(rows.size, dtype=np.float64)
    return sparse.csr_array((data, cols.astype(np.int64), indptr), shape=(n_rows, n_cols))


class BipartiteGraph:
    """
    An immutable bipartite graph of devices and apps joined by undirected, unweighted edges.

    - Edges are stored once each, as parallel arrays of (device index, app index)
      sorted by device then app.
    - Operations that change the graph return a new graph.
    """

    def __init__(self, devices: Sequence[DeviceId], apps: Sequence[AppId], dev_idx: np.ndarray, app_idx: np.ndarray):
        """
        Initialize from id lists and edge endpoint index arrays.
          Use `build_graph(edges)` or `BipartiteGraph.from_edges` to start from id pairs.

        Duplicate pairs are merged. Raises InvalidNodeError for out-of-range indices.
        """
        self.devices: tuple[DeviceId, ...] = tuple(devices)
        """Device ids, position is the device index"""

        self.apps: tuple[AppId, ...] = tuple(apps)
        """App ids, position is the app index"""

        dev_idx = np.asarray(dev_idx, dtype=np.int64)
        app_idx = np.asarray(app_idx, dtype=np.int64)
        if dev_idx.shape != app_idx.shape:
            raise ValueError('Edge endpoint arrays must have the same length')
        if dev_idx.size and (dev_idx.min() < 0 or dev_idx.max() >= len(self.devices)):
            raise InvalidNodeError('Edge references a device index out of range')
        if app_idx.size and (app_idx.min() < 0 or app_idx.max() >= len(self.apps)):
            raise InvalidNodeError('Edge references an app index out of range')

        # unique keys sort by (device, app) and drop parallel edges
        keys = np.unique(dev_idx * max(len(self.apps), 1) + app_idx)
        n_apps = max(len(self.apps), 1)

        self.edge_devices: np.ndarray = keys // n_apps
        """Device endpoint of every edge"""

        self.edge_apps: np.ndarray = keys % n_apps
        """App endpoint of every edge"""

        self._device_index: dict[DeviceId, int] = {d: i for i, d in enumerate(self.devices)}
        self._app_index: dict[AppId, int] = {a: i for i, a in enumerate(self.apps)}
        if len(self._device_index) != len(self.devices) or len(self._app_index) != len(self.apps):
            raise ValueError('Node ids must be unique within each side')

        self._device_adj = _csr(self.edge_devices, self.edge_apps, self.n_devices, self.n_apps)
        by_app = np.lexsort((self.edge_devices, self.edge_apps))
        self._app_adj = _csr(self.edge_apps[by_app], self.edge_devices[by_app], self.n_apps, self.n_devices)

    @classmethod
    def from_edges(cls, edges: Iterable[Edge]) -> Self:
        """
        ### Factory Method ###
        Build a graph whose nodes are exactly the endpoints of `edges`.
        """
        edge_list = list(edges)
        devices = sorted({d for d, _ in edge_list})
        apps = sorted({a for _, a in edge_list})
        dev_pos = {d: i for i, d in enumerate(devices)}
        app_pos = {a: i for i, a in enumerate(apps)}
        dev_idx = np.fromiter((dev_pos[d] for d, _ in edge_list), dtype=np.int64, count=len(edge_list))
        app_idx = np.fromiter((app_pos[a] for _, a in edge_list), dtype=np.int64, count=len(edge_list))
        return cls(devices, apps, dev_idx, app_idx)

    @classmethod
    def from_indices(
        cls, devices: Sequence[DeviceId], apps: Sequence[AppId], dev_idx: np.ndarray, app_idx: np.ndarray
    ) -> Self:
        """
        ### Factory Method ###
        Build from index arrays. Ids are re-sorted so indices stay lexicographic; isolated nodes are kept.
        """
        dev_order = np.argsort(np.asarray(devices, dtype=object), kind='stable')
        app_order = np.argsort(np.asarray(apps, dtype=object), kind='stable')
        dev_rank = np.empty(len(devices), dtype=np.int64)
        dev_rank[dev_order] = np.arange(len(devices))
        app_rank = np.empty(len(apps), dtype=np.int64)
        app_rank[app_order] = np.arange(len(apps))
        return cls(
            [devices[i] for i in dev_order],
            [apps[i] for i in app_order],
            dev_rank[np.asarray(dev_idx, dtype=np.int64)],
            app_rank[np.asarray(app_idx, dtype=np.int64)],
        )

    @property
    def n_devices(self) -> int:
        return len(self.devices)

    @property
    def n_apps(self) -> int:
        return len(self.apps)

    @property
    def n_nodes(self) -> int:
        return self.n_devices + self.n_apps

    @property
    def n_edges(self) -> int:
        return int(self.edge_devices.size)

    def count(self, side: Side) -> int:
        """Number of nodes on one side."""
        return self.n_devices if side is Side.Device else self.n_apps

    def has_device(self, device: DeviceId) -> bool:
        return device in self._device_index

    def device_ref(self, device: DeviceId) -> NodeRef:
        """Reference to a device by id. Raises InvalidNodeError if absent."""
        try:
            return NodeRef(Side.Device, self._device_index[device])
        except KeyError:
            raise InvalidNodeError(f'Device {device!r} is not in the graph') from None

    def app_ref(self, app: AppId) -> NodeRef:
        """Reference to an app by id. Raises InvalidNodeError if absent."""
        try:
            return NodeRef(Side.App, self._app_index[app])
        except KeyError:
            raise InvalidNodeError(f'App {app!r} is not in the graph') from None

    def validate(self, ref: NodeRef):
        """Raise InvalidNodeError if `ref` does not exist in this graph."""
        if ref.index >= self.count(ref.side):
            raise InvalidNodeError(f'{ref} out of range ({self.count(ref.side)} {ref.side} nodes)')

    def node_id(self, ref: NodeRef) -> str:
        """The id (device address or app id) behind a reference."""
        self.validate(ref)
        return self.devices[ref.index] if ref.side is Side.Device else self.apps[ref.index]

    def global_index(self, ref: NodeRef) -> int:
        """Position of a node in whole-graph numbering (devices first)."""
        self.validate(ref)
        return ref.index if ref.side is Side.Device else self.n_devices + ref.index

    def ref_at(self, global_index: int) -> NodeRef:
        """Inverse of `global_index`."""
        if not 0 <= global_index < self.n_nodes:
            raise InvalidNodeError(f'Global node index {global_index} out of range')
        if global_index < self.n_devices:
            return NodeRef(Side.Device, global_index)
        return NodeRef(Side.App, global_index - self.n_devices)

    def neighbor_indices(self, ref: NodeRef) -> np.ndarray:
        """Sorted indices (on the other side) of the neighbors of `ref`."""
        self.validate(ref)
        adj = self._device_adj if ref.side is Side.Device else self._app_adj
        return adj.indices[adj.indptr[ref.index] : adj.indptr[ref.index + 1]]

    def neighbors(self, ref: NodeRef) -> list[NodeRef]:
        """Sorted, duplicate-free neighbors of `ref`, all on the other side."""
        other = ref.side.other()
        return [NodeRef(other, int(i)) for i in self.neighbor_indices(ref)]

    def device_degrees(self) -> np.ndarray:
        """Number of apps per device."""
        return np.diff(self._device_adj.indptr)

    def app_degrees(self) -> np.ndarray:
        """Number of devices per app."""
        return np.diff(self._app_adj.indptr)

    def degree(self, ref: NodeRef) -> int:
        return int(self.neighbor_indices(ref).size)

    def edges(self) -> Iterator[Edge]:
        """Edges as (device id, app id), sorted by device then app."""
        for d, a in zip(self.edge_devices.tolist(), self.edge_apps.tolist(), strict=True):
            yield self.devices[d], self.apps[a]

    def edge_set(self) -> set[Edge]:
        return set(self.edges())

    def incidence(self) -> sparse.csr_array:
        """Device x app incidence matrix (biadjacency)."""
        return self._device_adj

    @cached_property
    def adjacency(self) -> sparse.csr_array:
        """Symmetric whole-graph adjacency matrix over global node numbering."""
        b = self._device_adj
        return sparse.block_array([[None, b], [b.T, None]], format='csr')

    def keep_apps(self, keep: np.ndarray) -> BipartiteGraph:
        """New graph with only the apps where `keep` is True. Every device is retained."""
        keep = np.asarray(keep, dtype=bool)
        new_index = np.full(self.n_apps, -1, dtype=np.int64)
        new_index[keep] = np.arange(int(keep.sum()))
        on_kept = keep[self.edge_apps]
        return BipartiteGraph(
            self.devices,
            [a for a, k in zip(self.apps, keep.tolist(), strict=True) if k],
            self.edge_devices[on_kept],
            new_index[self.edge_apps[on_kept]],
        )

    @override
    def __repr__(self) -> str:
        return f'BipartiteGraph(devices={self.n_devices}, apps={self.n_apps}, edges={self.n_edges})'


def build_graph(edges: Iterable[Edge]) -> BipartiteGraph:
    """Build the device-app graph from deduplicated co-occurrence pairs."""
    return BipartiteGraph.from_edges(edges)


def neighbors(g: BipartiteGraph, n: NodeRef) -> list[NodeRef]:
    """Sorted neighbors of a node. Raises InvalidNodeError for an out-of-range reference."""
    return g.neighbors(n)


def remove_popular_apps(g: BipartiteGraph, n_p: int) -> BipartiteGraph:
    """
    Drop every app used by more than `n_p` devices, along with its edges.
    Devices stay in the graph even when this leaves them isolated, so they keep their index
    and show up as unlabeled devices rather than disappearing.
    """
    if n_p < 1:
        raise ValueError(f'Popularity threshold must be >= 1, got {n_p}')
    keep = g.app_degrees() <= n_p
    dropped = g.n_apps - int(keep.sum())
    logger.info('popularity filter N_p=%d removed %d of %d apps', n_p, dropped, g.n_apps)
    return g if dropped == 0 else g.keep_apps(keep)


def degree_cdf(g: BipartiteGraph, side: Side = Side.App) -> list[tuple[float, float]]:
    """CDF of node degrees on one side, e.g. devices per app."""
    degrees = g.app_degrees() if side is Side.App else g.device_degrees()
    return empirical_cdf(degrees.tolist())


def read_edge_list(edge_file: StrPath) -> set[Edge]:
    """Read a `device_id<TAB>app_id` file. Raises ParseError on a malformed row."""
    path = Path(edge_file)
    if not path.exists():
        raise OSError(f'Edge-list file "{path}" could not be found')

    edges: set[Edge] = set()
    with path.open(encoding='utf-8') as f:
        for i, line in enumerate(f, start=1):
            if not line.strip() or line.startswith('#'):
                continue
            columns = line.rstrip('\r\n').split('\t')
            if len(columns) != 2 or not all(columns):
                raise ParseError('edge rows must be "device_id<TAB>app_id"', line_no=i)
            edges.add((columns[0], columns[1]))
    return edges


def write_edge_list(edge_file: StrPath, edges: Iterable[Edge]) -> Path:
    """Write edges in canonical order (sorted by device id then app id)."""
    path = Path(edge_file)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8') as f:
        f.writelines(f'{d}\t{a}\n' for d, a in sorted(edges))
    return path
