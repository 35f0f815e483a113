# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

"""
Structural diagnostics of the device-app graph.

Shortest-path distances within and across the ground-truth classes, closeness centrality
and eigenvector centrality. These explain how much the edge potential matters on a given graph.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import StrEnum
from itertools import batched
from typing import TYPE_CHECKING, override

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from guilt_graph.types import TopologyError
from guilt_graph.util import empirical_cdf, write_csv

if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator, Mapping, Sequence
    from pathlib import Path

    from guilt_graph.graph import BipartiteGraph, NodeRef
    from guilt_graph.types import StrPath

__all__ = [
    'CentralityReport',
    'ClassDistances',
    'DistanceMatrix',
    'DistanceSummary',
    'GroupCentrality',
    'PairClass',
    'centrality_report',
    'closeness_centrality',
    'cluster_distance_stats',
    'distance_heatmap_rows',
    'eigenvector_centrality',
    'group_centrality',
    'shortest_paths',
    'write_centrality',
    'write_distance_cdf',
    'write_heatmap',
]

logger = logging.getLogger(__name__)

UNREACHABLE = -1
"""Distance marker for pairs in different components"""

SOURCE_CHUNK = 256
"""BFS sources handled per csgraph call"""


class PairClass(StrEnum):
    """Which ground-truth classes the two ends of a node pair belong to."""

    GG = 'GG'
    BB = 'BB'
    BG = 'BG'

    @override
    def __repr__(self) -> str:
        return f'<{self.name}>'


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Hop distances from a set of source nodes to every node of the graph."""

    graph: BipartiteGraph
    sources: tuple[NodeRef, ...]
    distances: np.ndarray
    """(len(sources), n_nodes) integer hops, UNREACHABLE where no path exists"""
    _row: dict[NodeRef, int] = field(init=False, repr=False)

    def __post_init__(self):
        """Check the matrix shape against the graph."""
        if self.distances.shape != (len(self.sources), self.graph.n_nodes):
            raise ValueError('Distance matrix shape does not match sources x nodes')
        object.__setattr__(self, '_row', {s: i for i, s in enumerate(self.sources)})

    def row(self, source: NodeRef) -> np.ndarray:
        try:
            return self.distances[self._row[source]]
        except KeyError:
            raise TopologyError(f'{source} is not a source of this distance matrix') from None

    def between(self, a: NodeRef, b: NodeRef) -> int:
        """Hops from `a` (a source) to `b`, UNREACHABLE if disconnected."""
        return int(self.row(a)[self.graph.global_index(b)])

    def block(self, rows: Sequence[NodeRef], cols: Sequence[NodeRef]) -> np.ndarray:
        """Distances between two node lists, `rows` must all be sources."""
        try:
            row_idx = [self._row[r] for r in rows]
        except KeyError as e:
            raise TopologyError(f'{e.args[0]} is not a source of this distance matrix') from None
        col_idx = [self.graph.global_index(c) for c in cols]
        return self.distances[np.ix_(row_idx, col_idx)]


def _bfs(adjacency: sparse.csr_array, sources: Sequence[int]) -> np.ndarray:
    dist = csgraph.shortest_path(adjacency, method='D', directed=False, unweighted=True, indices=list(sources))
    dist = np.atleast_2d(dist)
    out = np.full(dist.shape, UNREACHABLE, dtype=np.int64)
    reachable = np.isfinite(dist)
    out[reachable] = dist[reachable].astype(np.int64)
    return out


def _bfs_chunks(g: BipartiteGraph, sources: Sequence[int], threads: int) -> Iterator[np.ndarray]:
    """BFS distance rows for `sources`, in source order, computed chunk by chunk."""
    chunks = list(batched(sources, SOURCE_CHUNK))
    if threads <= 1 or len(chunks) <= 1:
        for chunk in chunks:
            yield _bfs(g.adjacency, chunk)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(lambda c: _bfs(g.adjacency, c), chunks)


def shortest_paths(g: BipartiteGraph, sources: Iterable[NodeRef], threads: int = 1) -> DistanceMatrix:
    """Unweighted BFS distances from every node in `sources` (sorted) to every node of `g`."""
    ordered = tuple(sorted(set(sources)))
    indices = [g.global_index(s) for s in ordered]
    rows = list(_bfs_chunks(g, indices, threads))
    distances = np.vstack(rows) if rows else np.empty((0, g.n_nodes), dtype=np.int64)
    return DistanceMatrix(g, ordered, distances)


@dataclass(frozen=True)
class ClassDistances:
    """Distance statistics of one pair class."""

    pair_class: PairClass
    pairs: int
    """Reachable pairs counted"""
    unreachable: int
    mean: float | None
    """None when no pair is reachable"""
    cdf: list[tuple[float, float]] = field(default_factory=list)


@dataclass(frozen=True)
class DistanceSummary:
    """Intra- and inter-class distance statistics."""

    by_class: Mapping[PairClass, ClassDistances]

    def __getitem__(self, pair_class: PairClass) -> ClassDistances:
        return self.by_class[pair_class]

    def gap(self) -> float | None:
        """Mean bad-good distance minus mean bad-bad distance."""
        bg, bb = self.by_class[PairClass.BG].mean, self.by_class[PairClass.BB].mean
        return None if bg is None or bb is None else bg - bb


def _class_distances(pair_class: PairClass, values: np.ndarray) -> ClassDistances:
    reachable = values[values != UNREACHABLE]
    mean = float(reachable.mean()) if reachable.size else None
    unreachable = int(values.size - reachable.size)
    return ClassDistances(pair_class, int(reachable.size), unreachable, mean, empirical_cdf(reachable))


def cluster_distance_stats(dm: DistanceMatrix, cb: Iterable[NodeRef], cg: Iterable[NodeRef]) -> DistanceSummary:
    """
    Mean and CDF of shortest-path lengths for unordered bad-bad and good-good pairs
    and for all bad-good pairs. Unreachable pairs are counted but excluded from the statistics.

    - Raises TopologyError if either set is empty or the sets overlap.
    - Every node of both sets must be a source of `dm`.
    """
    bad, good = sorted(set(cb)), sorted(set(cg))
    if not bad or not good:
        raise TopologyError('Both the bad and the good node sets must be non-empty')
    if set(bad) & set(good):
        raise TopologyError('Bad and good node sets overlap')

    bb = dm.block(bad, bad)
    gg = dm.block(good, good)
    bg = dm.block(bad, good)
    upper_b = np.triu_indices(len(bad), k=1)
    upper_g = np.triu_indices(len(good), k=1)
    summary = DistanceSummary({
        PairClass.GG: _class_distances(PairClass.GG, gg[upper_g]),
        PairClass.BB: _class_distances(PairClass.BB, bb[upper_b]),
        PairClass.BG: _class_distances(PairClass.BG, bg.ravel()),
    })
    for pc, stats in summary.by_class.items():
        logger.info('%s distances: %d pairs, mean %s, %d unreachable', pc, stats.pairs, stats.mean, stats.unreachable)
    return summary


def closeness_centrality(g: BipartiteGraph, nodes: Iterable[NodeRef], threads: int = 1) -> dict[NodeRef, float]:
    """
    CC_u = (n - 1) / sum of hop distances from u, where n and the sum range over
    u's connected component. A node alone in its component gets 0.
    """
    ordered = sorted(set(nodes))
    if g.n_nodes == 0:
        raise TopologyError('Closeness centrality of an empty graph')
    _, component = csgraph.connected_components(g.adjacency, directed=False)
    component_size = np.bincount(component)

    indices = [g.global_index(n) for n in ordered]
    totals: list[np.ndarray] = []
    for rows in _bfs_chunks(g, indices, threads):
        totals.append(np.where(rows == UNREACHABLE, 0, rows).sum(axis=1))
    sums = np.concatenate(totals) if totals else np.empty(0, dtype=np.int64)

    closeness: dict[NodeRef, float] = {}
    for ref, i, total in zip(ordered, indices, sums.tolist(), strict=True):
        n = int(component_size[component[i]])
        closeness[ref] = (n - 1) / total if total > 0 else 0.0
    return closeness


@dataclass(frozen=True)
class CentralityReport:
    """Per-node closeness and eigenvector centrality plus the dominant eigenvalue."""

    closeness: Mapping[NodeRef, float]
    eigenvector: Mapping[NodeRef, float]
    eigenvalue: float
    iterations: int = 0
    converged: bool = True


def eigenvector_centrality(g: BipartiteGraph, tol: float = 1e-10, max_iter: int = 10_000) -> CentralityReport:
    """
    Dominant eigenpair of the adjacency matrix by power iteration, started from the uniform vector.

    Iterates on A + I, which has the same eigenvectors as A; on a bipartite graph plain
    iteration on A flips between two vectors. The eigenvector is scaled to unit Euclidean norm.
    Stops once ||A x - kappa x||_inf < tol. Non-convergence is logged and flagged in the report.
    """
    if g.n_nodes == 0:
        raise TopologyError('Eigenvector centrality of an empty graph')
    adjacency = g.adjacency
    x = np.full(g.n_nodes, 1.0 / np.sqrt(g.n_nodes))
    kappa = 0.0
    converged = False
    iterations = 0
    while iterations < max_iter:
        iterations += 1
        ax = adjacency @ x
        kappa = float(x @ ax)
        if float(np.abs(ax - kappa * x).max()) < tol:
            converged = True
            break
        x = ax + x
        x /= np.linalg.norm(x)

    if not converged:
        logger.warning('eigenvector centrality did not converge within %d iterations', max_iter)
    logger.info('eigenvector centrality: kappa=%.6f after %d iterations', kappa, iterations)
    eigenvector = {g.ref_at(i): float(v) for i, v in enumerate(x.tolist())}
    return CentralityReport({}, eigenvector, kappa, iterations, converged)


def centrality_report(
    g: BipartiteGraph, nodes: Iterable[NodeRef], threads: int = 1, tol: float = 1e-10, max_iter: int = 10_000
) -> CentralityReport:
    """Closeness for `nodes` together with eigenvector centrality of every node."""
    ec = eigenvector_centrality(g, tol=tol, max_iter=max_iter)
    cc = closeness_centrality(g, nodes, threads=threads)
    return CentralityReport(cc, ec.eigenvector, ec.eigenvalue, ec.iterations, ec.converged)


@dataclass(frozen=True, slots=True)
class GroupCentrality:
    group: str
    size: int
    mean_cc: float | None
    mean_ec: float | None


def group_centrality(report: CentralityReport, groups: Mapping[str, Iterable[NodeRef]]) -> list[GroupCentrality]:
    """Mean closeness and eigenvector centrality of each named node group."""
    rows: list[GroupCentrality] = []
    for name, members in groups.items():
        refs = list(members)
        cc = [report.closeness[r] for r in refs if r in report.closeness]
        ec = [report.eigenvector[r] for r in refs if r in report.eigenvector]
        rows.append(
            GroupCentrality(name, len(refs), float(np.mean(cc)) if cc else None, float(np.mean(ec)) if ec else None)
        )
    return rows


def distance_heatmap_rows(dm: DistanceMatrix, nodes: Sequence[NodeRef]) -> Iterator[tuple[str, str, int]]:
    """(src id, dst id, hops) for every ordered pair of `nodes`, all of which must be sources."""
    ids = [dm.graph.node_id(n) for n in nodes]
    block = dm.block(nodes, nodes)
    for i, src in enumerate(ids):
        for j, dst in enumerate(ids):
            yield src, dst, int(block[i, j])


def write_centrality(centrality_file: StrPath, g: BipartiteGraph, report: CentralityReport) -> Path:
    """CSV `node_id,cc,ec` for every node with a closeness value, in whole-graph order."""
    refs = sorted(report.closeness, key=g.global_index)
    rows = ((g.node_id(r), report.closeness[r], report.eigenvector.get(r, '')) for r in refs)
    return write_csv(centrality_file, ('node_id', 'cc', 'ec'), rows)


def write_distance_cdf(cdf_file: StrPath, summary: DistanceSummary) -> Path:
    """CSV `pair_class,length,cum_fraction`."""
    rows = (
        (pc, length, fraction)
        for pc, stats in summary.by_class.items()
        for length, fraction in stats.cdf
    )
    return write_csv(cdf_file, ('pair_class', 'length', 'cum_fraction'), rows)


def write_heatmap(heatmap_file: StrPath, dm: DistanceMatrix, nodes: Sequence[NodeRef]) -> Path:
    """CSV `src,dst,length`, UNREACHABLE as -1."""
    return write_csv(heatmap_file, ('src', 'dst', 'length'), distance_heatmap_rows(dm, nodes))
