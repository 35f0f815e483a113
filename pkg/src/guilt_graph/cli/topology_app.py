# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from collections.abc import Iterable
    from pathlib import Path

    from guilt_graph.graph import BipartiteGraph, NodeRef
    from guilt_graph.types import DeviceId

from argparse import ArgumentParser

import numpy as np

from guilt_graph.cli._helpers import add_action, common_opts, input_opts, load_config, load_labeled_graph
from guilt_graph.topology import (
    centrality_report,
    cluster_distance_stats,
    group_centrality,
    shortest_paths,
    write_centrality,
    write_distance_cdf,
    write_heatmap,
)
from guilt_graph.util import format_table, write_csv

# subcommand 'topology'
topology_cmd = ArgumentParser(
    description='Distances between and within the device classes, closeness and eigenvector centrality',
    parents=[common_opts, input_opts],
    add_help=False,
)
topology_cmd.add_argument('--sample', type=int, help='use at most this many devices per group (default: all)')
topology_cmd.add_argument(
    '--heatmap', type=int, default=50, help='devices per class in the distance heatmap (default 50)'
)


def _refs(g: BipartiteGraph, devices: Iterable[DeviceId], limit: int | None, rng: np.random.Generator) -> list[NodeRef]:
    """Sorted device references, down-sampled to `limit` when given."""
    ids = sorted(devices)
    if limit is not None and len(ids) > limit:
        ids = sorted(ids[i] for i in rng.choice(len(ids), size=limit, replace=False).tolist())
    return [g.device_ref(d) for d in ids]


@add_action(topology_cmd)
def topology(config: Path | None, sample: int | None, heatmap: int, **flags: object):
    """Write distance_cdf.csv, distance_summary.csv, centrality.csv, group_centrality.csv and heatmap.csv."""
    cfg = load_config(config, **flags)
    out = cfg.paths.out
    g, gt = load_labeled_graph(cfg)
    rng = np.random.default_rng(cfg.eval.seed)

    unknown = [d for d in g.devices if d not in gt.labeled]
    groups = {
        'bad': _refs(g, gt.bad_devices, sample, rng),
        'good': _refs(g, gt.good_devices, sample, rng),
        'unknown': _refs(g, unknown, sample, rng),
    }

    dm = shortest_paths(g, groups['bad'] + groups['good'], cfg.threads)
    summary = cluster_distance_stats(dm, groups['bad'], groups['good'])
    report = centrality_report(g, [r for refs in groups.values() for r in refs], cfg.threads)
    by_group = group_centrality(report, groups)

    write_distance_cdf(out / 'distance_cdf.csv', summary)
    dist_rows = [(pc, s.pairs, s.unreachable, s.mean) for pc, s in summary.by_class.items()]
    write_csv(out / 'distance_summary.csv', ('pair_class', 'pairs', 'unreachable', 'mean'), dist_rows)
    write_centrality(out / 'centrality.csv', g, report)
    cent_rows = [(r.group, r.size, r.mean_cc, r.mean_ec) for r in by_group]
    write_csv(out / 'group_centrality.csv', ('group', 'size', 'mean_cc', 'mean_ec'), cent_rows)
    write_heatmap(out / 'heatmap.csv', dm, groups['bad'][:heatmap] + groups['good'][:heatmap])
    cfg.write_effective(out)

    print('Shortest path lengths')
    print(format_table(('pair_class', 'pairs', 'unreachable', 'mean'), dist_rows))
    gap = summary.gap()
    print(f'inter minus intra (BG - BB): {"n/a" if gap is None else f"{gap:.3f}"}')
    print()
    print('Centrality')
    print(format_table(('group', 'size', 'mean_cc', 'mean_ec'), cent_rows))
    if not report.converged:
        print(f'warning: eigenvector centrality did not converge in {report.iterations} iterations')
    print(flush=True)
