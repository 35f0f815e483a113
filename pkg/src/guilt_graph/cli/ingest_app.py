# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from pathlib import Path

from argparse import ArgumentParser

from guilt_graph.cli._helpers import add_action, common_opts, load_config, load_raw_graph, valid_path
from guilt_graph.graph import Side, degree_cdf, write_edge_list
from guilt_graph.ingest import EntityMode
from guilt_graph.util import write_csv

# subcommand 'ingest'
ingest_cmd = ArgumentParser(
    description='Parse a traffic log into the device-app edge list',
    parents=[common_opts],
    add_help=False,
)
ingest_cmd.add_argument('--traffic', required=True, type=valid_path, help='traffic log to parse')
ingest_cmd.add_argument(
    '--mode', choices=[m.value for m in EntityMode], help='app node type: app string or destination IP'
)


@add_action(ingest_cmd)
def ingest(config: Path | None, **flags: object):
    """Build the raw graph and write edges.tsv and degree_cdf.csv."""
    cfg = load_config(config, **flags)
    out = cfg.paths.out
    g = load_raw_graph(cfg)

    write_edge_list(out / 'edges.tsv', g.edges())
    write_csv(out / 'degree_cdf.csv', ('devices_per_app', 'cum_fraction'), degree_cdf(g, Side.App))
    cfg.write_effective(out)

    single = int((g.app_degrees() == 1).sum())
    print(f'Traffic: {cfg.paths.traffic}')
    print(f'{g.n_devices} devices, {g.n_apps} apps ({cfg.labeling.mode}), {g.n_edges} edges')
    if g.n_apps:
        print(f'Apps used by a single device: {single} ({single / g.n_apps:.1%})')
    print(f'Wrote {out.as_posix()}/edges.tsv', flush=True)
