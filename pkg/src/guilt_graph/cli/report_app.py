# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from collections.abc import Sequence

from argparse import ArgumentParser

from guilt_graph.cli._helpers import add_action, common_opts, load_config
from guilt_graph.util import read_csv

logger = logging.getLogger(__name__)

SECTIONS: tuple[tuple[str, str], ...] = (
    ('label_grid.csv', 'Ground truth by threshold'),
    ('results.csv', 'Cross-validation AUC'),
    ('sweep_epsilon.csv', 'AUC by edge potential'),
    ('sweep_vt.csv', 'AUC by engine threshold'),
    ('sweep_np.csv', 'AUC by popularity threshold'),
    ('sweep_mode.csv', 'AUC by app node type'),
    ('sweep_algorithm.csv', 'Belief propagation vs label propagation'),
    ('distance_summary.csv', 'Shortest path lengths'),
    ('group_centrality.csv', 'Centrality by device group'),
    ('leak_types.csv', 'Devices leaking each information type'),
)
"""CSV file -> section title, in report order"""

SERIES = ('degree_cdf.csv', 'roc.csv', 'distance_cdf.csv', 'heatmap.csv', 'infra_cdf.csv', 'beliefs.csv')
"""Plot data files listed at the end of the report"""

# subcommand 'report'
report_cmd = ArgumentParser(
    description='Collect the CSV outputs found in the output directory into summary.md',
    parents=[common_opts],
    add_help=False,
)


def markdown_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> list[str]:
    lines = ['| ' + ' | '.join(header) + ' |', '|' + '|'.join('---' for _ in header) + '|']
    lines.extend('| ' + ' | '.join(row) + ' |' for row in rows)
    return lines


def _cell(value: str) -> str:
    # shorten long floats, leave everything else alone
    try:
        number = float(value)
    except ValueError:
        return value
    return value if number.is_integer() or len(value) <= 8 else f'{number:.4f}'


def render_summary(out_dir: Path) -> str:
    """Markdown summary of every known output file present in `out_dir`."""
    lines = ['# guilt-graph summary', '']
    effective = out_dir / 'effective_config.json'
    if effective.is_file():
        data = json.loads(effective.read_text(encoding='utf-8'))
        lines += [f'Config hash `{data.get("config_hash", "?")}`.', '']

    for name, title in SECTIONS:
        path = out_dir / name
        if not path.is_file():
            continue
        rows = [row for _, row in read_csv(path, ())]
        if not rows:
            continue
        header = list(rows[0])
        lines += [f'## {title}', '', *markdown_table(header, [[_cell(r[h]) for h in header] for r in rows]), '']

    series = [name for name in SERIES if (out_dir / name).is_file()]
    if series:
        lines += ['## Data series', '']
        lines += [f'- `{name}`' for name in series]
        lines.append('')
    return '\n'.join(lines)


@add_action(report_cmd)
def report(config: Path | None, **flags: object):
    """Render summary.md from the CSVs in the output directory."""
    cfg = load_config(config, **flags)
    out = cfg.paths.out
    if not out.is_dir():
        raise OSError(f'Output directory "{out}" could not be found')

    summary = render_summary(out)
    path = out / 'summary.md'
    path.write_text(summary, encoding='utf-8')
    logger.info('wrote %s', path)
    print(summary, flush=True)
