# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from pathlib import Path

from argparse import ArgumentParser

from guilt_graph.cli._helpers import add_action, common_opts, input_opts, load_config, load_raw_graph, load_verdicts
from guilt_graph.labeling import build_ground_truth, label_grid, write_app_labels
from guilt_graph.util import format_table, write_csv

# subcommand 'label'
label_cmd = ArgumentParser(
    description='Label apps and devices from scanner verdicts',
    parents=[common_opts, input_opts],
    add_help=False,
)


@add_action(label_cmd)
def label(config: Path | None, **flags: object):
    """Write ground_truth.csv, app_labels.csv and the threshold grid label_grid.csv."""
    cfg = load_config(config, **flags)
    out = cfg.paths.out
    raw = load_raw_graph(cfg)
    verdicts = load_verdicts(cfg)

    _, gt = build_ground_truth(raw, verdicts, cfg.labeling)
    gt.write(out / 'ground_truth.csv')
    write_app_labels(out / 'app_labels.csv', gt.app_labels)

    grid = label_grid(raw, verdicts, cfg.labeling, nps=(None, *cfg.eval.np_values))
    header = ('vt', 'n_p', 'bad_apps', 'bad_devices', 'good_devices')
    rows = [(r.vt, 'all' if r.n_p is None else r.n_p, r.bad_apps, r.bad_devices, r.good_devices) for r in grid]
    write_csv(out / 'label_grid.csv', header, rows)
    cfg.write_effective(out)

    lc = cfg.labeling
    print(f'Ground truth (vt={lc.vt}, N_p={lc.n_p}, N(A_B)={lc.n_ab}, mode={lc.mode})')
    print(f'  bad apps:     {len(gt.bad_apps())}')
    print(f'  bad devices:  {len(gt.bad_devices)}')
    print(f'  good devices: {len(gt.good_devices)}')
    print()
    print(format_table(header, rows), flush=True)
