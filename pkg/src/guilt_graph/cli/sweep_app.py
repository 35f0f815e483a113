# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from pathlib import Path

    from guilt_graph.evaluation import Sweep

from argparse import ArgumentParser

from guilt_graph.cli._helpers import (
    add_action,
    bp_opts,
    common_opts,
    cv_opts,
    input_opts,
    load_config,
    load_labeled_graph,
    load_raw_graph,
    load_verdicts,
)
from guilt_graph.evaluation import compare_algorithms, epsilon_sweep, mode_sweep, np_sweep, vt_sweep, write_results
from guilt_graph.ingest import EntityMode
from guilt_graph.util import format_table

PARAMETERS = ('epsilon', 'vt', 'np', 'mode', 'algorithm')

# subcommand 'sweep'
sweep_cmd = ArgumentParser(
    description='Cross-validate over a range of one parameter',
    parents=[common_opts, input_opts, bp_opts, cv_opts],
    add_help=False,
)
sweep_cmd.add_argument(
    '--param', choices=PARAMETERS, default='epsilon', help='parameter to sweep (default epsilon)'
)


@add_action(sweep_cmd)
def sweep(config: Path | None, param: str, **flags: object):
    """Write sweep_<param>.csv in the results format and print AUC per value."""
    cfg = load_config(config, **flags)
    out = cfg.paths.out

    result: Sweep
    match param:
        case 'epsilon':
            g, gt = load_labeled_graph(cfg)
            result = epsilon_sweep(g, gt, cfg.eval, cfg.bp, cfg.labeling)
        case 'algorithm':
            g, gt = load_labeled_graph(cfg)
            result = compare_algorithms(g, gt, cfg.bp, cfg.eval, cfg.labeling)
        case 'vt':
            result = vt_sweep(load_raw_graph(cfg), load_verdicts(cfg), cfg.labeling, cfg.bp, cfg.eval)
        case 'np':
            result = np_sweep(load_raw_graph(cfg), load_verdicts(cfg), cfg.labeling, cfg.bp, cfg.eval)
        case _:
            raws = {mode: load_raw_graph(cfg, mode) for mode in EntityMode}
            result = mode_sweep(raws, load_verdicts(cfg), cfg.labeling, cfg.bp, cfg.eval)

    write_results(out / f'sweep_{param}.csv', result.points.values(), cfg.digest())
    cfg.write_effective(out)

    print(f'AUC by {result.parameter} ({cfg.eval.algorithm}, k={cfg.eval.k}, seed={cfg.eval.seed})')
    print(format_table((result.parameter, 'auc'), [(value, auc) for value, auc in result.items()]))
    print(f'spread: {result.spread():.4f}', flush=True)
