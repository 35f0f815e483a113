# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from pathlib import Path

from argparse import ArgumentParser

from guilt_graph.cli._helpers import add_action, bp_opts, common_opts, input_opts, load_config, load_labeled_graph
from guilt_graph.inference import detect_unknown, write_beliefs
from guilt_graph.util import write_csv

# subcommand 'infer'
infer_cmd = ArgumentParser(
    description='Run belief propagation from every labeled device and classify the unlabeled ones',
    parents=[common_opts, input_opts, bp_opts],
    add_help=False,
)
infer_cmd.add_argument(
    '--threshold', type=float, default=0.5, help='P(bad) above which a device is called bad (default 0.5)'
)


@add_action(infer_cmd)
def infer(config: Path | None, threshold: float, **flags: object):
    """Write beliefs.csv for every node and unknown_predictions.csv for the unlabeled devices."""
    cfg = load_config(config, **flags)
    out = cfg.paths.out
    g, gt = load_labeled_graph(cfg)

    report = detect_unknown(g, gt, cfg.bp, threshold)
    if report.result is not None:
        write_beliefs(out / 'beliefs.csv', report.result)
    write_csv(out / 'unknown_predictions.csv', ('device_id', 'label'), sorted(report.predictions.items()))
    cfg.write_effective(out)

    print(f'Belief propagation (delta={cfg.bp.delta}, epsilon={cfg.bp.epsilon})')
    if report.result is not None:
        state = 'converged' if report.result.converged else 'did NOT converge'
        print(f'  {state} after {report.result.iterations_run} iterations')
    print(f'  labeled devices:   {len(gt.labeled)}')
    print(f'  unlabeled devices: {report.n_unknown}')
    print(f'  predicted bad:     {report.n_bad}')
    print(f'  predicted good:    {report.n_good}', flush=True)
