# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from pathlib import Path

    from guilt_graph.evaluation import EvalOutcome
    from guilt_graph.labeling import GroundTruth

from argparse import ArgumentParser

from guilt_graph.cli._helpers import (
    add_action,
    bp_opts,
    common_opts,
    cv_opts,
    input_opts,
    load_config,
    load_labeled_graph,
)
from guilt_graph.evaluation import SweepPoint, evaluate, write_results, write_roc
from guilt_graph.util import write_csv

# subcommand 'eval'
eval_cmd = ArgumentParser(
    description='k-fold cross-validation with ROC curves and AUC',
    parents=[common_opts, input_opts, bp_opts, cv_opts],
    add_help=False,
)


def write_scores(path: Path, outcome: EvalOutcome, gt: GroundTruth) -> Path:
    """CSV `device_id,label,fold,p_bad` of every held-out device."""
    rows = (
        (d, gt.label_of(d), fold.index, scores[d])
        for fold, scores in zip(outcome.scores.folds, outcome.scores.fold_scores, strict=True)
        for d in sorted(scores)
    )
    return write_csv(path, ('device_id', 'label', 'fold', 'p_bad'), rows)


@add_action(eval_cmd)
def run_eval(config: Path | None, **flags: object):
    """Write results.csv, roc.csv, one roc_fold<i>.csv per fold and scores.csv."""
    cfg = load_config(config, **flags)
    out = cfg.paths.out
    g, gt = load_labeled_graph(cfg)

    outcome = evaluate(g, gt, cfg.bp, cfg.eval)
    lc = cfg.labeling
    point = SweepPoint(cfg.bp.epsilon, lc.vt, lc.n_p, lc.mode, cfg.eval.algorithm, outcome)
    write_results(out / 'results.csv', [point], cfg.digest())
    write_roc(out / 'roc.csv', outcome.pooled)
    for i, curve in enumerate(outcome.per_fold):
        write_roc(out / f'roc_fold{i}.csv', curve)
    write_scores(out / 'scores.csv', outcome, gt)
    cfg.write_effective(out)

    print(f'{cfg.eval.algorithm.upper()} {cfg.eval.k}-fold cross-validation, epsilon={cfg.bp.epsilon}')
    for i, curve in enumerate(outcome.per_fold):
        print(f'  fold {i}: AUC {curve.auc:.4f}')
    print(f'  pooled: AUC {outcome.auc:.4f}', flush=True)
