# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

"""
Balanced k-fold cross-validation, ROC / AUC and parameter sweeps.

Every sampled ground-truth device is scored exactly once, by the run in which it is held out.
Scores of all folds are pooled into one ROC curve; per-fold curves are kept as well.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import StrEnum
from typing import TYPE_CHECKING, override

import numpy as np
from sklearn.metrics import auc

from guilt_graph.inference import BpConfig, init_beliefs, run_bp, run_lp
from guilt_graph.ingest import EntityMode
from guilt_graph.labeling import LabelingConfig, build_ground_truth
from guilt_graph.types import EvaluationError
from guilt_graph.util import write_csv

if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator, Sequence
    from pathlib import Path

    from guilt_graph.graph import BipartiteGraph
    from guilt_graph.labeling import GroundTruth, VerdictProvider
    from guilt_graph.types import DeviceId, StrPath

__all__ = [
    'Algorithm',
    'CvResult',
    'EvalConfig',
    'EvalOutcome',
    'Fold',
    'RocCurve',
    'Sweep',
    'SweepPoint',
    'balanced_folds',
    'compare_algorithms',
    'epsilon_sweep',
    'evaluate',
    'mode_sweep',
    'np_sweep',
    'roc',
    'run_cv',
    'run_fold',
    'vt_sweep',
    'write_results',
    'write_roc',
]

logger = logging.getLogger(__name__)


class Algorithm(StrEnum):
    """Inference algorithm scored by the evaluation."""

    BP = 'bp'
    LP = 'lp'

    @override
    def __repr__(self) -> str:
        return f'<{self.name}>'


@dataclass(frozen=True, slots=True)
class EvalConfig:
    """Cross-validation and sweep settings."""

    k: int = 5
    seed: int = 0
    epsilon_values: tuple[float, ...] = (0.51, 0.6, 0.7, 0.8, 0.9)
    vt_values: tuple[int, ...] = (3, 4, 5, 6, 7)
    np_values: tuple[int, ...] = (10000, 5000, 1000)
    mode: EntityMode = EntityMode.AppString
    algorithm: Algorithm = Algorithm.BP
    threads: int = 1

    def __post_init__(self):
        """Validate fold count and sweep lists at object creation."""
        if not isinstance(self.mode, EntityMode):
            object.__setattr__(self, 'mode', EntityMode(self.mode))
        if not isinstance(self.algorithm, Algorithm):
            object.__setattr__(self, 'algorithm', Algorithm(self.algorithm))
        for name in ('epsilon_values', 'vt_values', 'np_values'):
            values = tuple(getattr(self, name))
            if not values:
                raise EvaluationError(f'{name} must not be empty')
            object.__setattr__(self, name, values)
        if self.k < 2:
            raise EvaluationError(f'k must be >= 2, got {self.k}')
        if any(not 0.5 <= e < 1.0 for e in self.epsilon_values):
            raise EvaluationError('epsilon sweep values must be within [0.5, 1)')
        if self.threads < 1:
            raise ValueError('threads must be >= 1')


@dataclass(frozen=True, slots=True)
class Fold:
    """One cross-validation split. Training and testing never overlap."""

    index: int
    training: frozenset[DeviceId]
    testing: frozenset[DeviceId]


def balanced_folds(gt: GroundTruth, k: int, seed: int) -> list[Fold]:
    """
    Split a class-balanced sample of the ground truth into `k` folds.

    The larger class is down-sampled to the size of the smaller one with a generator
    seeded by `seed`; both classes are shuffled and cut into `k` near-equal parts.
    Fold f tests on part f of both classes and trains on all the other parts.

    Raises EvaluationError if either class has fewer than `k` devices.
    """
    bad, good = sorted(gt.bad_devices), sorted(gt.good_devices)
    if len(bad) < k or len(good) < k:
        raise EvaluationError(f'Need at least k={k} devices per class, have {len(bad)} bad and {len(good)} good')

    rng = np.random.default_rng(seed)
    n = min(len(bad), len(good))
    parts: list[list[np.ndarray]] = []
    for members in (bad, good):
        chosen = np.sort(rng.choice(len(members), size=n, replace=False))
        order = rng.permutation(chosen)
        parts.append(np.array_split(order, k))

    tests = [
        frozenset(bad[i] for i in b.tolist()) | frozenset(good[i] for i in gd.tolist())
        for b, gd in zip(parts[0], parts[1], strict=True)
    ]
    sampled = frozenset().union(*tests)
    folds: list[Fold] = []
    for f, testing in enumerate(tests):
        folds.append(Fold(f, sampled - testing, testing))
    logger.info('balanced folds: %d per class, k=%d, seed=%d', n, k, seed)
    return folds


def run_fold(
    g: BipartiteGraph, gt: GroundTruth, fold: Fold, bp_cfg: BpConfig, algorithm: Algorithm = Algorithm.BP
) -> dict[DeviceId, float]:
    """Score the test devices of one fold. Only training labels reach the priors."""
    if algorithm is Algorithm.LP:
        result = run_lp(g, gt, fold.training)
    else:
        result = run_bp(g, init_beliefs(g, gt, fold.training, bp_cfg), bp_cfg)
    scores = result.device_scores()
    return {d: scores[d] for d in sorted(fold.testing)}


class CvResult(Mapping['DeviceId', float]):
    """Pooled held-out scores of a k-fold run, plus the per-fold breakdown."""

    def __init__(self, folds: Sequence[Fold], fold_scores: Sequence[Mapping[DeviceId, float]]):
        self.folds: tuple[Fold, ...] = tuple(folds)
        self.fold_scores: tuple[Mapping[DeviceId, float], ...] = tuple(fold_scores)
        self._scores: dict[DeviceId, float] = {}
        for scores in self.fold_scores:
            self._scores.update(scores)

    @override
    def __getitem__(self, device: DeviceId) -> float:
        return self._scores[device]

    @override
    def __iter__(self) -> Iterator[DeviceId]:
        return iter(sorted(self._scores))

    @override
    def __len__(self) -> int:
        return len(self._scores)


def run_cv(
    g: BipartiteGraph,
    gt: GroundTruth,
    bp_cfg: BpConfig,
    eval_cfg: EvalConfig,
    folds: Sequence[Fold] | None = None,
) -> CvResult:
    """
    k runs, one per fold, executed on `eval_cfg.threads` workers.
    Results are merged by fold index, so scores do not depend on the worker count.
    """
    gt.check_graph(g)
    if folds is None:
        folds = balanced_folds(gt, eval_cfg.k, eval_cfg.seed)

    def score(fold: Fold) -> dict[DeviceId, float]:
        return run_fold(g, gt, fold, bp_cfg, eval_cfg.algorithm)

    if eval_cfg.threads <= 1:
        fold_scores = [score(f) for f in folds]
    else:
        with ThreadPoolExecutor(max_workers=eval_cfg.threads) as pool:
            fold_scores = list(pool.map(score, folds))
    return CvResult(folds, fold_scores)


@dataclass(frozen=True)
class RocCurve:
    """ROC points sorted by threshold (ascending) and the area under the curve."""

    points: list[tuple[float, float, float]]
    """(threshold, fpr, tpr)"""
    auc: float


def roc(scores: Mapping[DeviceId, float], gt: GroundTruth, thresholds: Iterable[float] | None = None) -> RocCurve:
    """
    Empirical ROC of P(bad) scores against the ground truth.

    A device is predicted bad when its score is strictly above the threshold.
    TPR = bad devices predicted bad / bad devices scored, FPR = good devices predicted bad /
    good devices scored. Thresholds default to the distinct scores.
    The AUC is the trapezoid area over the distinct (fpr, tpr) points plus (0, 0) and (1, 1).

    Raises EvaluationError if a scored device is unlabeled or either class is absent.
    """
    bad_scores: list[float] = []
    good_scores: list[float] = []
    for device, s in scores.items():
        if device in gt.bad_devices:
            bad_scores.append(s)
        elif device in gt.good_devices:
            good_scores.append(s)
        else:
            raise EvaluationError(f'Scored device {device!r} has no ground-truth label')
    if not bad_scores or not good_scores:
        raise EvaluationError('ROC needs at least one bad and one good scored device')

    bad_sorted = np.sort(np.asarray(bad_scores))
    good_sorted = np.sort(np.asarray(good_scores))
    if thresholds is None:
        t = np.unique(np.concatenate([bad_sorted, good_sorted]))
    else:
        t = np.unique(np.asarray(list(thresholds), dtype=np.float64))

    # count of scores strictly above each threshold
    tpr = (bad_sorted.size - np.searchsorted(bad_sorted, t, side='right')) / bad_sorted.size
    fpr = (good_sorted.size - np.searchsorted(good_sorted, t, side='right')) / good_sorted.size

    curve = np.unique(np.vstack([np.column_stack([fpr, tpr]), [[0.0, 0.0], [1.0, 1.0]]]), axis=0)
    area = float(auc(curve[:, 0], curve[:, 1]))
    points = [(float(a), float(b), float(c)) for a, b, c in zip(t.tolist(), fpr.tolist(), tpr.tolist(), strict=True)]
    return RocCurve(points, area)


@dataclass(frozen=True)
class EvalOutcome:
    """Scores and ROC curves of one cross-validation run."""

    scores: CvResult
    pooled: RocCurve
    per_fold: list[RocCurve] = field(default_factory=list)

    @property
    def auc(self) -> float:
        return self.pooled.auc


def evaluate(
    g: BipartiteGraph,
    gt: GroundTruth,
    bp_cfg: BpConfig,
    eval_cfg: EvalConfig,
    folds: Sequence[Fold] | None = None,
) -> EvalOutcome:
    """Cross-validate and compute the pooled and per-fold ROC curves."""
    cv = run_cv(g, gt, bp_cfg, eval_cfg, folds)
    per_fold = [roc(scores, gt) for scores in cv.fold_scores]
    outcome = EvalOutcome(cv, roc(cv, gt), per_fold)
    logger.info('%s eps=%.3f k=%d: AUC %.4f', eval_cfg.algorithm, bp_cfg.epsilon, eval_cfg.k, outcome.auc)
    return outcome


@dataclass(frozen=True)
class SweepPoint:
    """One evaluated parameter setting."""

    epsilon: float
    vt: int
    n_p: int
    mode: EntityMode
    algorithm: Algorithm
    outcome: EvalOutcome

    @property
    def auc(self) -> float:
        return self.outcome.auc


class Sweep(Mapping[object, float]):
    """AUC per swept value, in sweep order, keeping the full points for output files."""

    def __init__(self, parameter: str, points: Iterable[tuple[object, SweepPoint]]):
        self.parameter: str = parameter
        """Name of the swept parameter"""

        self.points: dict[object, SweepPoint] = dict(points)

    @override
    def __getitem__(self, value: object) -> float:
        return self.points[value].auc

    @override
    def __iter__(self) -> Iterator[object]:
        return iter(self.points)

    @override
    def __len__(self) -> int:
        return len(self.points)

    def spread(self) -> float:
        """Largest minus smallest AUC of the sweep."""
        aucs = list(self.values())
        return max(aucs) - min(aucs)


def _point(
    g: BipartiteGraph,
    gt: GroundTruth,
    bp_cfg: BpConfig,
    eval_cfg: EvalConfig,
    labeling: LabelingConfig,
    folds: Sequence[Fold] | None = None,
) -> SweepPoint:
    outcome = evaluate(g, gt, bp_cfg, eval_cfg, folds)
    return SweepPoint(bp_cfg.epsilon, labeling.vt, labeling.n_p, labeling.mode, eval_cfg.algorithm, outcome)


def epsilon_sweep(
    g: BipartiteGraph,
    gt: GroundTruth,
    eval_cfg: EvalConfig,
    bp_cfg: BpConfig | None = None,
    labeling: LabelingConfig | None = None,
) -> Sweep:
    """One full cross-validation per edge potential, on the same folds; everything else held fixed."""
    bp_cfg = bp_cfg or BpConfig()
    labeling = labeling or LabelingConfig(mode=eval_cfg.mode)
    folds = balanced_folds(gt, eval_cfg.k, eval_cfg.seed)
    return Sweep(
        'epsilon',
        (
            (eps, _point(g, gt, replace(bp_cfg, epsilon=eps), eval_cfg, labeling, folds))
            for eps in eval_cfg.epsilon_values
        ),
    )


def vt_sweep(
    raw: BipartiteGraph,
    provider: VerdictProvider,
    labeling: LabelingConfig,
    bp_cfg: BpConfig,
    eval_cfg: EvalConfig,
) -> Sweep:
    """Rebuild the ground truth for every vt threshold and cross-validate on it."""

    def at(vt: int) -> SweepPoint:
        point_cfg = replace(labeling, vt=vt)
        g, gt = build_ground_truth(raw, provider, point_cfg)
        return _point(g, gt, bp_cfg, eval_cfg, point_cfg)

    return Sweep('vt', ((vt, at(vt)) for vt in eval_cfg.vt_values))


def np_sweep(
    raw: BipartiteGraph,
    provider: VerdictProvider,
    labeling: LabelingConfig,
    bp_cfg: BpConfig,
    eval_cfg: EvalConfig,
) -> Sweep:
    """Refilter the graph for every popularity threshold and cross-validate on it."""

    def at(n_p: int) -> SweepPoint:
        point_cfg = replace(labeling, n_p=n_p)
        g, gt = build_ground_truth(raw, provider, point_cfg)
        return _point(g, gt, bp_cfg, eval_cfg, point_cfg)

    return Sweep('n_p', ((n_p, at(n_p)) for n_p in eval_cfg.np_values))


def mode_sweep(
    raws: Mapping[EntityMode, BipartiteGraph],
    provider: VerdictProvider,
    labeling: LabelingConfig,
    bp_cfg: BpConfig,
    eval_cfg: EvalConfig,
) -> Sweep:
    """Cross-validate with app-string and destination-IP app nodes (one raw graph per mode)."""

    def at(mode: EntityMode) -> SweepPoint:
        point_cfg = replace(labeling, mode=mode)
        g, gt = build_ground_truth(raws[mode], provider, point_cfg)
        return _point(g, gt, bp_cfg, replace(eval_cfg, mode=mode), point_cfg)

    return Sweep('mode', ((mode, at(mode)) for mode in raws))


def compare_algorithms(
    g: BipartiteGraph,
    gt: GroundTruth,
    bp_cfg: BpConfig,
    eval_cfg: EvalConfig,
    labeling: LabelingConfig | None = None,
) -> Sweep:
    """Belief propagation against label propagation on identical folds."""
    labeling = labeling or LabelingConfig(mode=eval_cfg.mode)
    folds = balanced_folds(gt, eval_cfg.k, eval_cfg.seed)
    return Sweep(
        'algorithm',
        ((alg, _point(g, gt, bp_cfg, replace(eval_cfg, algorithm=alg), labeling, folds)) for alg in Algorithm),
    )


def write_results(results_file: StrPath, points: Iterable[SweepPoint], config_hash: str) -> Path:
    """CSV `config_hash,epsilon,vt,n_p,mode,fold,auc`: one row per fold and a pooled row with fold `all`."""

    def rows() -> Iterator[tuple[object, ...]]:
        for p in points:
            head = (config_hash, p.epsilon, p.vt, p.n_p, p.mode)
            for f, curve in enumerate(p.outcome.per_fold):
                yield (*head, f, curve.auc)
            yield (*head, 'all', p.auc)

    return write_csv(results_file, ('config_hash', 'epsilon', 'vt', 'n_p', 'mode', 'fold', 'auc'), rows())


def write_roc(roc_file: StrPath, curve: RocCurve) -> Path:
    """CSV `threshold,fpr,tpr`."""
    return write_csv(roc_file, ('threshold', 'fpr', 'tpr'), curve.points)
