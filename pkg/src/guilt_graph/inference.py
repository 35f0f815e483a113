# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

"""
Guilt-by-association inference on the device-app graph.

Loopy belief propagation over two states (bad, good) with a homophily edge potential,
and the label-propagation baseline. Both return an InferenceResult whose scores are P(bad).
"""

from __future__ import annotations

import logging
import time
from collections.abc import Mapping
from dataclasses import dataclass
from typing import TYPE_CHECKING, override

import numpy as np
from scipy.special import logsumexp

from guilt_graph.graph import NodeRef, Side
from guilt_graph.labeling import DeviceLabel
from guilt_graph.types import InvalidNodeError
from guilt_graph.util import write_csv

if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator, Sequence
    from pathlib import Path

    from guilt_graph.graph import BipartiteGraph
    from guilt_graph.labeling import GroundTruth
    from guilt_graph.types import DeviceId, StrPath

__all__ = [
    'BeliefTable',
    'BeliefVector',
    'BpConfig',
    'InferenceResult',
    'MessageTable',
    'UnknownReport',
    'bp_message',
    'classify',
    'detect_unknown',
    'edge_potential',
    'init_beliefs',
    'run_bp',
    'run_lp',
    'write_beliefs',
]

logger = logging.getLogger(__name__)

BAD, GOOD = 0, 1
"""State indices in every (..., 2) belief or message array"""

NORMALIZATION_TOL = 1e-12
LP_MAX_ITERATIONS = 1000
LP_TOL = 1e-6


@dataclass(frozen=True, slots=True)
class BeliefVector:
    """Probability of the bad and good states of one node."""

    p_bad: float
    p_good: float

    def __post_init__(self):
        """Validate that the vector is a probability distribution."""
        for name in ('p_bad', 'p_good'):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f'{name} must be within [0, 1], got {getattr(self, name)}')
        if abs(self.p_bad + self.p_good - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f'Belief ({self.p_bad}, {self.p_good}) does not sum to 1')

    @classmethod
    def uniform(cls) -> BeliefVector:
        return cls(0.5, 0.5)

    @classmethod
    def from_bad(cls, p_bad: float) -> BeliefVector:
        return cls(p_bad, 1.0 - p_bad)


@dataclass(frozen=True, slots=True)
class BpConfig:
    """Belief propagation parameters."""

    delta: float = 0.99
    """Initial belief strength of a labeled training device"""
    epsilon: float = 0.51
    """Edge potential on the diagonal (homophily strength)"""
    max_iterations: int = 100
    convergence_tol: float = 1e-6

    def __post_init__(self):
        """Validate the parameter ranges at object creation."""
        # delta = 0.5 is accepted and makes every prior uniform
        if not 0.5 <= self.delta <= 1.0:
            raise ValueError(f'delta must be within [0.5, 1], got {self.delta}')
        if not 0.5 <= self.epsilon < 1.0:
            raise ValueError(f'epsilon must be within [0.5, 1), got {self.epsilon}')
        if self.max_iterations < 1:
            raise ValueError('max_iterations must be >= 1')
        if self.convergence_tol <= 0:
            raise ValueError('convergence_tol must be positive')


def edge_potential(epsilon: float) -> np.ndarray:
    """The 2x2 compatibility matrix, epsilon on the diagonal."""
    return np.array([[epsilon, 1.0 - epsilon], [1.0 - epsilon, epsilon]])


def _log(p: np.ndarray | Sequence[float]) -> np.ndarray:
    # zero probabilities (delta = 1) become -inf
    with np.errstate(divide='ignore'):
        return np.log(np.asarray(p, dtype=np.float64))


def _normalize_log(x: np.ndarray) -> np.ndarray:
    """Shift rows of an (n, 2) log array so each row sums to 1 in probability space."""
    return x - np.logaddexp(x[:, BAD], x[:, GOOD])[:, None]


class BeliefTable(Mapping[NodeRef, BeliefVector]):
    """
    Read-only mapping of every node of a graph to its belief, backed by an (n_nodes, 2) array
    in whole-graph node order (devices first).
    """

    def __init__(self, g: BipartiteGraph, probabilities: np.ndarray):
        probabilities = np.asarray(probabilities, dtype=np.float64)
        if probabilities.shape != (g.n_nodes, 2):
            raise ValueError(f'Belief array must have shape ({g.n_nodes}, 2), got {probabilities.shape}')

        self.graph: BipartiteGraph = g
        """Graph the beliefs belong to"""

        self.array: np.ndarray = probabilities
        """Row i is (P(bad), P(good)) of the node with global index i"""

    @override
    def __getitem__(self, ref: NodeRef) -> BeliefVector:
        p_bad, p_good = self.array[self.graph.global_index(ref)]
        return BeliefVector(float(p_bad), float(p_good))

    @override
    def __iter__(self) -> Iterator[NodeRef]:
        return (self.graph.ref_at(i) for i in range(self.graph.n_nodes))

    @override
    def __len__(self) -> int:
        return self.graph.n_nodes

    @property
    def p_bad(self) -> np.ndarray:
        return self.array[:, BAD]

    def device_scores(self) -> dict[DeviceId, float]:
        """P(bad) of every device, by device id."""
        return dict(zip(self.graph.devices, self.p_bad[: self.graph.n_devices].tolist(), strict=True))

    @classmethod
    def from_mapping(cls, g: BipartiteGraph, beliefs: Mapping[NodeRef, BeliefVector]) -> BeliefTable:
        """
        ### Factory Method ###
        Pack an arbitrary mapping into a table. Raises ValueError if a node of `g` is missing.
        """
        if isinstance(beliefs, BeliefTable) and beliefs.graph is g:
            return beliefs
        probabilities = np.empty((g.n_nodes, 2))
        for i in range(g.n_nodes):
            ref = g.ref_at(i)
            try:
                b = beliefs[ref]
            except KeyError:
                raise ValueError(f'No prior given for node {ref}') from None
            probabilities[i] = (b.p_bad, b.p_good)
        return cls(g, probabilities)


@dataclass
class MessageTable:
    """
    Log-space messages of one BP run, one row per edge and direction.
    Edge e joins device `g.edge_devices[e]` and app `g.edge_apps[e]`.
    """

    device_to_app: np.ndarray
    """(n_edges, 2) log messages from the device end to the app end"""
    app_to_device: np.ndarray
    """(n_edges, 2) log messages from the app end to the device end"""
    log_priors: np.ndarray
    """(n_nodes, 2) log priors in whole-graph order"""
    potential: np.ndarray
    """2x2 edge potential"""

    @classmethod
    def uniform(cls, g: BipartiteGraph, priors: BeliefTable, epsilon: float) -> MessageTable:
        """
        ### Factory Method ###
        Every message starts at (0.5, 0.5).
        """
        half = np.full((g.n_edges, 2), np.log(0.5))
        return cls(half, half.copy(), _log(priors.array), edge_potential(epsilon))

    def message(self, g: BipartiteGraph, src: NodeRef, dst: NodeRef) -> BeliefVector:
        """The message sent from `src` to `dst` along their edge."""
        if src.side is dst.side:
            raise InvalidNodeError(f'{src} and {dst} are on the same side')
        device, app = (src, dst) if src.side is Side.Device else (dst, src)
        g.validate(device)
        g.validate(app)
        key = device.index * max(g.n_apps, 1) + app.index
        keys = g.edge_devices * max(g.n_apps, 1) + g.edge_apps
        e = int(np.searchsorted(keys, key))
        if e >= keys.size or keys[e] != key:
            raise InvalidNodeError(f'No edge between {device} and {app}')
        row = self.device_to_app[e] if src.side is Side.Device else self.app_to_device[e]
        p = np.exp(row)
        return BeliefVector(float(p[BAD]), float(p[GOOD]))


@dataclass(frozen=True)
class InferenceResult:
    """Final beliefs of a BP or LP run."""

    beliefs: BeliefTable
    iterations_run: int
    converged: bool
    messages: MessageTable | None = None
    """Final messages (BP only)"""

    def device_scores(self) -> dict[DeviceId, float]:
        return self.beliefs.device_scores()


def init_beliefs(g: BipartiteGraph, gt: GroundTruth, training: Iterable[DeviceId], cfg: BpConfig) -> BeliefTable:
    """
    Priors for one BP run.

    - training bad devices: (delta, 1 - delta)
    - training good devices: (1 - delta, delta)
    - every other device and every app: (0.5, 0.5)

    Raises InvalidNodeError if a training device is not in `g`,
    and ValueError if a training device has no ground-truth label.
    """
    priors = np.full((g.n_nodes, 2), 0.5)
    for device in training:
        i = g.device_ref(device).index
        match gt.label_of(device):
            case DeviceLabel.Bad:
                priors[i] = (cfg.delta, 1.0 - cfg.delta)
            case DeviceLabel.Good:
                priors[i] = (1.0 - cfg.delta, cfg.delta)
            case None:
                raise ValueError(f'Training device {device!r} has no ground-truth label')
    return BeliefTable(g, priors)


def bp_message(prior: BeliefVector, incoming: Iterable[BeliefVector], epsilon: float) -> BeliefVector:
    """
    One sum-product message from node i to neighbor j.

    `incoming` holds the messages i received from every neighbor except j.
    out(x_j) = sum over x_i of prior(x_i) * psi(x_i, x_j) * prod incoming(x_i), normalized.
    """
    cavity = _log([prior.p_bad, prior.p_good])
    for m in incoming:
        cavity = cavity + _log([m.p_bad, m.p_good])
    out = logsumexp(cavity[:, None] + _log(edge_potential(epsilon)), axis=0)
    p = np.exp(out - np.logaddexp(out[BAD], out[GOOD]))
    return BeliefVector(float(p[BAD]), float(p[GOOD]))


def _send(cavity: np.ndarray, log_psi: np.ndarray) -> np.ndarray:
    """Vectorized message update: rows of log cavity beliefs to normalized log messages."""
    out = np.empty_like(cavity)
    for x_j in (BAD, GOOD):
        out[:, x_j] = np.logaddexp(cavity[:, BAD] + log_psi[BAD, x_j], cavity[:, GOOD] + log_psi[GOOD, x_j])
    return _normalize_log(out)


def _incoming_sums(index: np.ndarray, messages: np.ndarray, n: int) -> np.ndarray:
    """Sum of incoming log messages per node on one side."""
    sums = np.empty((n, 2))
    for s in (BAD, GOOD):
        sums[:, s] = np.bincount(index, weights=messages[:, s], minlength=n)
    return sums


def run_bp(g: BipartiteGraph, priors: Mapping[NodeRef, BeliefVector], cfg: BpConfig) -> InferenceResult:
    """
    Loopy belief propagation with a synchronous (flooding) schedule.

    Every iteration computes all messages from the previous iteration's messages.
    Stops when no message probability moves by `cfg.convergence_tol` or more,
    or after `cfg.max_iterations` iterations. Non-convergence is logged, not raised.
    """
    table = BeliefTable.from_mapping(g, priors)
    msgs = MessageTable.uniform(g, table, cfg.epsilon)
    log_psi = _log(msgs.potential)
    dev_prior = msgs.log_priors[: g.n_devices]
    app_prior = msgs.log_priors[g.n_devices :]
    ed, ea = g.edge_devices, g.edge_apps

    start = time.perf_counter()
    converged = False
    iterations = 0
    while iterations < cfg.max_iterations:
        iterations += 1
        at_device = _incoming_sums(ed, msgs.app_to_device, g.n_devices)
        at_app = _incoming_sums(ea, msgs.device_to_app, g.n_apps)

        # cavity: everything a node knows except what the recipient told it
        new_d2a = _send(dev_prior[ed] + (at_device[ed] - msgs.app_to_device), log_psi)
        new_a2d = _send(app_prior[ea] + (at_app[ea] - msgs.device_to_app), log_psi)

        change = 0.0
        if g.n_edges:
            change = max(
                float(np.abs(np.exp(new_d2a) - np.exp(msgs.device_to_app)).max()),
                float(np.abs(np.exp(new_a2d) - np.exp(msgs.app_to_device)).max()),
            )
        msgs.device_to_app, msgs.app_to_device = new_d2a, new_a2d
        logger.debug('bp iteration %d max message change %.3g', iterations, change)
        if change < cfg.convergence_tol:
            converged = True
            break

    elapsed = time.perf_counter() - start
    logger.info('bp_iterations=%d wall_seconds=%.3f', iterations, elapsed)
    if not converged:
        logger.warning('belief propagation did not converge within %d iterations', cfg.max_iterations)

    log_beliefs = msgs.log_priors.copy()
    log_beliefs[: g.n_devices] += _incoming_sums(ed, msgs.app_to_device, g.n_devices)
    log_beliefs[g.n_devices :] += _incoming_sums(ea, msgs.device_to_app, g.n_apps)
    beliefs = np.exp(_normalize_log(log_beliefs))
    return InferenceResult(BeliefTable(g, beliefs), iterations, converged, msgs)


def classify(result: InferenceResult, threshold: float) -> dict[DeviceId, DeviceLabel]:
    """Devices with P(bad) strictly above `threshold` are bad, all others good. Apps are left out."""
    return {
        device: DeviceLabel.Bad if score > threshold else DeviceLabel.Good
        for device, score in result.device_scores().items()
    }


def run_lp(
    g: BipartiteGraph,
    gt: GroundTruth,
    training: Iterable[DeviceId],
    max_iterations: int = LP_MAX_ITERATIONS,
    tol: float = LP_TOL,
) -> InferenceResult:
    """
    Label propagation baseline.

    Training devices are clamped to 1 (bad) or 0 (good). Every other node starts at 0.5
    and repeatedly takes the mean score of its neighbors; isolated nodes keep 0.5.
    """
    scores = np.full(g.n_nodes, 0.5)
    clamped = np.zeros(g.n_nodes, dtype=bool)
    for device in training:
        i = g.device_ref(device).index
        match gt.label_of(device):
            case DeviceLabel.Bad:
                scores[i] = 1.0
            case DeviceLabel.Good:
                scores[i] = 0.0
            case None:
                raise ValueError(f'Training device {device!r} has no ground-truth label')
        clamped[i] = True

    adjacency = g.adjacency
    degrees = np.diff(adjacency.indptr)
    free = ~clamped & (degrees > 0)
    inv_degree = np.zeros(g.n_nodes)
    inv_degree[degrees > 0] = 1.0 / degrees[degrees > 0]

    converged = False
    iterations = 0
    while iterations < max_iterations:
        iterations += 1
        means = (adjacency @ scores) * inv_degree
        change = float(np.abs(means[free] - scores[free]).max()) if free.any() else 0.0
        scores[free] = means[free]
        if change < tol:
            converged = True
            break

    if not converged:
        logger.warning('label propagation did not converge within %d iterations', max_iterations)
    logger.info('lp_iterations=%d', iterations)
    return InferenceResult(BeliefTable(g, np.column_stack([scores, 1.0 - scores])), iterations, converged)


@dataclass(frozen=True, slots=True)
class UnknownReport:
    """Classification of the devices left out of the ground truth."""

    predictions: Mapping[DeviceId, DeviceLabel]
    result: InferenceResult | None = None
    """The full-training BP run the predictions come from"""

    @property
    def n_unknown(self) -> int:
        return len(self.predictions)

    @property
    def scores(self) -> dict[DeviceId, float]:
        """P(bad) of each unlabeled device, empty without a BP run."""
        if self.result is None:
            return {}
        beliefs = self.result.device_scores()
        return {d: beliefs[d] for d in self.predictions}

    @property
    def n_bad(self) -> int:
        return sum(1 for label in self.predictions.values() if label is DeviceLabel.Bad)

    @property
    def n_good(self) -> int:
        return self.n_unknown - self.n_bad


def detect_unknown(g: BipartiteGraph, gt: GroundTruth, cfg: BpConfig, threshold: float = 0.5) -> UnknownReport:
    """Run BP with every labeled device as training and classify the unlabeled devices."""
    labeled = gt.labeled
    result = run_bp(g, init_beliefs(g, gt, labeled, cfg), cfg)
    predictions = {d: label for d, label in classify(result, threshold).items() if d not in labeled}
    report = UnknownReport(predictions, result)
    logger.info('unknown devices: %d classified bad of %d', report.n_bad, report.n_unknown)
    return report


def write_beliefs(belief_file: StrPath, result: InferenceResult) -> Path:
    """Dump final beliefs as CSV `node_id,side,p_bad,iterations,converged`, devices first."""
    g = result.beliefs.graph
    converged = str(result.converged).lower()
    rows = (
        (g.node_id(ref), ref.side, repr(float(p)), result.iterations_run, converged)
        for ref, p in zip(result.beliefs, result.beliefs.p_bad.tolist(), strict=True)
    )
    return write_csv(belief_file, ('node_id', 'side', 'p_bad', 'iterations', 'converged'), rows)
