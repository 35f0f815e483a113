# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

import logging
import os
import sys
from argparse import ArgumentParser, ArgumentTypeError
from pathlib import Path
from typing import TYPE_CHECKING

from guilt_graph.config import FLAG_TARGETS, PipelineConfig
from guilt_graph.evaluation import Algorithm
from guilt_graph.graph import build_graph, read_edge_list, remove_popular_apps
from guilt_graph.ingest import EntityMode, load_edges
from guilt_graph.labeling import GroundTruth, VerdictTable, build_ground_truth
from guilt_graph.types import (
    ConfigError,
    EvaluationError,
    GroundTruthError,
    ParseError,
    SynthConfigError,
    TopologyError,
)

if TYPE_CHECKING:
    from collections.abc import Callable

    from guilt_graph.graph import BipartiteGraph
    from guilt_graph.types import StrPath

LOG_LEVELS = {'error': logging.ERROR, 'info': logging.INFO, 'debug': logging.DEBUG}

EXIT_CODES: tuple[tuple[type[Exception], int], ...] = (
    (ConfigError, 2),
    (ParseError, 4),
    (EvaluationError, 5),
    (GroundTruthError, 5),
    (TopologyError, 5),
    (SynthConfigError, 5),
    (OSError, 3),
)
"""Exception class -> process exit code, first match wins"""


def valid_path(name: StrPath) -> Path:
    """Validate paths used in command line arguments."""
    p = Path(name)
    if not p.is_file():
        raise ArgumentTypeError(f'file "{name}" does not exist')
    return p


def add_action[F: Callable[..., None]](parser: ArgumentParser) -> Callable[[F], F]:
    """Assign a function as the default callable for 'func' argument of this parser."""

    def decorator(function: F) -> F:
        parser.set_defaults(func=function)
        return function

    return decorator


def setup_logging():
    """Configure the root logger from the GG_LOG environment variable (error, info or debug)."""
    name = os.environ.get('GG_LOG', 'error').strip().lower()
    logging.basicConfig(
        level=LOG_LEVELS.get(name, logging.ERROR),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
        force=True,
    )
    if name not in LOG_LEVELS:
        logging.getLogger('guilt_graph').warning('unknown GG_LOG value %r, using error', name)


def exit_code(error: Exception) -> int | None:
    for cls, code in EXIT_CODES:
        if isinstance(error, cls):
            return code
    return None


# Options every subcommand takes
common_opts = ArgumentParser(add_help=False)
common_opts.add_argument('-c', '--config', type=valid_path, help='TOML config file, flags take precedence')
common_opts.add_argument('-o', '--out', type=Path, help='output directory (default: out)')
common_opts.add_argument('--threads', type=int, help='worker threads (default: all cores)')
common_opts.add_argument('--seed', type=int, help='random seed for folds and generation')

# Inputs for subcommands that need a graph and ground truth
input_opts = ArgumentParser(add_help=False)
input_opts.add_argument('--traffic', type=valid_path, help='traffic log, one tab separated packet per line')
input_opts.add_argument('--edges', type=valid_path, help='edge list written by "ingest", instead of --traffic')
input_opts.add_argument('--verdicts', type=valid_path, help='scanner verdicts CSV for apps (or IPs)')
input_opts.add_argument('--ip-verdicts', type=valid_path, help='scanner verdicts CSV for destination IPs')
input_opts.add_argument(
    '--ground-truth', type=valid_path, help='ground truth written by "label", instead of --verdicts'
)
input_opts.add_argument(
    '--mode', choices=[m.value for m in EntityMode], help='app node type: app string or destination IP'
)
input_opts.add_argument('--vt', type=int, help='engines needed to call an app bad (default 5)')
input_opts.add_argument('--np', type=int, help='drop apps used by more devices than this (default 1000)')
input_opts.add_argument('--nab', type=int, help='bad apps needed to call a device bad (default 2)')

# Belief propagation parameters
bp_opts = ArgumentParser(add_help=False)
bp_opts.add_argument('--delta', type=float, help='initial belief of labeled training devices (default 0.99)')
bp_opts.add_argument('--epsilon', type=float, help='edge potential (default 0.51)')

# Cross-validation parameters
cv_opts = ArgumentParser(add_help=False)
cv_opts.add_argument('--k', type=int, help='cross-validation folds (default 5)')
cv_opts.add_argument('--algorithm', choices=[a.value for a in Algorithm], help='bp or lp (default bp)')


def load_config(config: Path | None = None, **flags: object) -> PipelineConfig:
    """Pipeline config from the config file and the flags of a subcommand, flags winning."""
    overrides = {k: v for k, v in flags.items() if k in FLAG_TARGETS or k == 'threads'}
    return PipelineConfig.load(config, overrides)


def load_raw_graph(cfg: PipelineConfig, mode: EntityMode | None = None) -> BipartiteGraph:
    """The unfiltered device-app graph, from an edge list or parsed from traffic."""
    mode = mode or cfg.labeling.mode
    if cfg.paths.edges is not None and mode is cfg.labeling.mode:
        return build_graph(read_edge_list(cfg.paths.edges))
    if cfg.paths.traffic is None:
        raise ConfigError('need --traffic or --edges')
    return build_graph(load_edges(cfg.paths.traffic, mode, cfg.threads))


def load_verdicts(cfg: PipelineConfig) -> VerdictTable:
    """App verdicts and IP verdicts as one table; app ids and IPs never collide."""
    if cfg.paths.verdicts is None and cfg.paths.ip_verdicts is None:
        raise ConfigError('need --verdicts or --ip-verdicts')
    table = VerdictTable()
    for path in (cfg.paths.verdicts, cfg.paths.ip_verdicts):
        if path is not None:
            table = table.merged(VerdictTable.load_file(path))
    return table


def load_labeled_graph(cfg: PipelineConfig) -> tuple[BipartiteGraph, GroundTruth]:
    """
    Popularity-filtered graph with its ground truth.
    A ground-truth file takes precedence over labeling from verdicts.
    """
    raw = load_raw_graph(cfg)
    if cfg.paths.ground_truth is not None:
        g = remove_popular_apps(raw, cfg.labeling.n_p)
        gt = GroundTruth.load_file(cfg.paths.ground_truth)
        gt.check_graph(g)
        return g, gt
    return build_ground_truth(raw, load_verdicts(cfg), cfg.labeling)
