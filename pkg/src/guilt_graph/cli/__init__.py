# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

"""
Command line interface running the detection pipeline step by step:
ingest, label, infer, eval, sweep, topology, postanalyze, synth and report.

This module also demonstrates usage of the library API.
"""

from __future__ import annotations

import sys
from argparse import ArgumentParser
from pathlib import Path
from typing import TYPE_CHECKING

from guilt_graph.__about__ import copyright, version
from guilt_graph.cli._helpers import exit_code, setup_logging
from guilt_graph.cli.eval_app import eval_cmd
from guilt_graph.cli.infer_app import infer_cmd
from guilt_graph.cli.ingest_app import ingest_cmd
from guilt_graph.cli.label_app import label_cmd
from guilt_graph.cli.postanalyze_app import postanalyze_cmd
from guilt_graph.cli.report_app import report_cmd
from guilt_graph.cli.sweep_app import sweep_cmd
from guilt_graph.cli.synth_app import synth_cmd
from guilt_graph.cli.topology_app import topology_cmd

if TYPE_CHECKING:
    from collections.abc import Sequence

COMMANDS = (
    ('ingest', ingest_cmd),
    ('label', label_cmd),
    ('infer', infer_cmd),
    ('eval', eval_cmd),
    ('sweep', sweep_cmd),
    ('topology', topology_cmd),
    ('postanalyze', postanalyze_cmd),
    ('synth', synth_cmd),
    ('report', report_cmd),
)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        description='Find compromised mobile devices by belief propagation on device-app graphs.',
        epilog=f'{copyright}. Source: https://github.com/jack-mil/guilt-graph',
        prog=Path(sys.argv[0]).name,
    )
    if sys.version_info >= (3, 14):
        parser.suggest_on_error = True  # pyright: ignore[reportUnreachable]
        parser.color = True

    parser.add_argument('-v', '--version', action='version', version=f'%(prog)s {version}')
    subparses = parser.add_subparsers(title='Actions', required=True)
    for name, cmd in COMMANDS:
        subparses.add_parser(
            name,
            add_help=True,
            parents=[cmd],
            description=cmd.description,
            help=cmd.description,
        )
    return parser


def main(argv: Sequence[str] | None = None):
    setup_logging()
    args = build_parser().parse_args(argv)
    try:
        args.func(**vars(args))
    except Exception as e:
        code = exit_code(e)
        if code is None:
            raise
        print(f'error: {e}', file=sys.stderr)
        sys.exit(code)
