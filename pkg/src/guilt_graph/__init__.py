# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

from guilt_graph.__about__ import version
from guilt_graph.config import PipelineConfig
from guilt_graph.evaluation import EvalConfig, epsilon_sweep, evaluate
from guilt_graph.graph import BipartiteGraph, NodeRef, Side, build_graph
from guilt_graph.inference import BeliefVector, BpConfig, run_bp, run_lp
from guilt_graph.ingest import EntityMode, TrafficRecord, load_edges, parse_record
from guilt_graph.labeling import DeviceLabel, GroundTruth, LabelingConfig, VerdictTable, build_ground_truth
from guilt_graph.synthgen import SynthConfig, TopologyMode, generate

__version__ = version

__all__ = [
    'BeliefVector',
    'BipartiteGraph',
    'BpConfig',
    'DeviceLabel',
    'EntityMode',
    'EvalConfig',
    'GroundTruth',
    'LabelingConfig',
    'NodeRef',
    'PipelineConfig',
    'Side',
    'SynthConfig',
    'TopologyMode',
    'TrafficRecord',
    'VerdictTable',
    'build_ground_truth',
    'build_graph',
    'epsilon_sweep',
    'evaluate',
    'generate',
    'load_edges',
    'parse_record',
    'run_bp',
    'run_lp',
]
