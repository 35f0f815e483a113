# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

from dataclasses import replace
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from pathlib import Path

from argparse import ArgumentParser

from guilt_graph.cli._helpers import add_action, common_opts, load_config
from guilt_graph.synthgen import NodeKind, SynthConfig, TopologyMode, generate, write_corpus

# subcommand 'synth'
synth_cmd = ArgumentParser(
    description='Generate a synthetic corpus: traffic, verdicts, enrichment and ground truth',
    parents=[common_opts],
    add_help=False,
)
synth_cmd.add_argument(
    '--mode',
    dest='preset',
    choices=[m.value for m in TopologyMode],
    help='start from a calibrated preset instead of the [synth] config table',
)
synth_cmd.add_argument('--leak-fraction', type=float, help='share of bad-device packets given a privacy leak')


@add_action(synth_cmd)
def synth(config: Path | None, preset: str | None, leak_fraction: float | None, **flags: object):
    """Generate and write every corpus file under the output directory."""
    cfg = load_config(config, **flags)
    out = cfg.paths.out

    synth_cfg = cfg.synth
    if preset is not None:
        seed = flags.get('seed')
        synth_cfg = SynthConfig.preset(preset) if seed is None else SynthConfig.preset(preset, seed=seed)
    if leak_fraction is not None:
        synth_cfg = replace(synth_cfg, leak_fraction=leak_fraction)
    cfg = replace(cfg, synth=synth_cfg)

    corpus = generate(synth_cfg)
    paths = write_corpus(corpus, out)
    cfg.write_effective(out)

    g, gt = corpus.graph, corpus.ground_truth
    print(f'Synthetic {synth_cfg.topology_mode} corpus, seed {synth_cfg.seed}')
    print(f'  {g.n_devices} devices, {g.n_apps} apps, {g.n_edges} edges')
    for kind in NodeKind:
        print(f'  {kind:<8} devices: {len(corpus.devices_of(kind)):>6}  apps: {len(corpus.apps_of(kind)):>6}')
    print(f'  ground truth: {len(gt.bad_devices)} bad, {len(gt.good_devices)} good')
    for name, path in sorted(paths.items()):
        print(f'  {name:<15} {path.as_posix()}')
    print(flush=True)
