# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

"""
Whole-pipeline configuration.

Values come from three layers, later ones winning: dataclass defaults,
a TOML config file, then command line flags.
"""

from __future__ import annotations

import json
import logging
import os
import tomllib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any

from guilt_graph.evaluation import EvalConfig
from guilt_graph.inference import BpConfig
from guilt_graph.labeling import LabelingConfig
from guilt_graph.synthgen import SynthConfig
from guilt_graph.types import ConfigError
from guilt_graph.util import config_hash

if TYPE_CHECKING:
    from collections.abc import Mapping
    from typing import Self

    from guilt_graph.types import StrPath

__all__ = ['FLAG_TARGETS', 'PathsConfig', 'PipelineConfig']

logger = logging.getLogger(__name__)

EFFECTIVE_CONFIG = 'effective_config.json'

FLAG_TARGETS: dict[str, tuple[tuple[str, str], ...]] = {
    'traffic': (('paths', 'traffic'),),
    'verdicts': (('paths', 'verdicts'),),
    'ip_verdicts': (('paths', 'ip_verdicts'),),
    'edges': (('paths', 'edges'),),
    'ground_truth': (('paths', 'ground_truth'),),
    'enrich_dns': (('paths', 'enrich_dns'),),
    'enrich_asn': (('paths', 'enrich_asn'),),
    'catalog': (('paths', 'catalog'),),
    'out': (('paths', 'out'),),
    'mode': (('labeling', 'mode'), ('eval', 'mode')),
    'vt': (('labeling', 'vt'),),
    'np': (('labeling', 'n_p'),),
    'nab': (('labeling', 'n_ab'),),
    'delta': (('bp', 'delta'),),
    'epsilon': (('bp', 'epsilon'),),
    'k': (('eval', 'k'),),
    'seed': (('eval', 'seed'), ('synth', 'seed')),
    'algorithm': (('eval', 'algorithm'),),
}
"""Command line flag name -> (table, key) fields it sets"""


@dataclass(frozen=True, slots=True)
class PathsConfig:
    """Input and output locations. Unset inputs are None."""

    traffic: Path | None = None
    verdicts: Path | None = None
    ip_verdicts: Path | None = None
    edges: Path | None = None
    ground_truth: Path | None = None
    enrich_dns: Path | None = None
    enrich_asn: Path | None = None
    catalog: Path | None = None
    out: Path = Path('out')

    def __post_init__(self):
        """Coerce strings to paths at object creation."""
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None and not isinstance(value, Path):
                object.__setattr__(self, f.name, Path(value))


_SECTIONS: dict[str, type] = {
    'paths': PathsConfig,
    'labeling': LabelingConfig,
    'bp': BpConfig,
    'eval': EvalConfig,
    'synth': SynthConfig,
}


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the pipeline in one place."""

    paths: PathsConfig = field(default_factory=PathsConfig)
    labeling: LabelingConfig = field(default_factory=LabelingConfig)
    bp: BpConfig = field(default_factory=BpConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    """Worker threads; results do not depend on it"""

    @classmethod
    def load(cls, config_file: StrPath | None = None, overrides: Mapping[str, object] | None = None) -> Self:
        """
        ### Factory Method ###
        Build from an optional TOML file, then apply flag `overrides` (flag name -> value, None means unset).

        - Raises OSError if `config_file` does not exist.
        - Raises ConfigError for unknown tables, unknown keys or invalid values.
        """
        tables: dict[str, dict[str, Any]] = {name: {} for name in _SECTIONS}
        threads: int | None = None

        if config_file is not None:
            path = Path(config_file)
            if not path.is_file():
                raise OSError(f'Config file "{path}" could not be found')
            try:
                data = tomllib.loads(path.read_text(encoding='utf-8'))
            except tomllib.TOMLDecodeError as e:
                raise ConfigError(f'{path}: {e}') from None
            for name, value in data.items():
                if name == 'threads':
                    threads = value
                elif name in tables and isinstance(value, dict):
                    tables[name].update(value)
                else:
                    raise ConfigError(f'{path}: unknown config entry {name!r}')
            logger.info('loaded config file %s', path)

        for flag, value in (overrides or {}).items():
            if value is None:
                continue
            if flag == 'threads':
                threads = value  # type: ignore[assignment]
                continue
            if flag not in FLAG_TARGETS:
                raise ConfigError(f'unknown override {flag!r}')
            for table, key in FLAG_TARGETS[flag]:
                tables[table][key] = value

        sections: dict[str, object] = {}
        for name, section_type in _SECTIONS.items():
            known = {f.name for f in fields(section_type)}
            unknown = sorted(set(tables[name]) - known)
            if unknown:
                raise ConfigError(f'unknown key(s) in [{name}]: {", ".join(unknown)}')
            try:
                sections[name] = section_type(**tables[name])
            except (TypeError, ValueError) as e:
                raise ConfigError(f'[{name}] {e}') from None

        if threads is None:
            threads = os.cpu_count() or 1
        if not isinstance(threads, int) or threads < 1:
            raise ConfigError(f'threads must be a positive integer, got {threads!r}')
        cfg = cls(**sections, threads=threads)  # type: ignore[arg-type]
        return replace(cfg, eval=replace(cfg.eval, threads=threads))

    def as_dict(self) -> dict[str, Any]:
        """Plain JSON-ready view, enums and paths as strings."""
        return json.loads(json.dumps(asdict(self), default=str))

    def digest(self) -> str:
        """Hash of everything that can change a result. Paths and thread counts are left out."""
        view = self.as_dict()
        del view['paths'], view['threads']
        del view['eval']['threads']
        return config_hash(view)

    def write_effective(self, out_dir: StrPath | None = None) -> Path:
        """Write `effective_config.json` (sorted keys, with `config_hash`) into the output directory."""
        out = Path(out_dir) if out_dir is not None else self.paths.out
        out.mkdir(parents=True, exist_ok=True)
        path = out / EFFECTIVE_CONFIG
        path.write_text(json.dumps({**self.as_dict(), 'config_hash': self.digest()}, indent=2, sort_keys=True) + '\n')
        return path
