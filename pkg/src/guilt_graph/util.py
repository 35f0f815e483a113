# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

"""Standalone helpers shared by the analysis modules: CSV files, CDFs and aligned tables."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from guilt_graph.types import ParseError

if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator, Mapping, Sequence

    from guilt_graph.types import StrPath


def write_csv(path: StrPath, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    """Write `rows` under a header row. Parent directories are created as needed."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='', encoding='utf-8') as fp:
        writer = csv.writer(fp, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)
    return path


def read_csv(path: StrPath, required: Sequence[str]) -> Iterator[tuple[int, dict[str, str]]]:
    """
    Yield (line number, row) pairs from a CSV file with a header row.

    Raises ParseError if a column in `required` is missing from the header.
    """
    path = Path(path)
    if not path.exists():
        raise OSError(f'File "{path}" could not be found')

    with path.open(newline='', encoding='utf-8') as fp:
        reader = csv.DictReader(fp)
        missing = set(required).difference(reader.fieldnames or ())
        if missing:
            raise ParseError(f'{path.name}: missing column(s) {sorted(missing)}', line_no=1)
        for row in reader:
            yield reader.line_num, row


def empirical_cdf(values: Iterable[float]) -> list[tuple[float, float]]:
    """
    Sorted (value, cumulative fraction) pairs, one per distinct value.
    An empty input gives an empty CDF.
    """
    arr = np.asarray(values if isinstance(values, np.ndarray) else list(values), dtype=float)
    if arr.size == 0:
        return []
    uniq, counts = np.unique(arr, return_counts=True)
    cum = np.cumsum(counts) / arr.size
    return [(_plain(v), float(c)) for v, c in zip(uniq, cum, strict=True)]


def _plain(value: float) -> float | int:
    # integral values print as ints in CSV output
    return int(value) if float(value).is_integer() else float(value)


def config_hash(config: Mapping[str, object]) -> str:
    """Short, stable digest of a JSON-serialisable configuration mapping."""
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def max_len(collection: Iterable[object]) -> int:
    """
    Get the length of longest item (as text) in the collection.
    Useful for printing with alignment.
    """
    return max((len(str(item)) for item in collection), default=0)


def format_table(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    """Render rows as an aligned, pipe separated text table."""
    cells = [[_fmt(v) for v in row] for row in rows]
    widths = [max_len([name, *(row[i] for row in cells)]) for i, name in enumerate(header)]
    lines = [' | '.join(name.ljust(w) for name, w in zip(header, widths, strict=True))]
    lines.append('-+-'.join('-' * w for w in widths))
    lines.extend(' | '.join(v.ljust(w) for v, w in zip(row, widths, strict=True)) for row in cells)
    return '\n'.join(lines)


def _fmt(value: object) -> str:
    if isinstance(value, float):
        return f'{value:.4f}'
    return str(value)
