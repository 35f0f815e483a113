# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

"""
Traffic record parsing and device / app entity extraction.

A traffic file holds one record per line, 8 tab-separated columns:
```
  timestamp  src_ip  dst_ip  dst_domain  http_method  http_path  app_string  header_pairs
  1554076800 10.0.0.5 93.184.216.34 example.com GET /open/confirm.htm?pkg=com.sina.news com.sina.news ver=1&lang=en
```
Empty columns are absent optional fields. Lines starting with `#` are comments.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import StrEnum
from ipaddress import AddressValueError, IPv4Address
from itertools import batched
from pathlib import Path
from typing import TYPE_CHECKING, override
from urllib.parse import parse_qsl, urlencode

from guilt_graph.types import ParseError

if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator

    from guilt_graph.types import AppId, DeviceId, Edge, StrPath

__all__ = [
    'EntityMode',
    'TrafficRecord',
    'build_edge_stream',
    'extract_app',
    'extract_device',
    'format_record',
    'load_edges',
    'parse_record',
    'read_traffic',
    'write_traffic',
]

logger = logging.getLogger(__name__)

COLUMNS = 8
CHUNK_LINES = 50_000


class EntityMode(StrEnum):
    """What counts as an app node: the app string field, or the destination address."""

    AppString = 'app-string'
    DestinationIP = 'dst-ip'

    @override
    def __repr__(self) -> str:
        return f'<{self.name}>'


@dataclass(frozen=True, slots=True)
class TrafficRecord:
    """One parsed packet metadata row."""

    timestamp: int
    src_ip: str
    dst_ip: str
    dst_domain: str | None = None
    http_method: str | None = None
    http_path: str | None = None
    app_string: str | None = None
    header_pairs: tuple[tuple[str, str], ...] = field(default=())

    def __post_init__(self):
        """Validate addresses and the app string at object creation."""
        for name in ('src_ip', 'dst_ip'):
            _check_ipv4(getattr(self, name))
        if self.app_string is not None and (not self.app_string or any(c.isspace() for c in self.app_string)):
            raise ParseError(f'app string {self.app_string!r} must be non-empty without whitespace')

    def query_pairs(self) -> list[tuple[str, str]]:
        """Key-value pairs of the URL query string in `http_path`, blanks kept."""
        if not self.http_path or '?' not in self.http_path:
            return []
        _, _, query = self.http_path.partition('?')
        return parse_qsl(query, keep_blank_values=True)


def _check_ipv4(value: str):
    try:
        IPv4Address(value)
    except AddressValueError as e:
        raise ParseError(f'bad IPv4 address {value!r}') from e


def _optional(value: str) -> str | None:
    return value if value else None


def parse_record(line: str, line_no: int | None = None) -> TrafficRecord:
    """
    Parse one line of the traffic format into a TrafficRecord.

    - Raises ParseError on a wrong column count, a bad timestamp or a bad IPv4 address.
    """
    columns = line.rstrip('\r\n').split('\t')
    if len(columns) != COLUMNS:
        raise ParseError(f'wrong column count: expected {COLUMNS}, found {len(columns)}', line_no)

    ts, src, dst, domain, method, path, app, headers = columns
    try:
        timestamp = int(ts)
    except ValueError:
        raise ParseError(f'bad timestamp {ts!r}', line_no) from None

    try:
        return TrafficRecord(
            timestamp=timestamp,
            src_ip=src,
            dst_ip=dst,
            dst_domain=_optional(domain),
            http_method=_optional(method),
            http_path=_optional(path),
            app_string=_optional(app),
            header_pairs=tuple(parse_qsl(headers, keep_blank_values=True)),
        )
    except ParseError as e:
        raise ParseError(str(e), line_no) from None


def format_record(rec: TrafficRecord) -> str:
    """Serialise a record back to one line (no trailing newline)."""
    columns = [
        str(rec.timestamp),
        rec.src_ip,
        rec.dst_ip,
        rec.dst_domain or '',
        rec.http_method or '',
        rec.http_path or '',
        rec.app_string or '',
        urlencode(rec.header_pairs),
    ]
    return '\t'.join(columns)


def _numbered_lines(traffic_file: StrPath) -> Iterator[tuple[int, str]]:
    path = Path(traffic_file)
    if not path.exists():
        raise OSError(f'Traffic file "{path}" could not be found')
    with path.open(encoding='utf-8') as f:
        for i, line in enumerate(f, start=1):
            if not line.strip() or line.startswith('#'):
                continue
            yield i, line


def read_traffic(traffic_file: StrPath) -> Iterator[TrafficRecord]:
    """
    Stream the records of a traffic file, skipping comments and blank lines.

    - Raises OSError if the file does not exist.
    - Raises ParseError (with the line number) on the first malformed row.
    """
    for i, line in _numbered_lines(traffic_file):
        yield parse_record(line, line_no=i)


def write_traffic(traffic_file: StrPath, records: Iterable[TrafficRecord]) -> int:
    """Write records to a traffic file and return how many were written."""
    path = Path(traffic_file)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open('w', encoding='utf-8') as f:
        for rec in records:
            f.write(format_record(rec) + '\n')
            count += 1
    return count


def extract_device(rec: TrafficRecord) -> DeviceId:
    """Each source address is one device."""
    return rec.src_ip


def extract_app(rec: TrafficRecord, mode: EntityMode) -> AppId | None:
    """
    Return the app node of a record, or None when the record carries no app.
    App strings are taken verbatim: version or market suffixes make distinct apps.
    """
    match mode:
        case EntityMode.AppString:
            return rec.app_string
        case EntityMode.DestinationIP:
            return rec.dst_ip


def build_edge_stream(records: Iterable[TrafficRecord], mode: EntityMode) -> set[Edge]:
    """Deduplicated (device, app) pairs seen in `records`."""
    edges: set[Edge] = set()
    for rec in records:
        app = extract_app(rec, mode)
        if app is not None:
            edges.add((extract_device(rec), app))
    return edges


def _chunk_edges(chunk: tuple[tuple[int, str], ...], mode: EntityMode) -> set[Edge]:
    return build_edge_stream((parse_record(line, line_no=i) for i, line in chunk), mode)


def load_edges(traffic_file: StrPath, mode: EntityMode, threads: int = 1) -> set[Edge]:
    """
    Parse a traffic file and return its edge set.

    Line chunks are parsed on a pool of `threads` workers and merged by set union,
    so the result does not depend on the worker count.
    """
    chunks = batched(_numbered_lines(traffic_file), CHUNK_LINES)
    edges: set[Edge] = set()
    if threads <= 1:
        for chunk in chunks:
            edges |= _chunk_edges(chunk, mode)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for part in pool.map(lambda c: _chunk_edges(c, mode), chunks):
                edges |= part
    logger.info('loaded %d edges from %s (mode=%s)', len(edges), traffic_file, mode)
    return edges
