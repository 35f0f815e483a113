# SPDX-FileCopyrightText: 2024 jack-mil
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

from os import PathLike

type DeviceId = str
"""A device is identified by its source IPv4 address, verbatim"""

type AppId = str
"""An app is an app string (package name) or a destination IPv4 address, depending on the mode"""

type Edge = tuple[DeviceId, AppId]
"""Undirected device-app co-occurrence"""

type StrPath = str | PathLike[str]
"""String or path-like objects"""


class ParseError(ValueError):
    """Raised when a traffic, verdict, catalog, enrichment or edge-list row is malformed."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f'line {line_no}: {message}'
        super().__init__(message)
        self.line_no: int | None = line_no


class InvalidNodeError(IndexError):
    """Raised when a node reference or device id does not exist in the graph."""


class GroundTruthError(ValueError):
    """Raised when ground-truth sets are inconsistent with each other or with the graph."""


class EvaluationError(ValueError):
    """Raised when an evaluation cannot be carried out (too few devices, empty class)."""


class TopologyError(ValueError):
    """Raised when a topology metric is undefined for the given input."""


class SynthConfigError(ValueError):
    """Raised when a synthetic generator configuration is infeasible."""


class ConfigError(ValueError):
    """Raised when a pipeline configuration file or flag is invalid."""
