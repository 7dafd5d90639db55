"""Bit-stable writers for diagnostics records and state snapshots.

Floats are written with ``repr``, the shortest string that round-trips, so
identical runs give byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .diagnostics import BASE_COLUMNS, DiagnosticsRecord, norm_columns
from .dynamics import FlowState
from .torus import TorusGrid

SNAPSHOT_MAGIC = b"FLKSNAP\x00"
SNAPSHOT_VERSION = 1
# magic, version, dim, mode (0 unidirectional, 1 vector), N, alpha, t
_HEADER = struct.Struct("<8sHBBIdd")


def columns(s_list) -> tuple:
    return BASE_COLUMNS + tuple(norm_columns(s_list))


def _fmt(value) -> str:
    return repr(float(value))


class RecordWriter:
    """Streams records to CSV and/or NDJSON; flushes after every row."""

    def __init__(self, directory, formats=("csv",), s_list=(1.0, 2.0)):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.columns = columns(s_list)
        self._csv = self._ndjson = None
        if "csv" in formats:
            self._csv = open(self.directory / "records.csv", "w", newline="\n")
            self._csv.write(",".join(self.columns) + "\n")
        if "ndjson" in formats:
            self._ndjson = open(self.directory / "records.ndjson", "w", newline="\n")

    def write(self, record: DiagnosticsRecord) -> None:
        row = record.row()
        if self._csv is not None:
            self._csv.write(",".join(_fmt(row[c]) for c in self.columns) + "\n")
            self._csv.flush()
        if self._ndjson is not None:
            obj = {c: float(row[c]) for c in self.columns}
            if isinstance(record.P, tuple):
                obj["P"] = [float(p) for p in record.P]
            self._ndjson.write(json.dumps(obj) + "\n")
            self._ndjson.flush()

    def close(self) -> None:
        for fh in (self._csv, self._ndjson):
            if fh is not None:
                fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_snapshot(path, state: FlowState) -> None:
    grid = state.grid
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.dim,
                          1 if state.vector_mode else 0, grid.N, float(state.alpha),
                          float(state.time))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(state.rho, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.u, dtype="<f8").tobytes())


def read_snapshot(path) -> FlowState:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError("snapshot truncated")
    magic, version, dim, mode, N, alpha, t = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError("not a snapshot file (bad magic)")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    grid = TorusGrid(dim, N)
    ncomp = dim if mode else 1
    payload = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if payload.size != grid.size * (1 + ncomp):
        raise ValueError("snapshot payload has the wrong length")
    rho = payload[: grid.size].reshape(grid.shape).astype(float)
    u = payload[grid.size:].astype(float)
    u = u.reshape(((dim,) if mode else ()) + grid.shape)
    return FlowState(grid, rho, u, alpha, t)
