"""Plain-text two-channel trace files.

Format::

    # sample_rate_hz = 200000
    # demod_frequency_hz = 3500000
    # seed = 1
    # length = 200000
    # normalization = shot_sigma0=1
    signal,idler
    -3.1415926535897931,2.7182818284590451
    ...

Values are written with 17 significant digits, which round-trips IEEE
doubles exactly.
"""

from __future__ import annotations

import math
import os
from pathlib import Path

import numpy as np

from .errors import TraceParseError
from .stats import Trace, TraceMeta

NORMALIZATION = "shot_sigma0=1"
COLUMNS = "signal,idler"


def _fmt(x: float) -> str:
    return repr(float(x))


def save_trace(trace: Trace, path, overwrite: bool = False) -> Path:
    path = Path(path)
    if path.exists() and not overwrite:
        raise FileExistsError(f"{path} exists; pass overwrite=True to replace it")
    meta = trace.meta
    header = [
        f"# sample_rate_hz = {_fmt(meta.sample_rate_hz)}",
        f"# demod_frequency_hz = {_fmt(meta.demod_frequency_hz)}",
        f"# seed = {'none' if meta.seed is None else int(meta.seed)}",
        f"# length = {trace.length}",
        f"# normalization = {NORMALIZATION}",
        COLUMNS,
    ]
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(header) + "\n")
            if trace.length:
                np.savetxt(fh, np.column_stack([trace.signal, trace.idler]), fmt="%.17g", delimiter=",")
    except OSError as err:
        raise OSError(f"cannot write trace to {path}: {err}") from err
    return path


def _parse_meta(path, lineno: int, key: str, value: str):
    try:
        if key in ("sample_rate_hz", "demod_frequency_hz"):
            return float(value)
        if key in ("seed", "length"):
            return None if value == "none" else int(value)
    except ValueError:
        raise TraceParseError(f"bad value {value!r} for {key}", path, lineno) from None
    return value


def load_trace(path) -> Trace:
    path = Path(path)
    if not path.is_file():
        raise TraceParseError("no such trace file", path)
    meta: dict = {}
    signal: list[float] = []
    idler: list[float] = []
    seen_columns = False
    with open(path, encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if seen_columns:
                    raise TraceParseError("metadata after column header", path, lineno)
                body = line[1:]
                if "=" not in body:
                    raise TraceParseError(f"malformed header line {line!r}", path, lineno)
                key, value = (part.strip() for part in body.split("=", 1))
                meta[key] = _parse_meta(path, lineno, key, value)
                continue
            if not seen_columns:
                if line.replace(" ", "") != COLUMNS:
                    raise TraceParseError(f"expected column header {COLUMNS!r}, got {line!r}", path, lineno)
                seen_columns = True
                continue
            fields = line.split(",")
            if len(fields) != 2:
                raise TraceParseError(f"expected 2 columns, got {len(fields)}", path, lineno)
            try:
                s, i = float(fields[0]), float(fields[1])
            except ValueError:
                raise TraceParseError(f"non-numeric record {line!r}", path, lineno) from None
            if not (math.isfinite(s) and math.isfinite(i)):
                raise TraceParseError(f"non-finite sample in record {line!r}", path, lineno)
            signal.append(s)
            idler.append(i)
    if not seen_columns:
        raise TraceParseError(f"missing column header {COLUMNS!r}", path)
    norm = meta.get("normalization", NORMALIZATION)
    if norm != NORMALIZATION:
        raise TraceParseError(f"unsupported normalization {norm!r}", path)
    declared = meta.get("length")
    if declared is not None and declared != len(signal):
        raise TraceParseError(f"header declares {declared} records but file holds {len(signal)}", path)
    trace_meta = TraceMeta(
        sample_rate_hz=meta.get("sample_rate_hz", TraceMeta.sample_rate_hz),
        demod_frequency_hz=meta.get("demod_frequency_hz", TraceMeta.demod_frequency_hz),
        seed=meta.get("seed"),
    )
    return Trace(np.array(signal), np.array(idler), trace_meta)


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` via a temporary file so readers never see a partial file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)
