"""FMD1 model checkpoints.

Layout (little-endian)::

    magic b"FMD1", version u16 = 1
    u32 length + UTF-8 config record
    then per parameter, in insertion order:
        u16 name length, name bytes, u32 rows, u32 cols, rows*cols float32

The config record is one ``key=value`` line per ModelConfig field, in field
order, each line ending in ``\\n``.  Floats are written with ``repr`` so they
read back exactly.
"""
from __future__ import annotations

import struct
from dataclasses import fields
from pathlib import Path
from typing import Tuple

import numpy as np

from .errors import FormatError
from .model import ModelConfig, validate_params
from .numeric import FLOAT, ParamStore

FMD1_MAGIC = b"FMD1"
FMD1_VERSION = 1


def encode_config(config: ModelConfig) -> str:
    lines = []
    for f in fields(ModelConfig):
        value = getattr(config, f.name)
        text = repr(value) if isinstance(value, float) else str(value)
        if "\n" in text or "=" in f.name:
            raise FormatError(f"config field {f.name} cannot be encoded")
        lines.append(f"{f.name}={text}\n")
    return "".join(lines)


def decode_config(text: str) -> ModelConfig:
    types = {f.name: f.type for f in fields(ModelConfig)}
    values = {}
    for line in text.splitlines():
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep or key not in types:
            raise FormatError(f"bad config record line {line!r}")
        kind = types[key]
        try:
            if kind in ("int", int):
                values[key] = int(raw)
            elif kind in ("float", float):
                values[key] = float(raw)
            else:
                values[key] = raw
        except ValueError as exc:
            raise FormatError(f"bad value for {key}: {raw!r}") from exc
    try:
        return ModelConfig(**values)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid config record: {exc}") from exc


def encode_checkpoint(config: ModelConfig, params: ParamStore) -> bytes:
    record = encode_config(config).encode("utf-8")
    parts = [FMD1_MAGIC, struct.pack("<HI", FMD1_VERSION, len(record)), record]
    for name, value in params.items():
        raw = name.encode("utf-8")
        rows, cols = value.shape
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<II", rows, cols))
        parts.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_checkpoint(data: bytes, name: str = "checkpoint") -> Tuple[ModelConfig, ParamStore]:
    def take(pos, n, what):
        if pos + n > len(data):
            raise FormatError(f"{name}: truncated while reading {what}")
        return data[pos:pos + n], pos + n

    head, pos = take(0, 4, "magic")
    if head != FMD1_MAGIC:
        raise FormatError(f"{name}: bad magic {head!r}")
    raw, pos = take(pos, 6, "header")
    version, rec_len = struct.unpack("<HI", raw)
    if version != FMD1_VERSION:
        raise FormatError(f"{name}: unsupported FMD1 version {version}")
    record, pos = take(pos, rec_len, "config record")
    try:
        config = decode_config(record.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise FormatError(f"{name}: config record is not UTF-8") from exc
    params = ParamStore()
    while pos < len(data):
        raw, pos = take(pos, 2, "parameter name length")
        (nlen,) = struct.unpack("<H", raw)
        pname, pos = take(pos, nlen, "parameter name")
        raw, pos = take(pos, 8, "parameter shape")
        rows, cols = struct.unpack("<II", raw)
        payload, pos = take(pos, 4 * rows * cols, f"values of {pname.decode('utf-8', 'replace')}")
        values = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(FLOAT)
        if not np.all(np.isfinite(values)):
            raise FormatError(f"{name}: non-finite values in {pname!r}")
        params.add(pname.decode("utf-8"), values)
    try:
        validate_params(config, params)
    except ValueError as exc:
        raise FormatError(f"{name}: {exc}") from exc
    return config, params


def save_checkpoint(path, config: ModelConfig, params: ParamStore) -> None:
    Path(path).write_bytes(encode_checkpoint(config, params))


def load_checkpoint(path) -> Tuple[ModelConfig, ParamStore]:
    path = Path(path)
    return decode_checkpoint(path.read_bytes(), path.name)
