"""Versioned binary snapshot of a learner history.

Layout: magic ``NPSNAP``, a little-endian u16 format version, a u64 header
length, a canonical JSON header and then the raw little-endian arrays in the
order listed in the header.  No timestamps, so identical histories give
identical bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .game import game_from_dict, game_to_dict
from .history import LearnerHistory
from .schedules import Hyperparams

MAGIC = b"NPSNAP"
FORMAT_VERSION = 1
_FIXED = ("states", "a", "b", "rewards", "next_up", "next_low", "vup1", "vlow1",
          "rows_max", "rows_min", "rows_joint")


class SnapshotError(ValueError):
    pass


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()


def _arrays(hist: LearnerHistory) -> list[tuple[str, np.ndarray]]:
    out = [(name, getattr(hist, name)) for name in _FIXED if getattr(hist, name) is not None]
    out += [("final." + key, hist.final[key]) for key in sorted(hist.final)]
    return out


def dumps(hist: LearnerHistory, meta: dict | None = None) -> bytes:
    arrays = _arrays(hist)
    header = {
        "algorithm": hist.algorithm,
        "game": game_to_dict(hist.game),
        "hp": hist.hp.to_dict(),
        "clip_events": hist.clip_events,
        "meta": meta or {},
        "arrays": [[name, np.asarray(x).dtype.str.lstrip("<>|="), list(np.shape(x))]
                   for name, x in arrays],
    }
    blob = canonical_json(header)
    parts = [MAGIC, struct.pack("<HQ", FORMAT_VERSION, len(blob)), blob]
    for name, x in arrays:
        x = np.asarray(x)
        parts.append(np.ascontiguousarray(x, dtype=x.dtype.newbyteorder("<")).tobytes())
    return b"".join(parts)


def loads(data: bytes) -> tuple[LearnerHistory, dict]:
    if not data.startswith(MAGIC):
        raise SnapshotError("not a nashplay snapshot (bad magic)")
    off = len(MAGIC)
    version, hlen = struct.unpack_from("<HQ", data, off)
    if version != FORMAT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    off += struct.calcsize("<HQ")
    header = json.loads(data[off:off + hlen])
    off += hlen
    fields, final = {}, {}
    for name, dtype, shape in header["arrays"]:
        dt = np.dtype("<" + dtype)
        n = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if off + n > len(data):
            raise SnapshotError(f"truncated snapshot while reading {name}")
        arr = np.frombuffer(data, dtype=dt, count=n // dt.itemsize, offset=off).reshape(shape).copy()
        off += n
        if name.startswith("final."):
            final[name[6:]] = arr
        else:
            fields[name] = arr
    if off != len(data):
        raise SnapshotError("trailing bytes after the last array")
    hist = LearnerHistory(
        algorithm=header["algorithm"], game=game_from_dict(header["game"]),
        hp=Hyperparams.from_dict(header["hp"]), final=final,
        clip_events=header["clip_events"], **fields)
    return hist, header["meta"]


def save(hist: LearnerHistory, path: str | Path, meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps(hist, meta))


def load(path: str | Path) -> tuple[LearnerHistory, dict]:
    return loads(Path(path).read_bytes())
