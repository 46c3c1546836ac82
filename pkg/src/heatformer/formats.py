"""Binary dataset container and checkpoint formats.

Both are little-endian and start with a 4-byte magic, a ``u32`` format version
and a dimension header, so a reader in any language can validate a file before
touching the payload.

Dataset (``HTFD``)::

    magic "HTFD" | version u32 | mode u32 (0 base, 1 challenge1, 2 challenge2)
    n_cases u32 | ny u16 | nx u16 | seq_len u32 | record_stride u32
    per case:
        left f32[ny] | right f32[ny] | top f32[nx] | bottom f32[nx]
        n_segments u32, then per segment: side u8 (0 left, 1 right, 2 top, 3 bottom)
                                          start u32 | length u32 | value f32
        theta_init f32 | beta f32 | dtau f32
        frames f32[seq_len * ny * nx]   (C order: time, eta, xi)

Checkpoint (``HTCK``)::

    magic "HTCK" | version u32 | ny u16 | nx u16 | seq_len u32
    config_len u32 | config: UTF-8 ``key=value`` lines, sorted by key
    n_arrays u32, then per array:
        name_len u16 | name UTF-8 | dtype u8 (0 f32, 1 f64) | ndim u8 | dims u32[ndim] | data

Arrays are written in the module's ``state_dict`` order, which is fixed by the
layer construction order of :class:`~heatformer.model.HeatTransformer`.
"""
from __future__ import annotations

import io
import struct
from dataclasses import fields
from pathlib import Path
from typing import Any, BinaryIO, Iterable

import numpy as np

from .errors import FormatError
from .fdsolver import Trajectory
from .geometry import PlateGeometry
from .scenario import MODES, SIDES, BoundarySpec, CaseSpec, Segment

DATASET_MAGIC = b"HTFD"
DATASET_VERSION = 1
CHECKPOINT_MAGIC = b"HTCK"
CHECKPOINT_VERSION = 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class _Reader:
    def __init__(self, fh: BinaryIO, path: str):
        self.fh = fh
        self.path = path

    def read(self, n: int, what: str) -> bytes:
        data = self.fh.read(n)
        if len(data) != n:
            raise FormatError(f"{self.path}: truncated file while reading {what}")
        return data

    def unpack(self, fmt: str, what: str):
        fmt = "<" + fmt
        return struct.unpack(fmt, self.read(struct.calcsize(fmt), what))

    def array(self, dtype: np.dtype, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.read(dtype.itemsize * count, what), dtype=dtype, count=count)


def _f32(a) -> bytes:
    return np.asarray(a, dtype="<f4").tobytes()


# -- dataset -----------------------------------------------------------------------


def write_dataset(path: str | Path, trajectories: list[Trajectory], mode: str) -> None:
    if not trajectories:
        raise FormatError("refusing to write an empty dataset")
    if mode not in MODES:
        raise FormatError(f"unknown dataset mode {mode!r}")
    first = trajectories[0]
    geometry = first.case.geometry
    seq_len, stride = first.seq_len, first.record_stride
    buf = io.BytesIO()
    buf.write(DATASET_MAGIC)
    buf.write(struct.pack("<IIIHHII", DATASET_VERSION, MODES.index(mode), len(trajectories),
                          geometry.ny, geometry.nx, seq_len, stride))
    for k, traj in enumerate(trajectories):
        case = traj.case
        if case.geometry != geometry or traj.seq_len != seq_len or traj.record_stride != stride:
            raise FormatError(f"trajectory {k} does not share the dataset grid/seq_len/stride")
        b = case.boundary
        for side in SIDES:
            buf.write(_f32(b.side(side)))
        buf.write(struct.pack("<I", len(b.segments)))
        for seg in b.segments:
            buf.write(struct.pack("<BIIf", SIDES.index(seg.side), seg.start, seg.length, seg.value))
        buf.write(struct.pack("<fff", case.theta_init, case.beta, case.dtau))
        buf.write(_f32(traj.frames))
    Path(path).write_bytes(buf.getvalue())


def read_dataset(path: str | Path) -> tuple[list[Trajectory], str]:
    """Load a dataset container; returns ``(trajectories, mode)``.

    Values come back as the stored single-precision numbers widened to float64.
    """
    path = str(path)
    with open(path, "rb") as fh:
        r = _Reader(fh, path)
        magic = r.read(4, "magic")
        if magic != DATASET_MAGIC:
            raise FormatError(f"{path}: not a dataset file (magic {magic!r})")
        (version,) = r.unpack("I", "version")
        if version != DATASET_VERSION:
            raise FormatError(f"{path}: dataset version {version} unsupported (expected {DATASET_VERSION})")
        mode_code, n_cases, ny, nx, seq_len, stride = r.unpack("IIHHII", "header")
        if mode_code >= len(MODES):
            raise FormatError(f"{path}: unknown mode tag {mode_code}")
        try:
            geometry = PlateGeometry(nx=nx, ny=ny)
        except ValueError as exc:
            raise FormatError(f"{path}: bad grid header: {exc}") from exc
        if seq_len < 1 or stride < 1:
            raise FormatError(f"{path}: bad header seq_len={seq_len} record_stride={stride}")
        f4 = np.dtype("<f4")
        out = []
        for k in range(n_cases):
            sides = {}
            for side in SIDES:
                n = ny if side in ("left", "right") else nx
                arr = r.array(f4, n, f"case {k} {side} boundary").astype(np.float64)
                arr.setflags(write=False)
                sides[side] = arr
            (n_seg,) = r.unpack("I", f"case {k} segment count")
            segments = []
            for _ in range(n_seg):
                side_code, start, length, value = r.unpack("BIIf", f"case {k} segment")
                if side_code >= len(SIDES):
                    raise FormatError(f"{path}: case {k} has unknown segment side {side_code}")
                segments.append(Segment(SIDES[side_code], start, length, float(value)))
            theta_init, beta, dtau = r.unpack("fff", f"case {k} scalars")
            frames = r.array(f4, seq_len * ny * nx, f"case {k} frames").astype(np.float64)
            case = CaseSpec(
                geometry=geometry,
                boundary=BoundarySpec(segments=tuple(segments), **sides),
                theta_init=float(theta_init),
                beta=float(beta),
                dtau=float(dtau),
            )
            frames = frames.reshape(seq_len, ny, nx)
            steadiness = float(np.max(np.abs(frames[-1] - frames[-2]))) if seq_len > 1 else float("nan")
            out.append(Trajectory(frames=frames, case=case, record_stride=stride, steadiness=steadiness))
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after {n_cases} cases")
    return out, MODES[mode_code]


# -- key=value blocks ----------------------------------------------------------------


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def dump_kv(items: dict[str, Any]) -> str:
    return "".join(f"{k}={format_value(items[k])}\n" for k in sorted(items))


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise FormatError(f"{source}:{lineno}: empty key")
        if key in out:
            raise FormatError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


# -- checkpoint --------------------------------------------------------------------


def write_checkpoint(path: str | Path, arrays: Iterable[tuple[str, np.ndarray]], config: dict[str, Any],
                     ny: int, nx: int, seq_len: int) -> None:
    text = dump_kv(config).encode("utf-8")
    arrays = list(arrays)
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<IHHI", CHECKPOINT_VERSION, ny, nx, seq_len))
    buf.write(struct.pack("<I", len(text)))
    buf.write(text)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays:
        arr = np.asarray(arr)
        code = _DTYPE_CODES.get(arr.dtype)
        if code is None:
            raise FormatError(f"array {name!r}: unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<BB", code, arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, str], tuple[int, int, int]]:
    """Returns ``(arrays, config, (ny, nx, seq_len))`` with ``config`` values still as strings."""
    path = str(path)
    with open(path, "rb") as fh:
        r = _Reader(fh, path)
        magic = r.read(4, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: not a checkpoint file (magic {magic!r})")
        (version,) = r.unpack("I", "version")
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})")
        ny, nx, seq_len = r.unpack("HHI", "dimension header")
        (text_len,) = r.unpack("I", "config length")
        try:
            text = r.read(text_len, "config block").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: config block is not UTF-8") from exc
        config = parse_kv(text, f"{path}[config]")
        (n_arrays,) = r.unpack("I", "array count")
        arrays: dict[str, np.ndarray] = {}
        for _ in range(n_arrays):
            (name_len,) = r.unpack("H", "array name length")
            name = r.read(name_len, "array name").decode("utf-8")
            code, ndim = r.unpack("BB", f"array {name!r} header")
            if code not in _DTYPES:
                raise FormatError(f"{path}: array {name!r} has unknown dtype code {code}")
            shape = r.unpack(f"{ndim}I", f"array {name!r} shape") if ndim else ()
            count = int(np.prod(shape)) if shape else 1
            arrays[name] = r.array(_DTYPES[code], count, f"array {name!r} data").reshape(shape).copy()
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after {n_arrays} arrays")
    return arrays, config, (ny, nx, seq_len)


def dataclass_to_kv(obj, prefix: str = "") -> dict[str, Any]:
    return {prefix + f.name: getattr(obj, f.name) for f in fields(obj)}
