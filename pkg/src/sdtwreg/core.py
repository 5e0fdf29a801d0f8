"""Sequence containers, seeded RNG streams and the on-disk sequence formats.

Two file formats are supported:

``eseq``
    Binary.  Magic ``b"ESEQ"``, then ``version``, ``T`` and ``D`` as unsigned
    32-bit little-endian integers, then ``T * D`` IEEE-754 float32 values
    (little-endian, row-major).  Frames are held as float64 in memory, so a
    write rounds to float32; any float32-representable matrix round-trips
    bit-exactly.

``csv``
    One frame per line, comma separated, no header, ``\\n`` line endings.
    Values use Python's shortest round-trip ``repr`` so CSV round-trips
    float64 bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

ESEQ_MAGIC = b"ESEQ"
ESEQ_VERSION = 1
_ESEQ_HEADER = struct.Struct("<4sIII")

PathLike = Union[str, Path]


class SequenceFormatError(ValueError):
    """A sequence file or matrix violates the container invariants."""


class ZeroRowError(ValueError):
    pass


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Return a PCG64 generator for ``seed`` split along ``keys``.

    Streams are derived with :class:`numpy.random.SeedSequence` using
    ``keys`` as the spawn key, so ``make_rng(s, 1, i)`` gives the same
    stream for item ``i`` whether items are generated serially or in
    parallel.
    """
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *keys: int) -> int:
    """A child 64-bit seed, deterministic in ``(seed, keys)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _check_frames(frames: np.ndarray) -> None:
    if frames.ndim != 2:
        raise SequenceFormatError(f"frames must be a T x D matrix, got shape {frames.shape}")
    if frames.shape[0] < 1 or frames.shape[1] < 1:
        raise SequenceFormatError(f"need T >= 1 and D >= 1, got shape {frames.shape}")
    if not np.all(np.isfinite(frames)):
        r, c = np.argwhere(~np.isfinite(frames))[0]
        raise SequenceFormatError(f"non-finite value at frame {r}, dim {c}")


@dataclass(frozen=True)
class EmbeddingSequence:
    """A length-T sequence of D-dimensional frames (float64, read-only).

    ``normalized=True`` asserts every row has unit Euclidean norm.
    """

    frames: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = np.array(self.frames, dtype=np.float64, copy=True, order="C")
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        _check_frames(arr)
        if self.normalized:
            norms = np.linalg.norm(arr, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise SequenceFormatError("sequence tagged normalized has non-unit rows")
        arr.setflags(write=False)
        object.__setattr__(self, "frames", arr)

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def D(self) -> int:
        return self.frames.shape[1]

    def __len__(self) -> int:
        return self.T

    def __eq__(self, other):
        if not isinstance(other, EmbeddingSequence):
            return NotImplemented
        return self.frames.shape == other.frames.shape and bool(
            np.array_equal(self.frames, other.frames)
        )


def as_frames(seq) -> np.ndarray:
    """The float64 frame matrix of an EmbeddingSequence or array-like."""
    if isinstance(seq, EmbeddingSequence):
        return seq.frames
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    _check_frames(arr)
    return np.ascontiguousarray(arr)


def l2_normalize_rows(seq, eps: float = 1e-12) -> EmbeddingSequence:
    x = as_frames(seq)
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    bad = np.flatnonzero(norms < eps)
    if bad.size:
        raise ZeroRowError(f"row {bad[0]} has norm {norms[bad[0]]:.3g} < {eps}")
    return EmbeddingSequence(x / norms[:, None], normalized=True)


def self_distance_matrix(seq) -> np.ndarray:
    """Pairwise squared Euclidean distances between frames of one sequence.

    Computed from explicit differences so the diagonal is exactly zero and
    the matrix is exactly symmetric.
    """
    x = as_frames(seq)
    diff = x[:, None, :] - x[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def cost_matrix(a, b) -> np.ndarray:
    """Squared Euclidean frame costs between two sequences."""
    x, y = as_frames(a), as_frames(b)
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


# --------------------------------------------------------------------------
# file formats


def _detect_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("eseq", "csv"):
            raise ValueError(f"unknown format {fmt!r}")
        return fmt
    return "csv" if path.suffix.lower() == ".csv" else "eseq"


def read_sequence(path: PathLike, format: str | None = None) -> EmbeddingSequence:
    path = Path(path)
    fmt = _detect_format(path, format)
    if fmt == "eseq":
        return _read_eseq(path.read_bytes())
    return _read_csv(path.read_text())


def write_sequence(seq, path: PathLike, format: str | None = None) -> None:
    path = Path(path)
    fmt = _detect_format(path, format)
    x = as_frames(seq)
    data = _encode_eseq(x) if fmt == "eseq" else _encode_csv(x).encode("ascii")
    with open(path, "wb") as fh:
        fh.write(data)


def _encode_eseq(x: np.ndarray) -> bytes:
    t, d = x.shape
    body = np.ascontiguousarray(x, dtype="<f4").tobytes()
    return _ESEQ_HEADER.pack(ESEQ_MAGIC, ESEQ_VERSION, t, d) + body


def _read_eseq(data: bytes) -> EmbeddingSequence:
    if len(data) < _ESEQ_HEADER.size:
        raise SequenceFormatError(f"malformed header: file has {len(data)} bytes, header needs 16 (byte 0)")
    magic, version, t, d = _ESEQ_HEADER.unpack_from(data)
    if magic != ESEQ_MAGIC:
        raise SequenceFormatError(f"malformed header: bad magic {magic!r} at byte 0")
    if version != ESEQ_VERSION:
        raise SequenceFormatError(f"malformed header: unsupported version {version} at byte 4")
    if t < 1 or d < 1:
        raise SequenceFormatError(f"malformed header: T={t}, D={d} at byte 8")
    expected = _ESEQ_HEADER.size + 4 * t * d
    if len(data) != expected:
        raise SequenceFormatError(
            f"dimension mismatch: header says {t}x{d} ({expected} bytes) but file has "
            f"{len(data)} bytes (byte {min(len(data), expected)})"
        )
    vals = np.frombuffer(data, dtype="<f4", offset=_ESEQ_HEADER.size).reshape(t, d)
    bad = np.argwhere(~np.isfinite(vals))
    if bad.size:
        r, c = bad[0]
        off = _ESEQ_HEADER.size + 4 * (r * d + c)
        raise SequenceFormatError(f"non-finite value at frame {r}, dim {c} (byte {off})")
    return EmbeddingSequence(vals.astype(np.float64))


def _encode_csv(x: np.ndarray) -> str:
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in x)


def _read_csv(text: str) -> EmbeddingSequence:
    rows = []
    width = None
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            row = [float(tok) for tok in line.split(",")]
        except ValueError as exc:
            raise SequenceFormatError(f"unparseable value on line {lineno}: {exc}") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise SequenceFormatError(
                f"dimension mismatch on line {lineno}: {len(row)} values, expected {width}"
            )
        if not all(np.isfinite(row)):
            raise SequenceFormatError(f"non-finite value on line {lineno}")
        rows.append(row)
    if not rows:
        raise SequenceFormatError("malformed file: no frames (line 1)")
    return EmbeddingSequence(np.array(rows, dtype=np.float64))
