"""Per-frame token streams, instruction encodings, sub-clip partitioning,
and the RWFS on-disk stream format.

Streams stand in for a real visual encoder: values are drawn from a
counter-based generator keyed by (seed, frame index), so a stream's prefix
never depends on its total length. Instruction rows are hash-seeded
unit-norm vectors, one per whitespace-delimited word.
"""

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (BadMagicError, BadVersionError, NonFiniteDataError,
                     TruncatedPayloadError)

RWFS_MAGIC = b"RWFS"
RWFS_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


@dataclass
class FrameTokenStream:
    T: int
    P: int
    d: int
    frames: list  # T matrices of shape (P, d), float64
    fps: float = 1.0

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("stream must contain at least one frame")
        if len(self.frames) != self.T:
            raise ValueError("frame list length must equal T")
        for f in self.frames:
            if f.shape != (self.P, self.d):
                raise ValueError("every frame must be P x d")

    def prefix(self, t: int) -> "FrameTokenStream":
        """The first t frames as a stream of their own."""
        if not (1 <= t <= self.T):
            raise ValueError("prefix length out of range")
        return FrameTokenStream(t, self.P, self.d, self.frames[:t], self.fps)


@dataclass
class SubClip:
    index: int
    start: int
    end: int  # exclusive
    frames: list = field(default_factory=list)

    def __len__(self):
        return self.end - self.start


@dataclass
class InstructionEncoding:
    tokens: np.ndarray  # (n_text, d)
    mean: np.ndarray  # (d,)


def split_into_subclips(T: int, F: int):
    """Tile [0, T) into ceil(T/F) ordered ranges; only the last may be short."""
    if T < 1 or F < 1:
        raise ValueError("T and F must be at least 1")
    return [(start, min(start + F, T)) for start in range(0, T, F)]


def iter_subclips(stream: FrameTokenStream, F: int):
    return [SubClip(i, a, b, stream.frames[a:b])
            for i, (a, b) in enumerate(split_into_subclips(stream.T, F))]


def _frame_rng(seed: int, t: int) -> np.random.Generator:
    key = np.array([seed % 2**64, t], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def synth_stream(seed: int, T: int, P: int, d: int,
                 fps: float = 1.0) -> FrameTokenStream:
    """Deterministic synthetic stream; frame t is a pure function of
    (seed, t), values clipped to [-3, 3]."""
    if T < 1 or P < 1 or d < 1:
        raise ValueError("T, P and d must be at least 1")
    frames = [np.clip(_frame_rng(seed, t).standard_normal((P, d)), -3.0, 3.0)
              for t in range(T)]
    return FrameTokenStream(T, P, d, frames, fps)


def _word_vector(word: str, d: int) -> np.ndarray:
    digest = hashlib.sha256(word.encode("utf-8")).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    v = np.random.Generator(np.random.Philox(key=key)).standard_normal(d)
    return v / np.linalg.norm(v)


def encode_instruction(text: str, d: int) -> InstructionEncoding:
    """One unit-norm row per whitespace-delimited word; mean row attached."""
    words = text.split()
    if not words:
        raise ValueError("instruction text is empty")
    tokens = np.stack([_word_vector(w, d) for w in words])
    return InstructionEncoding(tokens=tokens, mean=tokens.mean(axis=0))


def empty_instruction(d: int) -> InstructionEncoding:
    """Zero-row encoding: conditioning disabled, mean defined as zeros."""
    return InstructionEncoding(tokens=np.zeros((0, d)), mean=np.zeros(d))


def save_stream(stream: FrameTokenStream, path) -> None:
    payload = np.stack(stream.frames).astype(np.float32)
    if not np.all(np.isfinite(payload)):
        raise NonFiniteDataError("stream contains non-finite values")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(RWFS_MAGIC, RWFS_VERSION,
                              stream.T, stream.P, stream.d))
        fh.write(payload.tobytes())


def load_stream(path) -> FrameTokenStream:
    with open(path, "rb") as fh:
        data = fh.read()
    T, P, d, values = read_rwfs_bytes(data)
    frames = [values[t] for t in range(T)]
    return FrameTokenStream(T, P, d, frames)


def read_rwfs_bytes(data: bytes):
    """Validate and decode one RWFS record; returns (T, P, d, float64 array)."""
    if len(data) < _HEADER.size:
        raise TruncatedPayloadError("RWFS header truncated")
    magic, version, T, P, d = _HEADER.unpack_from(data)
    if magic != RWFS_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {RWFS_MAGIC!r}")
    if version != RWFS_VERSION:
        raise BadVersionError(f"unsupported RWFS version {version}")
    expected = T * P * d * 4
    body = data[_HEADER.size:]
    if len(body) < expected:
        raise TruncatedPayloadError(
            f"payload holds {len(body)} bytes, header declares {expected}")
    if len(body) > expected:
        raise TruncatedPayloadError(
            f"trailing bytes: payload {len(body)}, expected {expected}")
    values = np.frombuffer(body, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteDataError("RWFS payload contains non-finite values")
    return T, P, d, values.reshape(T, P, d)


def rwfs_record_bytes(frames: np.ndarray) -> bytes:
    """Encode a (T, P, d) float array as one RWFS record."""
    payload = np.ascontiguousarray(frames, dtype=np.float32)
    T, P, d = payload.shape
    return _HEADER.pack(RWFS_MAGIC, RWFS_VERSION, T, P, d) + payload.tobytes()
