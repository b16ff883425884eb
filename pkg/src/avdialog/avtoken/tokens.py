"""Quantization to discrete AV speech tokens, run-length dedup/restore,
and the token file format.

Token file layout (little-endian): magic b"AVT1", u32 length, then
length u16 token ids.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codebook import Codebook, _sq_dists
from .streams import FeatureStream

TOKEN_MAGIC = b"AVT1"

TokenSequence = list[int]


class TokenError(ValueError):
    pass


@dataclass
class DedupedTokens:
    """Run-length view of a token sequence: adjacent-distinct units plus
    the run length of each."""

    units: TokenSequence
    durations: list[int]

    def validate(self) -> "DedupedTokens":
        if len(self.units) != len(self.durations):
            raise TokenError("units and durations must have equal length")
        for d in self.durations:
            if d < 1:
                raise TokenError(f"duration {d} < 1")
        for a, b in zip(self.units, self.units[1:]):
            if a == b:
                raise TokenError("adjacent units must differ")
        return self

    @property
    def total_frames(self) -> int:
        return sum(self.durations)


def quantize(stream: FeatureStream, codebook: Codebook, chunk: int = 4096) -> TokenSequence:
    """Nearest centroid per frame (Euclidean, float64 accumulation);
    exact ties go to the lowest centroid index."""
    if stream.dim != codebook.feature_dim:
        raise TokenError(
            f"stream dim {stream.dim} != codebook dim {codebook.feature_dim}"
        )
    frames = stream.frames.astype(np.float64)
    centroids = codebook.centroids.astype(np.float64)
    ids: list[int] = []
    for start in range(0, frames.shape[0], chunk):
        d2 = _sq_dists(frames[start:start + chunk], centroids)
        ids.extend(int(i) for i in d2.argmin(axis=1))
    return ids


def dedup(tokens: TokenSequence) -> DedupedTokens:
    """Run-length encode; empty input gives empty output."""
    units: list[int] = []
    durations: list[int] = []
    for t in tokens:
        if units and units[-1] == t:
            durations[-1] += 1
        else:
            units.append(t)
            durations.append(1)
    return DedupedTokens(units=units, durations=durations)


def restore(deduped: DedupedTokens) -> TokenSequence:
    """Exact inverse of dedup; rejects invalid run lengths."""
    deduped.validate()
    out: list[int] = []
    for unit, dur in zip(deduped.units, deduped.durations):
        out.extend([unit] * dur)
    return out


def save_tokens(path, tokens: TokenSequence) -> None:
    for t in tokens:
        if not (0 <= t < 1 << 16):
            raise TokenError(f"token id {t} does not fit in u16")
    with open(Path(path), "wb") as f:
        f.write(TOKEN_MAGIC)
        f.write(struct.pack("<I", len(tokens)))
        f.write(np.asarray(tokens, dtype="<u2").tobytes())


def load_tokens(path) -> TokenSequence:
    data = Path(path).read_bytes()
    if data[:4] != TOKEN_MAGIC:
        raise TokenError(f"{path}: bad magic, not a token file")
    (n,) = struct.unpack_from("<I", data, 4)
    arr = np.frombuffer(data, dtype="<u2", count=n, offset=8)
    return [int(x) for x in arr]
