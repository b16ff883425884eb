"""Feature streams and their binary file format.

Feature file layout (little-endian): magic b"AVF1", u32 frame count T,
u32 feature dim D, u32 rate_hz, u8 modality code (0=audio, 1=visual,
2=fused), then T*D raw f32 values in row-major order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FEATURE_MAGIC = b"AVF1"

MODALITIES = ("audio", "visual", "fused")
_MODALITY_CODE = {m: i for i, m in enumerate(MODALITIES)}


class StreamError(ValueError):
    pass


@dataclass
class FeatureStream:
    """T x D float32 frame matrix at a fixed frame rate."""

    frames: np.ndarray
    rate_hz: int = 25
    modality: str = "fused"

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2:
            raise StreamError("frames must be a T x D matrix")
        if self.modality not in _MODALITY_CODE:
            raise StreamError(f"unknown modality {self.modality!r}")
        if self.frames.size and not np.all(np.isfinite(self.frames)):
            raise StreamError("non-finite values in feature stream")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


def fuse(audio: FeatureStream, visual: FeatureStream) -> FeatureStream:
    """Frame-wise concatenation of audio and visual features."""
    if audio.n_frames != visual.n_frames:
        raise StreamError("audio and visual streams must have equal frame counts")
    if audio.rate_hz != visual.rate_hz:
        raise StreamError("audio and visual streams must share a frame rate")
    return FeatureStream(
        frames=np.concatenate([audio.frames, visual.frames], axis=1),
        rate_hz=audio.rate_hz,
        modality="fused",
    )


def save_stream(path, stream: FeatureStream) -> None:
    with open(Path(path), "wb") as f:
        f.write(FEATURE_MAGIC)
        t, d = stream.frames.shape
        f.write(struct.pack("<IIIB", t, d, stream.rate_hz, _MODALITY_CODE[stream.modality]))
        f.write(np.asarray(stream.frames, dtype="<f4").tobytes())


def load_stream(path) -> FeatureStream:
    data = Path(path).read_bytes()
    if data[:4] != FEATURE_MAGIC:
        raise StreamError(f"{path}: bad magic, not a feature file")
    t, d, rate, code = struct.unpack_from("<IIIB", data, 4)
    if code >= len(MODALITIES):
        raise StreamError(f"{path}: unknown modality code {code}")
    off = 4 + struct.calcsize("<IIIB")
    frames = np.frombuffer(data, dtype="<f4", count=t * d, offset=off).reshape(t, d)
    return FeatureStream(frames=frames.copy(), rate_hz=rate, modality=MODALITIES[code])
