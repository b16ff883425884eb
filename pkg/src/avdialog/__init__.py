"""Audio-visual spoken dialogue pipeline: discrete AV speech tokens, a
staged joint speech-text dialogue LM, length-restored unit generation,
and semantic / noise-robustness evaluation."""

__version__ = "0.1.0"
