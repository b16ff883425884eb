"""Checkpoint format round-trips and byte-level determinism."""

import numpy as np
import pytest

from avdialog.numerics import (
    CheckpointError,
    TransformerConfig,
    TransformerParams,
    body_bytes,
    load_model,
    load_tensors,
    save_model,
    save_tensors,
    tensor_bytes,
)

CFG = TransformerConfig(n_layers=1, d_model=16, n_heads=2, d_ff=32,
                        vocab_size=20, max_seq_len=16, dropout=0.0)


def test_tensor_roundtrip(tmp_path):
    arrays = {
        "a": np.arange(6, dtype=np.float32).reshape(2, 3),
        "b": np.array(3.5, dtype=np.float32),
        "c.nested/name": np.zeros((1, 2, 3), dtype=np.float32),
    }
    path = tmp_path / "t.ckpt"
    save_tensors(path, arrays, {"seed": 7})
    got, meta = load_tensors(path)
    assert meta == {"seed": 7}
    assert set(got) == set(arrays)
    for k in arrays:
        assert got[k].shape == arrays[k].shape
        assert np.array_equal(got[k], arrays[k])


def test_model_roundtrip(tmp_path):
    params = TransformerParams.init(CFG, seed=9)
    path = tmp_path / "m.ckpt"
    save_model(path, params, CFG, {"seed": 9})
    loaded, cfg, meta = load_model(path)
    assert cfg.to_dict() == CFG.to_dict()
    assert meta["seed"] == 9
    for name, t in params.named().items():
        assert np.array_equal(t.data, loaded.named()[name].data)


def test_identical_params_identical_bytes(tmp_path):
    params = TransformerParams.init(CFG, seed=1)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_model(p1, params, CFG)
    save_model(p2, params, CFG)
    assert p1.read_bytes() == p2.read_bytes()


def test_body_bytes_ignore_embedding_and_projection(tmp_path):
    params = TransformerParams.init(CFG, seed=2)
    p1 = tmp_path / "a.ckpt"
    save_model(p1, params, CFG)
    ref = body_bytes(p1)
    params.embedding.data += 1.0
    params.projection.data -= 1.0
    p2 = tmp_path / "b.ckpt"
    save_model(p2, params, CFG)
    assert body_bytes(p2) == ref
    assert tensor_bytes(p2, "embedding") != tensor_bytes(p1, "embedding")


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "x.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
    with pytest.raises(CheckpointError):
        load_tensors(path)
