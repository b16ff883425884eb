"""Forward-pass contracts: zero case, causality, oracle equivalence,
masked NLL, and the incremental inference session."""

import math

import numpy as np
import pytest

from avdialog.numerics import (
    DegenerateMaskError,
    InferenceSession,
    SequenceLengthError,
    Tensor,
    TransformerConfig,
    TransformerParams,
    VocabularyError,
    logits_no_grad,
    masked_nll,
    transformer_forward,
)

from oracles import hand_softmax_nll, reference_transformer_logits

SMALL = TransformerConfig(n_layers=2, d_model=32, n_heads=4, d_ff=64,
                          vocab_size=50, max_seq_len=64, dropout=0.0)


def test_zero_params_give_exactly_zero_logits():
    params = TransformerParams.zeros_init(SMALL)
    logits = logits_no_grad([1, 4, 9, 0], params, SMALL)
    assert logits.shape == (4, SMALL.vocab_size)
    assert np.all(logits == 0.0)


def test_uniform_softmax_from_zero_logits():
    params = TransformerParams.zeros_init(SMALL)
    logits = logits_no_grad([3, 3, 3], params, SMALL)
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    p = e / e.sum(axis=-1, keepdims=True)
    assert np.allclose(p, 1.0 / SMALL.vocab_size)


def test_causality_suffix_permutation_is_bit_exact():
    params = TransformerParams.init(SMALL, seed=11)
    base = [5, 7, 2, 9, 14, 3, 1, 8]
    ref = logits_no_grad(base, params, SMALL)
    for i in (1, 3, 5):
        permuted = base[: i + 1] + base[i + 1 :][::-1]
        alt = logits_no_grad(permuted, params, SMALL)
        assert np.array_equal(ref[: i + 1], alt[: i + 1])


def test_forward_matches_independent_reference():
    params = TransformerParams.init(SMALL, seed=7)
    ids = [5, 1, 44, 2, 2, 30, 7, 19]
    got = logits_no_grad(ids, params, SMALL)
    named = {n: t.data for n, t in params.named().items()}
    want = reference_transformer_logits(ids, named, SMALL.to_dict())
    assert np.allclose(got, want, rtol=1e-5, atol=1e-5)


def test_softmax_rows_sum_to_one():
    params = TransformerParams.init(SMALL, seed=3)
    logits = logits_no_grad([4, 4, 17, 2], params, SMALL)
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    p = e / e.sum(axis=-1, keepdims=True)
    assert np.allclose(p.sum(axis=-1), 1.0, atol=1e-5)


def test_forward_output_is_finite():
    params = TransformerParams.init(SMALL, seed=5)
    logits = logits_no_grad(list(range(20)), params, SMALL)
    assert np.all(np.isfinite(logits))


def test_token_out_of_range_rejected():
    params = TransformerParams.init(SMALL, seed=0)
    with pytest.raises(VocabularyError):
        transformer_forward([0, SMALL.vocab_size], params, SMALL)


def test_sequence_too_long_rejected():
    params = TransformerParams.init(SMALL, seed=0)
    with pytest.raises(SequenceLengthError):
        transformer_forward([0] * (SMALL.max_seq_len + 1), params, SMALL)


def test_param_partition_covers_everything_once():
    params = TransformerParams.init(SMALL, seed=0)
    named = params.named()
    groups = {"embedding": [], "body": [], "projection": []}
    for name in named:
        groups[params.group_of(name)].append(name)
    assert groups["embedding"] == ["embedding"]
    assert groups["projection"] == ["projection"]
    assert len(groups["body"]) == len(named) - 2
    assert sum(len(v) for v in groups.values()) == len(named)


# -- masked_nll ---------------------------------------------------------------


def test_masked_nll_uniform_logits():
    logits = Tensor.const(np.zeros((5, 4), dtype=np.float32))
    loss = masked_nll(logits, [0, 1, 2, 3, 0], [True] * 5)
    assert math.isclose(loss.item(), math.log(4.0), rel_tol=1e-6)


def test_masked_nll_near_deterministic():
    n, v = 4, 6
    logits = np.zeros((n, v), dtype=np.float32)
    targets = [1, 5, 0, 3]
    for i, t in enumerate(targets):
        logits[i, t] = 1000.0
    loss = masked_nll(Tensor.const(logits), targets, [True] * n)
    assert loss.item() < 1e-6


def test_masked_nll_matches_hand_computation():
    logits = np.array(
        [[0.5, -1.0, 2.0],
         [3.0, 0.0, -2.0],
         [0.1, 0.2, 0.3]], dtype=np.float32)
    targets = [2, 0, 1]
    mask = [True, False, True]
    want = (hand_softmax_nll(logits[0], 2) + hand_softmax_nll(logits[2], 1)) / 2.0
    got = masked_nll(Tensor.const(logits), targets, mask).item()
    assert math.isclose(got, want, rel_tol=1e-5)


def test_masked_nll_rejects_all_false_mask():
    logits = Tensor.const(np.zeros((3, 4), dtype=np.float32))
    with pytest.raises(DegenerateMaskError):
        masked_nll(logits, [0, 1, 2], [False, False, False])


def test_masked_nll_is_nonnegative():
    rng = np.random.default_rng(0)
    logits = Tensor.const(rng.normal(size=(6, 9)).astype(np.float32))
    loss = masked_nll(logits, rng.integers(0, 9, size=6), [True] * 6)
    assert loss.item() >= 0.0


# -- inference session ----------------------------------------------------------


def test_inference_session_matches_graph_forward():
    params = TransformerParams.init(SMALL, seed=13)
    ids = [3, 9, 9, 21, 0, 7]
    full = logits_no_grad(ids, params, SMALL)
    sess = InferenceSession(params, SMALL)
    rows = [sess.append(t) for t in ids]
    inc = np.stack(rows)
    assert np.allclose(full, inc, rtol=1e-4, atol=1e-4)
    assert int(np.argmax(full[-1])) == int(np.argmax(inc[-1]))


def test_inference_session_rejects_overlong():
    cfg = TransformerConfig(n_layers=1, d_model=8, n_heads=2, d_ff=16,
                            vocab_size=10, max_seq_len=3, dropout=0.0)
    sess = InferenceSession(TransformerParams.init(cfg, seed=0), cfg)
    for t in (0, 1, 2):
        sess.append(t)
    with pytest.raises(SequenceLengthError):
        sess.append(0)


def test_determinism_same_seed_same_logits():
    a = TransformerParams.init(SMALL, seed=42)
    b = TransformerParams.init(SMALL, seed=42)
    la = logits_no_grad([1, 2, 3], a, SMALL)
    lb = logits_no_grad([1, 2, 3], b, SMALL)
    assert np.array_equal(la, lb)
