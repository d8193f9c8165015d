import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedrisk.autograd import Tensor, parameter
from fedrisk.freq_attention import (FreqAttentionConfig, FrequencyCrossAttention,
                                    FrequencyEnhancedBlock, frequency_attention,
                                    frequency_enhanced_block, select_modes)
from fedrisk.seeding import make_rng
from helpers import grad_error, numeric_grad


def _sinusoid(n, k, phase=0.0):
    return np.cos(2 * np.pi * k * np.arange(n) / n + phase)


def test_identity_attention_full_modes_returns_values():
    v = make_rng(0).standard_normal((1, 16, 3))
    q = make_rng(1).standard_normal((1, 16, 2))
    out = frequency_attention(Tensor(q), Tensor(q), Tensor(v), select_modes(16, 16),
                              identity_attention=True)
    np.testing.assert_allclose(out.data, v, atol=1e-9)


@pytest.mark.parametrize("modes", [1, 3, 9])
def test_constant_values_pass_through(modes):
    rng = make_rng(2)
    v = np.full((2, 16, 4), 2.5)
    q = rng.standard_normal((2, 16, 4))
    k = rng.standard_normal((2, 16, 4))
    out = frequency_attention(Tensor(q), Tensor(k), Tensor(v), select_modes(16, modes))
    np.testing.assert_allclose(out.data, v, atol=1e-9)


def _attention_by_hand(q, k, v, keep):
    """Direct transcription: softmax scores, full DFT, zero dropped bins, inverse DFT, product."""
    n = len(v)
    scores = [[q[i] * k[j] / math.sqrt(1) for j in range(n)] for i in range(n)]
    weights = []
    for row in scores:
        top = max(row)
        e = [math.exp(s - top) for s in row]
        weights.append([x / sum(e) for x in e])
    spectrum = [sum(v[t] * complex(math.cos(-2 * math.pi * f * t / n), math.sin(-2 * math.pi * f * t / n))
                    for t in range(n)) for f in range(n)]
    kept = [spectrum[f] if (f in keep or (n - f) % n in keep) else 0j for f in range(n)]
    filtered = [sum(kept[f] * complex(math.cos(2 * math.pi * f * t / n), math.sin(2 * math.pi * f * t / n))
                    for f in range(n)).real / n for t in range(n)]
    return [sum(weights[i][j] * filtered[j] for j in range(n)) for i in range(n)]


def test_tiny_case_matches_hand_oracle():
    q = [0.3, -1.2, 0.8, 0.1]
    k = [1.0, 0.5, -0.4, 2.0]
    v = [1.0, 3.0, -2.0, 0.5]
    modes = np.array([0, 1])
    out = frequency_attention(Tensor(np.array(q)[:, None]), Tensor(np.array(k)[:, None]),
                              Tensor(np.array(v)[:, None]), modes)
    np.testing.assert_allclose(out.data[:, 0], _attention_by_hand(q, k, v, {0, 1}), atol=1e-12)


def test_attention_shape_checks():
    x = Tensor(np.zeros((8, 2)))
    with pytest.raises(ValueError):
        frequency_attention(x, Tensor(np.zeros((8, 3))), x, select_modes(8, 2))
    with pytest.raises(ValueError):
        frequency_attention(x, x, Tensor(np.zeros((6, 2))), select_modes(8, 2))
    with pytest.raises(ValueError):
        select_modes(8, 9)


def test_identity_filter_full_modes():
    x = make_rng(3).standard_normal((2, 32, 5))
    block = FrequencyEnhancedBlock(32, 5, 32, make_rng(0), init="identity")
    np.testing.assert_allclose(block(Tensor(x)).data, x, atol=1e-9)


def test_non_retained_sinusoid_is_removed():
    x = _sinusoid(64, 20, 0.4)[None, :, None]
    block = FrequencyEnhancedBlock(64, 1, 8, make_rng(0), init="identity")
    assert np.max(np.abs(block(Tensor(x)).data)) < 1e-9


def test_two_sinusoids_keep_one():
    n = 64
    low, high = _sinusoid(n, 3, 0.2), 0.7 * _sinusoid(n, 11, 1.1)
    x = (low + high)[None, :, None]
    out = frequency_enhanced_block(Tensor(x), Tensor(np.ones((1, 1))), Tensor(np.zeros((1, 1))),
                                   np.array([3]))
    np.testing.assert_allclose(out.data[0, :, 0], low, atol=1e-9)


def test_filter_weight_shape_checked():
    with pytest.raises(ValueError):
        frequency_enhanced_block(Tensor(np.zeros((1, 8, 2))), Tensor(np.ones((3, 1))),
                                 Tensor(np.zeros((3, 1))), np.arange(3))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 64), st.integers(1, 40), st.sampled_from(["lowest", "random"]), st.integers(0, 5))
def test_output_shape_equals_input(n, m, selection, seed):
    m = min(m, n)
    x = make_rng(seed).standard_normal((1, n, 3))
    block = FrequencyEnhancedBlock(n, 3, m, make_rng(seed), selection=selection, seed=seed)
    assert block(Tensor(x)).shape == x.shape
    q = Tensor(make_rng(seed, 1).standard_normal((n, 2)))
    assert frequency_attention(q, q, Tensor(x[0]), select_modes(n, m, selection, seed)).shape == x[0].shape


def test_random_selection_keeps_dc_and_is_seeded():
    a = select_modes(256, 16, "random", seed=3)
    assert a[0] == 0 and len(a) == 16 and len(set(a)) == 16
    np.testing.assert_array_equal(a, select_modes(256, 16, "random", seed=3))


def test_config_requires_divisible_width():
    with pytest.raises(ValueError):
        FreqAttentionConfig(d_model=10, n_heads=3, modes=4)
    assert FreqAttentionConfig(d_model=12, n_heads=3, modes=4).d_k == 4


def test_gradients_match_finite_differences():
    rng = make_rng(4)
    x = parameter(rng.standard_normal((1, 16, 4)))
    block = FrequencyEnhancedBlock(16, 4, 5, rng)
    cross = FrequencyCrossAttention(FreqAttentionConfig(4, 2, 5), 16, 4, rng)
    query = parameter(rng.standard_normal((1, 10, 4)))
    weights = Tensor(rng.standard_normal((1, 10, 4)))
    params = [x, query, block.w_re, block.w_im] + cross.parameters()

    def loss():
        return (cross(query, block(x)) * weights).sum()

    for p in params:
        p.zero_grad()
    loss().backward()
    for p in params:
        assert grad_error(p.grad, numeric_grad(lambda: loss().item(), p.data)) < 1e-4
