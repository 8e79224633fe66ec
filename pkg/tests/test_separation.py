import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mdnmf.core import ConfigurationError, DimensionError, encode_objective
from mdnmf.separation import SeparationConfig, separate, wiener_filter
from oracles import wiener_reference


def mats(shape, lo=0.0, hi=1.0):
    return arrays(np.float64, shape, elements=st.floats(lo, hi, width=64))


def test_orthogonal_atoms_split_exactly():
    W1, W2 = np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])
    v = np.array([[0.6], [0.4]])
    res = separate([W1, W2], v, SeparationConfig(lam=1e-12, eps=1e-300, max_iters=5000, rel_tol=1e-15))
    np.testing.assert_allclose(res.parts[0][:, 0], [0.6, 0.0], atol=1e-9)
    np.testing.assert_allclose(res.parts[1][:, 0], [0.0, 0.4], atol=1e-9)


def test_wiener_examples():
    v = np.array([[1.0]])
    u1, u2 = wiener_filter(v, [np.array([[0.3]]), np.array([[0.1]])], eps=1e-300)
    assert u1[0, 0] == pytest.approx(0.75)
    assert u2[0, 0] == pytest.approx(0.25)
    same = np.array([[0.2, 0.5]])
    a, b = wiener_filter(np.array([[0.8, 1.0]]), [same, same], eps=1e-300)
    np.testing.assert_allclose(a, [[0.4, 0.5]])
    np.testing.assert_array_equal(a, b)
    (only,) = wiener_filter(v, [v], eps=1e-300)
    assert only[0, 0] == pytest.approx(1.0)
    zeros = wiener_filter(v, [np.zeros((1, 1)), np.zeros((1, 1))])
    assert all(np.all(z == 0) for z in zeros)


@given(mats((4, 5)), st.lists(mats((4, 5)), min_size=1, max_size=4), st.sampled_from([1e-12, 1e-6, 1e-2]))
def test_wiener_partition_and_masks(v, parts, eps):
    out = wiener_filter(v, parts, eps)
    R = sum(parts)
    np.testing.assert_allclose(sum(out), v * R / (R + eps), rtol=1e-12, atol=1e-300)
    for p, u in zip(parts, out):
        mask = p / (R + eps)
        assert np.all((mask >= 0) & (mask < 1))
    assert np.all(sum(out) <= v + 1e-9)
    ref = wiener_reference(v, parts, eps)
    for u, r in zip(out, ref):
        np.testing.assert_allclose(u, r, rtol=1e-12, atol=1e-300)


def test_wiener_partition_close_to_mixture(rng):
    v = rng.random((10, 8))
    parts = [rng.random((10, 8)) for _ in range(3)]
    total = sum(wiener_filter(v, parts, 1e-12))
    R = sum(parts)
    gap = np.abs(total - v)[R > 1e-6]
    assert gap.max() <= 1e-5 * np.abs(v).max()


def test_wiener_errors():
    with pytest.raises(DimensionError):
        wiener_filter(np.ones((2, 2)), [np.ones((2, 3))])
    with pytest.raises(ConfigurationError):
        wiener_filter(np.ones((2, 2)), [np.ones((2, 2))], eps=0.0)
    with pytest.raises(ConfigurationError):
        wiener_filter(np.ones((2, 2)), [-np.ones((2, 2))])


def test_separation_never_worse_than_zero(rng):
    bases = [rng.random((12, 3)), rng.random((12, 4))]
    v = rng.random((12, 9))
    res = separate(bases, v, SeparationConfig(lam=0.05))
    W = np.hstack(bases)
    H = np.vstack(res.latents)
    assert encode_objective(W, v, H, 0.05) <= encode_objective(W, v, np.zeros_like(H), 0.05)
    assert res.residual_norm == pytest.approx(np.linalg.norm(v - sum(res.reconstructions)))


def test_separation_scale_invariance(rng):
    bases = [rng.random((8, 2)), rng.random((8, 3))]
    v = rng.random((8, 6))
    kw = dict(max_iters=300, rel_tol=0.0, eps=1e-300)
    a = separate(bases, v, SeparationConfig(lam=0.01, **kw))
    b = separate(bases, 7.0 * v, SeparationConfig(lam=0.07, **kw))
    for x, y in zip(a.parts, b.parts):
        np.testing.assert_allclose(y, 7.0 * x, rtol=1e-9)


def test_per_source_sparsity(rng):
    bases = [rng.random((8, 2)), rng.random((8, 2))]
    v = rng.random((8, 5))
    res = separate(bases, v, SeparationConfig(lam=[0.0, 1e6]))
    assert np.all(res.latents[1] < 1e-6)
    with pytest.raises(ConfigurationError):
        separate(bases, v, SeparationConfig(lam=[0.1, 0.1, 0.1]))


def test_degenerate_separation_warns(caplog):
    bases = [np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])]
    with caplog.at_level(logging.WARNING):
        res = separate(bases, np.zeros((2, 3)))
    assert res.degenerate
    assert all(np.all(p == 0) for p in res.parts)
    assert "zero" in caplog.text


def test_separation_errors(rng):
    with pytest.raises(DimensionError):
        separate([rng.random((4, 2))], rng.random((5, 2)))
    with pytest.raises(ConfigurationError):
        separate([], rng.random((5, 2)))
    with pytest.raises(ConfigurationError):
        SeparationConfig(eps=0.0)
