import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mdnmf.core import DimensionError
from mdnmf.metrics import EXACT, aggregate, psnr, si_sdr, weighted_source_mean
from oracles import si_sdr_bruteforce


def signals(n=64):
    return arrays(np.float64, n, elements=st.floats(-1, 1, width=64))


# ---------------------------------------------------------------- PSNR

def test_psnr_examples():
    ref = np.zeros(100)
    assert psnr(ref, ref) == EXACT
    assert psnr(ref, np.full(100, 0.1)) == pytest.approx(20.0)
    assert psnr(ref, np.ones(100)) == pytest.approx(0.0)
    assert psnr(ref, np.full(100, 0.1), peak=2.0) == pytest.approx(20.0 + 20 * math.log10(2))


def test_psnr_shift_and_sign():
    u = np.linspace(0, 1, 50)
    values = [psnr(u, u + c) for c in (0.01, 0.05, 0.2)]
    assert values[0] > values[1] > values[2]
    assert psnr(u, u + 0.05) == pytest.approx(psnr(u, u - 0.05))


def test_psnr_errors():
    with pytest.raises(DimensionError):
        psnr(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        psnr(np.zeros(3), np.zeros(3), peak=0.0)


# ---------------------------------------------------------------- SI-SDR

def test_si_sdr_scale_invariance(rng):
    s = rng.standard_normal(1000)
    for c in (0.01, 1.0, 3.0, 1e4):
        assert si_sdr(s, c * s) == EXACT


def test_si_sdr_orthogonal_error_gives_ten_db(rng):
    s = rng.standard_normal(2000)
    s -= s.mean()
    e = rng.standard_normal(2000)
    e -= e.mean()
    e -= (e @ s) / (s @ s) * s
    e *= np.sqrt((s @ s) / 10 / (e @ e))
    assert si_sdr(s, s + e) == pytest.approx(10.0, abs=1e-9)


def test_si_sdr_negated_reference():
    # the projection gain is -1 and the error vanishes, so the ratio is unbounded
    s = np.sin(np.linspace(0, 20, 500))
    assert si_sdr(s, -s) == EXACT


@given(signals(), signals())
def test_si_sdr_matches_bruteforce(s, e):
    s0, e0 = s - s.mean(), e - e.mean()
    if s0 @ s0 < 1e-6 or e0 @ e0 < 1e-6:
        return
    alpha = (e0 @ s0) / (s0 @ s0)
    residual = alpha * s0 - e0
    if residual @ residual < 1e-9 * (e0 @ e0) or abs(alpha) < 1e-6:
        return
    assert si_sdr(s, e) == pytest.approx(si_sdr_bruteforce(s, e), abs=1e-6)


@given(signals(), st.floats(0.01, 100.0))
def test_si_sdr_invariant_to_positive_gain(s, alpha):
    rng = np.random.default_rng(0)
    e = s + 0.3 * rng.standard_normal(s.size)
    if np.ptp(s) < 1e-3:
        return
    assert si_sdr(s, alpha * e) == pytest.approx(si_sdr(s, e), abs=1e-8)


def test_si_sdr_errors():
    with pytest.raises(ValueError):
        si_sdr(np.ones(10), np.arange(10.0))
    with pytest.raises(DimensionError):
        si_sdr(np.arange(3.0), np.arange(4.0))


# ---------------------------------------------------------------- aggregation

def test_aggregate_examples():
    rep = aggregate([10.0, 20.0])
    assert rep.mean == 15.0 and rep.median == 15.0
    assert rep.std_error == pytest.approx(np.std([10, 20], ddof=1) / np.sqrt(2))
    rep = aggregate([7.0])
    assert rep.median == rep.mean == 7.0 and rep.std_error == 0.0
    rep = aggregate([[1.0, 2.0], [100.0, 200.0]], weights=[1, 0])
    np.testing.assert_array_equal(rep.values, [1.0, 2.0])


def test_aggregate_skips_non_finite():
    rep = aggregate([1.0, EXACT, 3.0])
    assert rep.median == 2.0 and rep.mean == 2.0 and rep.count == 3
    assert aggregate([EXACT, EXACT]).median == EXACT


def test_weighted_source_mean_ignores_zero_weight_sources():
    per_source = np.array([[1.0, 2.0], [np.nan, np.inf]])
    np.testing.assert_array_equal(weighted_source_mean(per_source, [1, 0]), [1.0, 2.0])
    np.testing.assert_allclose(weighted_source_mean([[1.0], [3.0]], [1, 3]), [2.5])
    with pytest.raises(ValueError):
        weighted_source_mean([[1.0], [3.0]], [0, 0])
    with pytest.raises(DimensionError):
        weighted_source_mean([[1.0], [3.0]], [1, 1, 1])


def test_aggregate_empty():
    with pytest.raises(ValueError):
        aggregate([])


def test_delta_against_itself_is_zero():
    values = np.array([21.0, 23.5, 19.2, EXACT])
    assert aggregate(values).median - aggregate(values.copy()).median == 0.0
