import numpy as np
import pytest
from hypothesis import given, strategies as st

from mdnmf.batching import BatchPlan, batch_plan
from mdnmf.core import ConfigurationError


def test_undersample_example():
    plan = BatchPlan({"weak": 100, "adversarial": 40}, 10, "undersample")
    assert plan.n_batches == 4
    batches = plan.epoch(np.random.default_rng(0))
    assert len(batches) == 4
    adv = np.concatenate([b["adversarial"] for b in batches])
    np.testing.assert_array_equal(np.sort(adv), np.arange(40))


def test_oversample_wraps_to_the_first_batch():
    plan = BatchPlan({"weak": 100, "adversarial": 40}, 10, "oversample", shuffle=False)
    batches = plan.epoch(np.random.default_rng(0))
    assert len(batches) == 10
    np.testing.assert_array_equal(batches[3]["adversarial"], np.arange(30, 40))
    np.testing.assert_array_equal(batches[4]["adversarial"], np.arange(0, 10))
    weak = np.concatenate([b["weak"] for b in batches])
    np.testing.assert_array_equal(weak, np.arange(100))


def test_proportional_example():
    plan = BatchPlan({"weak": 100, "adversarial": 50}, {"weak": 10}, "proportional")
    assert plan.n_batches == 10
    assert plan.batch_sizes["adversarial"] == 5
    batches = plan.epoch(np.random.default_rng(1))
    assert all(b["adversarial"].size == 5 for b in batches)
    adv = np.concatenate([b["adversarial"] for b in batches])
    np.testing.assert_array_equal(np.sort(adv), np.arange(50))


def test_iterative_keeps_position_across_epochs():
    plan = BatchPlan({"weak": 20, "adversarial": 30}, 10, "iterative", shuffle=False)
    rng = np.random.default_rng(0)
    first = [b["adversarial"] for b in plan.epoch(rng)]
    second = [b["adversarial"] for b in plan.epoch(rng)]
    assert len(first) == 2
    np.testing.assert_array_equal(first[0], np.arange(0, 10))
    np.testing.assert_array_equal(first[1], np.arange(10, 20))
    np.testing.assert_array_equal(second[0], np.arange(20, 30))
    np.testing.assert_array_equal(second[1], np.arange(0, 10))


def test_short_last_batch_is_kept():
    plan = BatchPlan({"weak": 100}, 32)
    sizes = [b["weak"].size for b in plan.epoch(np.random.default_rng(0))]
    assert sizes == [32, 32, 32, 4]


def test_balanced_batches_spread_columns():
    plan = batch_plan({"weak": 100}, 32, balanced=True)
    sizes = [b["weak"].size for b in plan.epoch(np.random.default_rng(0))]
    assert sizes == [25, 25, 25, 25]


def test_full_batch_default():
    plan = BatchPlan({"weak": 7, "adversarial": 3}, None, shuffle=False)
    (batch,) = plan.epoch(np.random.default_rng(0))
    np.testing.assert_array_equal(batch["weak"], np.arange(7))
    np.testing.assert_array_equal(batch["adversarial"], np.arange(3))


@given(st.integers(1, 200), st.integers(1, 64), st.booleans(), st.integers(0, 2**32 - 1))
def test_designated_term_covers_every_column_once(n, b, balanced, seed):
    plan = BatchPlan({"weak": n}, b, "undersample", balanced=balanced)
    batches = plan.epoch(np.random.default_rng(seed))
    idx = np.concatenate([x["weak"] for x in batches])
    np.testing.assert_array_equal(np.sort(idx), np.arange(n))
    sizes = [x["weak"].size for x in batches]
    assert max(sizes) <= min(b, n)
    if balanced:
        assert max(sizes) - min(sizes) <= 1


def test_same_seed_same_schedule():
    plan = BatchPlan({"weak": 50, "adversarial": 30}, 8, "oversample")
    a = plan.epoch(np.random.default_rng(3))
    b = plan.epoch(np.random.default_rng(3))
    for x, y in zip(a, b):
        for key in x:
            np.testing.assert_array_equal(x[key], y[key])


def test_errors():
    with pytest.raises(ConfigurationError):
        BatchPlan({"weak": 10}, 2, "sideways")
    with pytest.raises(ConfigurationError):
        BatchPlan({"weak": 0}, 2)
    with pytest.raises(ConfigurationError):
        BatchPlan({"weak": 10}, 0)
    with pytest.raises(ConfigurationError):
        BatchPlan({}, 2)
