import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmsearch.errors import DegenerateBatch
from mmsearch.supcola import (
    LossConfig,
    SupColaBatch,
    align_toy,
    finite_difference_grad,
    gradient_check,
    random_batch,
    read_batch,
    supcola_grad,
    supcola_loss,
    write_batch,
)

from oracles import supcon_loss, triple_loop_loss


def three_view_batch():
    return SupColaBatch.build(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), [{"A"}, {"A"}, {"B"}])


def test_three_view_hand_example():
    loss = supcola_loss(three_view_batch(), LossConfig(1.0))
    anchor = -math.log(math.e / (math.e + 1))
    assert anchor == pytest.approx(0.31326, abs=1e-5)
    assert loss == pytest.approx(2 * anchor, abs=1e-12)
    assert loss == pytest.approx(0.62652, abs=1e-4)


def test_three_view_gradient():
    assert gradient_check(three_view_batch(), LossConfig(1.0), eps=1e-5) < 1e-4


def test_unique_labels_give_zero_loss_and_gradient():
    rng = np.random.default_rng(0)
    batch = SupColaBatch.build(rng.standard_normal((4, 5)), [{"a"}, {"b"}, {"c"}, {"d"}], normalize=True)
    assert supcola_loss(batch) == 0.0
    assert np.all(supcola_grad(batch) == 0.0)


def test_degenerate_and_invalid_batches():
    with pytest.raises(DegenerateBatch):
        SupColaBatch.build(np.array([[1.0, 0.0]]), [{"a"}])
    with pytest.raises(ValueError):
        SupColaBatch.build(np.array([[2.0, 0.0], [1.0, 0.0]]), [{"a"}, {"a"}])
    with pytest.raises(ValueError):
        SupColaBatch.build(np.array([[1.0, 0.0], [1.0, 0.0]]), [{"a"}, set()])
    with pytest.raises(ValueError):
        LossConfig(0.0)


def _single_view_batch(rng, n, n_labels):
    labels = [f"c{int(k)}" for k in rng.integers(0, n_labels, size=n)]
    batch = SupColaBatch.build(rng.standard_normal((n, 6)), [{l} for l in labels], normalize=True)
    return batch, labels


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.floats(0.05, 2.0))
def test_reduces_to_supcon(seed, n, tau):
    batch, labels = _single_view_batch(np.random.default_rng(seed), n, 3)
    assert supcola_loss(batch, LossConfig(tau)) == pytest.approx(supcon_loss(batch.vectors, labels, tau), abs=1e-9, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matches_triple_loop_multi_view_multi_label(seed):
    rng = np.random.default_rng(seed)
    batch = random_batch(rng, n_samples=int(rng.integers(2, 5)), dim=5, n_labels=4, kinds=("image", "text", "label"))
    expected = triple_loop_loss(batch.vectors, list(batch.sample_index), [set(l) for l in batch.labels], 0.5)
    assert supcola_loss(batch, LossConfig(0.5)) == pytest.approx(expected, abs=1e-9, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    batch = random_batch(rng, n_samples=4, dim=6, n_labels=3)
    order = rng.permutation(len(batch))
    assert supcola_loss(batch.permuted(order)) == pytest.approx(supcola_loss(batch), abs=1e-9)


def test_duplicated_batch_gradient():
    rng = np.random.default_rng(9)
    batch = random_batch(rng, n_samples=3, dim=4, n_labels=2)
    doubled = SupColaBatch.build(
        np.vstack([batch.vectors, batch.vectors]),
        list(batch.labels) * 2,
        list(batch.sample_index) + [s + 100 for s in batch.sample_index],
        list(batch.kinds) * 2,
    )
    cfg = LossConfig(0.3)
    np.testing.assert_allclose(supcola_grad(doubled, cfg), finite_difference_grad(doubled, cfg), atol=1e-6, rtol=1e-5)
    # the two copies of a view play symmetric roles
    n = len(batch)
    np.testing.assert_allclose(supcola_grad(doubled, cfg)[:n], supcola_grad(doubled, cfg)[n:], atol=1e-10)


def test_softmax_normalizers_sum_to_one():
    from mmsearch.supcola import _log_softmax_rows

    batch = random_batch(np.random.default_rng(1), n_samples=5)
    for tau in (0.07, 1.0):
        rows = np.exp(_log_softmax_rows(batch.vectors, tau)).sum(axis=1)
        np.testing.assert_allclose(rows, 1.0, atol=1e-12)


def test_align_toy_pulls_image_towards_label():
    rng = np.random.default_rng(4)
    batch = SupColaBatch.build(
        rng.standard_normal((4, 8)),
        [{"cat"}, {"cat"}, {"cat"}, {"dog"}],
        sample_index=[0, 0, 0, 1],
        kinds=["image", "text", "label", "label"],
        normalize=True,
    )
    start = float(batch.vectors[0] @ batch.vectors[2])
    result = align_toy(batch, LossConfig(0.5), steps=200, learning_rate=0.1)
    assert float(result.batch.vectors[0] @ result.batch.vectors[2]) > start
    assert len(result.losses) == 201
    slow = align_toy(batch, LossConfig(0.5), steps=100, learning_rate=0.01)
    assert all(b <= a + 1e-12 for a, b in zip(slow.losses, slow.losses[1:]))
    with pytest.raises(ValueError):
        align_toy(batch, steps=0)


def test_batch_file_round_trip(tmp_path):
    batch = random_batch(np.random.default_rng(2), n_samples=3, kinds=("image", "text", "label"))
    path = tmp_path / "batch.jsonl"
    write_batch(path, batch)
    back = read_batch(path)
    assert np.array_equal(back.vectors, batch.vectors)
    assert back.labels == batch.labels and back.kinds == batch.kinds and back.sample_index == batch.sample_index
