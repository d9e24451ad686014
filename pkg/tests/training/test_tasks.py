import numpy as np
import pytest

from src.training import (
    BOS_ID,
    EOS_ID,
    FIRST_CONTENT_ID,
    PAD_ID,
    SynthTask,
    TaskConfig,
    TaskKind,
    build_task,
    collate,
    make_batch,
    make_batches,
    stream_seed,
)


@pytest.mark.parametrize("kind, relation", [
    (TaskKind.COPY, lambda s: list(s)),
    (TaskKind.REVERSE, lambda s: list(reversed(s))),
    (TaskKind.SORT, sorted),
])
def test_synthetic_targets(kind, relation):
    task = SynthTask(kind=kind, vocab=16, min_len=3, max_len=8, seed=7)
    lengths = set()
    for index in range(1000):
        source, target = task.sample(index, seed=11)
        assert target == relation(source)
        assert all(FIRST_CONTENT_ID <= token < 16 for token in source)
        lengths.add(len(source))
    assert lengths == set(range(3, 9))


def test_samples_are_a_function_of_seed_and_index():
    task = SynthTask(kind=TaskKind.COPY, vocab=16, min_len=3, max_len=8, seed=7)
    assert task.sample(5, seed=1) == task.sample(5, seed=1)
    assert [task.sample(i, seed=1) for i in range(20)] != [task.sample(i, seed=2) for i in range(20)]
    other = SynthTask(kind=TaskKind.COPY, vocab=16, min_len=3, max_len=8, seed=8)
    assert [task.sample(i, seed=1) for i in range(20)] != [other.sample(i, seed=1) for i in range(20)]


def test_collate_frames_and_pads():
    batch = collate([([5, 6, 7], [5, 6, 7]), ([4], [4])])
    np.testing.assert_array_equal(batch.src, [[5, 6, 7, EOS_ID], [4, EOS_ID, PAD_ID, PAD_ID]])
    np.testing.assert_array_equal(batch.tgt_in, [[BOS_ID, 5, 6, 7], [BOS_ID, 4, PAD_ID, PAD_ID]])
    np.testing.assert_array_equal(batch.tgt_out, [[5, 6, 7, EOS_ID], [4, EOS_ID, PAD_ID, PAD_ID]])
    assert batch.target_tokens() == 6
    assert batch.size == 2


def test_batch_size_counts_sequences():
    task = SynthTask(kind=TaskKind.REVERSE, vocab=12, min_len=2, max_len=6)
    batches = make_batches(task, 3, 5, seed=4)
    assert [b.size for b in batches] == [5, 5, 5]
    np.testing.assert_array_equal(batches[2].src, make_batch(task, 2, 5, seed=4).src)
    assert batches[2].index == 2


def test_batch_count_must_be_positive():
    task = SynthTask(kind=TaskKind.COPY, vocab=12, min_len=2, max_len=6)
    with pytest.raises(ValueError):
        make_batches(task, 0, 4, seed=1)


def test_stream_seeds_are_distinct():
    seeds = {stream_seed(1, name) for name in ("train", "valid", "test", "admin", "bench")}
    assert len(seeds) == 5
    assert stream_seed(1, "train") != stream_seed(2, "train")


def test_build_synthetic_task():
    task = build_task(TaskConfig(kind="sort", vocab_size=20, min_len=2, max_len=4, seed=3))
    assert isinstance(task, SynthTask)
    assert task.vocab_size == 20
    assert task.max_target_len == 4


@pytest.mark.parametrize("values", [
    {"min_len": 6, "max_len": 3},
    {"kind": "file"},
    {"kind": "shuffle"},
    {"vocab_size": 3},
])
def test_invalid_task_config(values):
    with pytest.raises(ValueError):
        TaskConfig(**values)
