import numpy as np
import pytest

from uavwet.common.seeding import substream
from uavwet.core.replay import ReplayBuffer


def _push(buf, k):
    buf.push(np.full((2, 7), k), np.zeros((2, 3)), np.full(2, k), np.zeros((2, 7)),
             np.eye(2), np.eye(2), done=False)


def test_capacity_and_fifo_eviction():
    buf = ReplayBuffer(4, 2, 7, np.random.default_rng(0))
    for k in range(6):
        _push(buf, k)
    assert len(buf) == 4
    assert sorted(buf.r[:, 0].tolist()) == [2.0, 3.0, 4.0, 5.0]


def test_sampling_only_reads_stored_window():
    buf = ReplayBuffer(100, 2, 7, np.random.default_rng(0))
    for k in range(3):
        _push(buf, k + 1)
    batch = buf.sample(50)
    assert len(batch) == 50
    assert set(batch.r[:, 0].tolist()) <= {1.0, 2.0, 3.0}


def test_fixed_seed_gives_reproducible_indices():
    seqs = []
    for _ in range(2):
        buf = ReplayBuffer(32, 2, 7, substream(5, "replay"))
        for k in range(20):
            _push(buf, k)
        seqs.append(buf.sample_indices(16).tolist())
    assert seqs[0] == seqs[1]


def test_empty_buffer_refuses_to_sample():
    with pytest.raises(ValueError):
        ReplayBuffer(4, 2, 7, np.random.default_rng(0)).sample(1)
