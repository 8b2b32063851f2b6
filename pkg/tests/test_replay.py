import numpy as np
import pytest

from utils import fake_transition

from voltage_control_bench.learner.replay import ReplayBuffer


def test_capacity_never_exceeded(rng):
    buffer = ReplayBuffer(10)
    for _ in range(25):
        buffer.append(fake_transition(rng))
    assert len(buffer) == 10


def test_ring_overwrites_oldest(rng):
    buffer = ReplayBuffer(3)
    for k in range(5):
        buffer.append(fake_transition(rng, reward=-float(k)))
    batch = buffer.sample(3, rng)
    assert sorted(batch.reward) == [-4.0, -3.0, -2.0]


def test_sample_requires_batch(rng):
    buffer = ReplayBuffer(10)
    with pytest.raises(ValueError):
        buffer.sample(1, rng)
    for _ in range(3):
        buffer.append(fake_transition(rng))
    with pytest.raises(ValueError):
        buffer.sample(4, rng)


def test_bad_capacity():
    with pytest.raises(ValueError):
        ReplayBuffer(0)


def test_stores_normalized_cost_and_override(rng):
    buffer = ReplayBuffer(4)
    tr = fake_transition(rng, reward=-0.3, cost=0.25, terminal=True)
    buffer.append(tr, reward=0.0)
    batch = buffer.sample(1, rng)
    assert batch.reward[0] == 0.0
    assert batch.cost[0] == 0.25
    assert batch.terminal[0] == 1.0
    np.testing.assert_array_equal(batch.obs[0], tr.obs)
    np.testing.assert_array_equal(batch.next_state[0], tr.next_state)


def test_uniform_sampling(rng):
    capacity = 5
    buffer = ReplayBuffer(capacity)
    for k in range(capacity):
        buffer.append(fake_transition(rng, reward=float(k)))
    draws = 5000
    counts = np.zeros(capacity)
    for _ in range(draws):
        counts[int(buffer.sample(1, rng).reward[0])] += 1
    p = 1.0 / capacity
    sigma = np.sqrt(draws * p * (1 - p))
    assert np.all(np.abs(counts - draws * p) <= 3 * sigma)
