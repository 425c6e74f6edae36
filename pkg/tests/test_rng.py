import numpy as np

from samplerlab import rng


def test_block_function_matches_numpy_philox():
    # numpy's Philox4x64 increments its counter before producing each block
    for counter, key in [
        ((0, 0, 0, 0), (0, 0)),
        ((5, 6, 7, 8), (123, 456)),
        ((2**64 - 1, 1, 2, 3), (2**63, 17)),
    ]:
        bumped = np.array(counter, dtype=np.uint64)
        for w in range(4):  # increment with carry, like a 256-bit counter
            with np.errstate(over="ignore"):
                bumped[w] += np.uint64(1)
            if bumped[w] != 0:
                break
        mine = rng.philox4x64(bumped[None, :], np.array(key, dtype=np.uint64))[0]
        bg = np.random.Philox(counter=np.array(counter, dtype=np.uint64),
                              key=np.array(key, dtype=np.uint64))
        ref = np.random.Generator(bg).integers(0, 2**64, size=4, dtype=np.uint64)
        assert np.array_equal(mine, ref)


def test_uniform_grid_deterministic_and_in_range():
    a = rng.uniform_grid(7, rng.STREAM_TOKEN, 3, 10, 20)
    b = rng.uniform_grid(7, rng.STREAM_TOKEN, 3, 10, 20)
    assert np.array_equal(a, b)
    assert a.shape == (10, 20)
    assert np.all((a >= 0.0) & (a < 1.0))


def test_uniform_grid_independent_of_sharding():
    full = rng.uniform_grid(11, rng.STREAM_DECISION, 5, 16, 33)
    lo = rng.uniform_grid(11, rng.STREAM_DECISION, 5, np.arange(0, 7), 33)
    hi = rng.uniform_grid(11, rng.STREAM_DECISION, 5, np.arange(7, 16), 33)
    assert np.array_equal(full, np.concatenate([lo, hi], axis=0))


def test_uniform_grid_prefix_stable_in_position_count():
    # extending the requested positions never changes earlier values
    short = rng.uniform_grid(3, rng.STREAM_AR, 0, 4, 10, draws=2)
    long = rng.uniform_grid(3, rng.STREAM_AR, 0, 4, 25, draws=2)
    assert np.array_equal(short, long[:, :10, :])


def test_streams_and_steps_are_distinct():
    a = rng.uniform_grid(1, rng.STREAM_TOKEN, 2, 4, 8)
    b = rng.uniform_grid(1, rng.STREAM_DECISION, 2, 4, 8)
    c = rng.uniform_grid(1, rng.STREAM_TOKEN, 3, 4, 8)
    d = rng.uniform_grid(2, rng.STREAM_TOKEN, 2, 4, 8)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_uniforms_look_uniform():
    u = rng.uniform_grid(0, rng.STREAM_INIT, 0, 100, 100).ravel()
    assert abs(u.mean() - 0.5) < 0.01
    assert abs(np.quantile(u, 0.25) - 0.25) < 0.02
