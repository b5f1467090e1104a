import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from mckeanlab.rng import Channel, brownian_increments, counter_words, philox4x32, rng_stream, uniform_stream

# published known-answer vectors for Philox4x32-10
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF, 0xFFFFFFFF), (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_philox_known_answers(ctr, key, expected):
    out = philox4x32(np.array(ctr, dtype=np.uint64)[:, None], key)
    assert tuple(int(v) for v in out[:, 0]) == expected


@given(st.integers(0, 2**64 - 1), st.lists(st.integers(0, 2**40), min_size=1, max_size=20),
       st.integers(0, 2**40), st.sampled_from(list(Channel)))
def test_compiled_kernel_matches_reference(seed, ids, step, channel):
    ctr = counter_words(np.array(ids, dtype=np.uint64), step, int(channel))
    blk = philox4x32(ctr, (seed & 0xFFFFFFFF, seed >> 32)).astype(np.uint64)
    ref0 = ((blk[0] >> 5) * 67108864 + (blk[1] >> 6)) / 9007199254740992.0
    ref1 = ((blk[2] >> 5) * 67108864 + (blk[3] >> 6)) / 9007199254740992.0
    got = uniform_stream(seed, np.array(ids), step, int(channel))
    np.testing.assert_array_equal(got[:, 0], ref0)
    np.testing.assert_array_equal(got[:, 1], ref1)


@given(st.integers(0, 2**32), st.permutations(list(range(12))))
def test_streams_independent_of_order(seed, perm):
    ids = np.arange(12) * 7 + 3
    base = rng_stream(seed, ids, 5, Channel.W)
    shuffled = rng_stream(seed, ids[perm], 5, Channel.W)
    np.testing.assert_array_equal(shuffled, base[perm])


def test_channels_and_steps_differ():
    ids = np.arange(100)
    a = rng_stream(1, ids, 0, Channel.W)
    assert not np.array_equal(a, rng_stream(1, ids, 1, Channel.W))
    assert not np.array_equal(a, rng_stream(1, ids, 0, Channel.B))
    assert not np.array_equal(a, rng_stream(2, ids, 0, Channel.W))


def test_normals_pass_ks_and_moments():
    z = rng_stream(0, np.arange(200_000), 0, Channel.W, dim=2)
    for col in z.T:
        assert stats.kstest(col, "norm").pvalue > 1e-3
    assert abs(np.corrcoef(z.T)[0, 1]) < 0.01
    assert abs(z.var() - 1.0) < 0.01


def test_brownian_increment_shape_and_scale():
    inc = brownian_increments(3, np.arange(50_000), 2, Channel.W, 1, 0.04)
    assert inc.shape == (50_000, 1)
    assert inc.std() == pytest.approx(0.2, rel=0.02)


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        uniform_stream(-1, [0], 0, 0)
    with pytest.raises(ValueError):
        uniform_stream(0, [-1], 0, 0)
    with pytest.raises(ValueError):
        rng_stream(0, [0], 0, 0, dim=3)
