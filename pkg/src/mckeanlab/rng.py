"""Counter-based random streams.

Every deviate is a pure function of ``(seed, particle_id, step, channel)``, so
trajectories do not depend on evaluation order or thread count. The block
cipher is Philox4x32-10. ``philox4x32`` is a plain numpy reference used to
validate the compiled kernel that produces the normals.
"""
from __future__ import annotations

import enum

import numba
import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)


class Channel(enum.IntEnum):
    """Independent stream families."""

    INIT = 0
    B = 1
    W = 2
    INIT_Y = 3
    AUX = 4


def philox4x32(counter: np.ndarray, key, rounds: int = 10) -> np.ndarray:
    """Philox4x32 block function (numpy reference).

    ``counter`` has shape (4, n) with 32-bit values, ``key`` is a pair of 32-bit
    values. Returns a (4, n) ``uint32`` array.
    """
    c = np.asarray(counter, dtype=np.uint64) & _MASK32
    c0, c1, c2, c3 = (c[i].copy() for i in range(4))
    k0 = np.uint64(int(key[0]) & 0xFFFFFFFF)
    k1 = np.uint64(int(key[1]) & 0xFFFFFFFF)
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack([c0, c1, c2, c3]).astype(np.uint32)


def _key_from_seed(seed: int) -> tuple[int, int]:
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be in [0, 2**64)")
    return seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF


def counter_words(particle_id, step: int, channel: int) -> np.ndarray:
    """Counter layout: (id low, step low, channel, id high | step high << 16)."""
    ids = np.atleast_1d(np.asarray(particle_id, dtype=np.uint64))
    ctr = np.empty((4, ids.shape[0]), dtype=np.uint64)
    ctr[0] = ids & _MASK32
    ctr[1] = np.uint64(int(step) & 0xFFFFFFFF)
    ctr[2] = np.uint64(int(channel) & 0xFFFFFFFF)
    ctr[3] = (ids >> _SHIFT32) | (np.uint64((int(step) >> 32) & 0xFFFF) << np.uint64(16))
    return ctr


@numba.njit(cache=True)
def _philox_blocks(k0_init, k1_init, ids, step, channel, out):
    M0 = np.uint64(0xD2511F53)
    M1 = np.uint64(0xCD9E8D57)
    W0 = np.uint64(0x9E3779B9)
    W1 = np.uint64(0xBB67AE85)
    MASK = np.uint64(0xFFFFFFFF)
    s = np.uint64(step)
    ch = np.uint64(channel)
    for i in range(ids.shape[0]):
        pid = np.uint64(ids[i])
        c0 = pid & MASK
        c1 = s & MASK
        c2 = ch & MASK
        c3 = (pid >> np.uint64(32)) | (((s >> np.uint64(32)) & np.uint64(0xFFFF)) << np.uint64(16))
        k0 = np.uint64(k0_init)
        k1 = np.uint64(k1_init)
        for _ in range(10):
            p0 = M0 * c0
            p1 = M1 * c2
            n0 = (p1 >> np.uint64(32)) ^ c1 ^ k0
            n2 = (p0 >> np.uint64(32)) ^ c3 ^ k1
            c1 = p1 & MASK
            c3 = p0 & MASK
            c0 = n0
            c2 = n2
            k0 = (k0 + W0) & MASK
            k1 = (k1 + W1) & MASK
        # two 53-bit uniforms on [0, 1)
        out[i, 0] = (np.int64(c0 >> np.uint64(5)) * 67108864 + np.int64(c1 >> np.uint64(6))) * (
            1.0 / 9007199254740992.0
        )
        out[i, 1] = (np.int64(c2 >> np.uint64(5)) * 67108864 + np.int64(c3 >> np.uint64(6))) * (
            1.0 / 9007199254740992.0
        )


def uniform_stream(seed: int, particle_id, step: int, channel: int) -> np.ndarray:
    """Two uniforms on [0, 1) per particle, shape (n, 2)."""
    ids = np.ascontiguousarray(np.atleast_1d(particle_id), dtype=np.int64)
    if ids.size and ids.min() < 0:
        raise ValueError("particle ids must be nonnegative")
    k0, k1 = _key_from_seed(seed)
    out = np.empty((ids.shape[0], 2))
    _philox_blocks(k0, k1, ids, int(step), int(channel), out)
    return out


def rng_stream(seed: int, particle_id, step: int, channel: int, dim: int = 1) -> np.ndarray:
    """Standard normal deviates keyed by ``(seed, particle_id, step, channel)``.

    Returns shape (n,) for ``dim == 1`` and (n, 2) for ``dim == 2``; Box-Muller
    on one Philox block yields both deviates.
    """
    if dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    u = uniform_stream(seed, particle_id, step, channel)
    radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    angle = 2.0 * np.pi * u[:, 1]
    if dim == 1:
        return radius * np.cos(angle)
    return np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)


def brownian_increments(seed: int, ids: np.ndarray, step: int, channel: int, dim: int, dt: float) -> np.ndarray:
    """Increments of variance ``dt``, shape (n, dim)."""
    z = rng_stream(seed, ids, step, channel, dim=dim)
    return np.sqrt(dt) * z.reshape(len(ids), dim)
