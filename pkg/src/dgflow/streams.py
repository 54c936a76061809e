"""Counter-based per-particle noise streams.

Refinement noise must be bit-reproducible under any partitioning of the
particle set across workers, so each (seed, particle id, step) triple owns its
own Philox-4x64-10 block and the Gaussian draw is a fixed-consumption
Box-Muller transform of that block. Slicing a batch of particles therefore
never changes the noise any individual particle sees.

The keyed bijection matches numpy's Philox word for word (numpy pre-increments
its counter, so its block at counter c equals ours at c+1; tested against
``np.random.Philox``). It is reimplemented here only so the counters can be
vectorized over particles.
"""

import numpy as np

_PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
_PHILOX_M1 = np.uint64(0xCA5A826395121157)
_PHILOX_W0 = np.uint64(0x9E3779B97F4A7C15)
_PHILOX_W1 = np.uint64(0xBB67AE8584CAA73B)

_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)


def _mulhilo64(a, b):
    """Full 64x64 -> 128 bit product as (hi, lo) uint64 arrays."""
    lo = a * b
    a_lo = a & _MASK32
    a_hi = a >> _SHIFT32
    b_lo = b & _MASK32
    b_hi = b >> _SHIFT32
    t = a_hi * b_lo + ((a_lo * b_lo) >> _SHIFT32)
    hi = a_hi * b_hi + (t >> _SHIFT32) + (((t & _MASK32) + a_lo * b_hi) >> _SHIFT32)
    return hi, lo


def philox_block(key0, key1, c0, c1=0, c2=0, c3=0):
    """One Philox-4x64-10 block per element of the broadcast inputs.

    Returns four uint64 arrays (the block's output words).
    """
    k0, k1, x0, x1, x2, x3 = (
        np.atleast_1d(np.array(a, dtype=np.uint64))
        for a in np.broadcast_arrays(
            np.asarray(key0, dtype=np.uint64),
            np.asarray(key1, dtype=np.uint64),
            np.asarray(c0, dtype=np.uint64),
            np.asarray(c1, dtype=np.uint64),
            np.asarray(c2, dtype=np.uint64),
            np.asarray(c3, dtype=np.uint64),
        )
    )
    with np.errstate(over="ignore"):  # mod-2^64 wraparound is the point
        for _ in range(10):
            hi0, lo0 = _mulhilo64(_PHILOX_M0, x0)
            hi1, lo1 = _mulhilo64(_PHILOX_M1, x2)
            x0, x1, x2, x3 = hi1 ^ x1 ^ k0, lo1, hi0 ^ x3 ^ k1, lo0
            k0 = k0 + _PHILOX_W0
            k1 = k1 + _PHILOX_W1
    return x0, x1, x2, x3


def _to_open_unit(words):
    # 53-bit mantissa, shifted into (0, 1] so log() is safe
    return (np.right_shift(words, np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53


def normal(seed, particle_ids, step, dim):
    """Standard-normal noise of shape (len(particle_ids), dim).

    Stream identity is (seed, particle id, step); within it, successive counter
    blocks feed a Box-Muller pair each, so `dim` only grows the block count.
    """
    ids = np.asarray(particle_ids, dtype=np.uint64)
    out = np.empty((ids.shape[0], dim), dtype=np.float64)
    n_blocks = (dim + 1) // 2
    for blk in range(n_blocks):
        w0, w1, _, _ = philox_block(np.uint64(seed), ids, np.uint64(step), np.uint64(blk))
        u1 = _to_open_unit(w0)
        u2 = _to_open_unit(w1)
        radius = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        lo = 2 * blk
        out[:, lo] = radius * np.cos(theta)
        if lo + 1 < dim:
            out[:, lo + 1] = radius * np.sin(theta)
    return out
