"""Counter-based random streams (Philox4x32-10).

Every uniform is a pure function of ``(key, stream_id, index)``, so draws for
one (collocation point, path) pair never depend on how work is split across
threads or on what other streams consumed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_TWO53_INV = 1.0 / 9007199254740992.0

# stream-purpose tags used by derive_key
PURPOSE = {"collocation": 1, "paths": 2, "eval": 3, "train": 4, "init": 5, "check": 6}


def philox4x32(counter, key, rounds: int = 10):
    """Vectorized Philox4x32 block function.

    ``counter`` is a sequence of four uint32-valued arrays, ``key`` a pair.
    Returns four uint64 arrays holding 32-bit words.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter)
    k0 = np.asarray(key[0], dtype=np.uint64) & _MASK32
    k1 = np.asarray(key[1], dtype=np.uint64) & _MASK32
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ k0,
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ k1,
            p0 & _MASK32,
        )
    return c0, c1, c2, c3


def _words_to_unit(hi, lo):
    # 53 random bits mapped into the open interval (0, 1)
    bits = ((hi >> np.uint64(5)) << np.uint64(26)) | (lo >> np.uint64(6))
    return (bits.astype(np.float64) + 0.5) * _TWO53_INV


def uniforms(key: int, stream_ids, start, count: int) -> np.ndarray:
    """Uniforms on (0,1) at indices ``start .. start+count-1`` of each stream.

    ``stream_ids`` and ``start`` broadcast against each other; the result has
    shape ``broadcast_shape + (count,)``. Index ``i`` lives in Philox block
    ``i // 2``; each block yields two 53-bit uniforms.
    """
    sid = np.asarray(stream_ids, dtype=np.uint64)
    start = np.asarray(start, dtype=np.uint64)
    sid, start = np.broadcast_arrays(sid, start)
    odd = (start & np.uint64(1)).astype(np.intp)
    any_odd = bool(odd.any())
    nblocks = count // 2 + 1 if any_odd else (count + 1) // 2
    block = (start >> np.uint64(1))[..., None] + np.arange(nblocks, dtype=np.uint64)
    sid_b = np.broadcast_to(sid[..., None], block.shape)
    key = int(key) & 0xFFFFFFFFFFFFFFFF
    w0, w1, w2, w3 = philox4x32(
        (block & _MASK32, block >> _SHIFT32, sid_b & _MASK32, sid_b >> _SHIFT32),
        (np.uint64(key & 0xFFFFFFFF), np.uint64(key >> 32)),
    )
    both = np.empty(block.shape[:-1] + (2 * nblocks,), dtype=np.float64)
    both[..., 0::2] = _words_to_unit(w0, w1)
    both[..., 1::2] = _words_to_unit(w2, w3)
    if not any_odd:
        return both[..., :count]
    pick = odd[..., None] + np.arange(count)
    return np.take_along_axis(both, pick, axis=-1)


def derive_key(seed: int, purpose: str, iteration: int = 0) -> int:
    """64-bit Philox key for one (seed, purpose, iteration) triple."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(PURPOSE[purpose], int(iteration)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class RngStream:
    """One independent random stream, addressed by ``(seed, stream_id)``.

    ``seed`` is used directly as the Philox key.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed < 2**64 and 0 <= self.stream_id < 2**64):
            raise ValueError("seed and stream_id must be 64-bit unsigned integers")

    def uniforms(self, n: int, start: int = 0) -> np.ndarray:
        return uniforms(self.seed, self.stream_id, start, n)

    def normals(self, n: int, start: int = 0) -> np.ndarray:
        u = self.uniforms(2 * ((n + 1) // 2), start)
        return box_muller(u)[:n]

    def exponentials(self, n: int, start: int = 0) -> np.ndarray:
        return -np.log(self.uniforms(n, start))

    def substream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


def box_muller(u: np.ndarray) -> np.ndarray:
    """Standard normals from an even-length trailing axis of uniforms."""
    u1 = u[..., 0::2]
    u2 = u[..., 1::2]
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    z = np.empty(u.shape, dtype=np.float64)
    z[..., 0::2] = rad * np.cos(ang)
    z[..., 1::2] = rad * np.sin(ang)
    return z
