"""Counter-based random variates: Philox4x64-10 plus Box-Muller.

Every variate is a pure function of ``(seed, stream, path_index, index)``,
so simulation results do not depend on how paths are split across threads.
One Philox block yields four 64-bit words, used as eight 32-bit uniforms.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
TWO_PI = 2.0 * math.pi
INV_2_32 = 1.0 / 4294967296.0

NOISE_STREAM = 0
BRIDGE_STREAM = 1
BLOCK = 8


@nb.njit(inline="always", cache=True)
def _mulhilo(a, b):
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    lolo = a_lo * b_lo
    lohi = a_lo * b_hi
    hilo = a_hi * b_lo
    hihi = a_hi * b_hi
    mid = (lolo >> _S32) + (lohi & _MASK32) + (hilo & _MASK32)
    hi = hihi + (lohi >> _S32) + (hilo >> _S32) + (mid >> _S32)
    return hi, a * b


@nb.njit(cache=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x64 block for counter ``(c0..c3)`` and key ``(k0, k1)``."""
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@nb.njit(inline="always", cache=True)
def _halves(w):
    # midpoints of 2**32 cells: never exactly 0 or 1
    return (float(w & _MASK32) + 0.5) * INV_2_32, (float(w >> _S32) + 0.5) * INV_2_32


@nb.njit(cache=True)
def uniform_block(seed, stream, path, block):
    """Eight uniforms on (0, 1) for indices ``8*block .. 8*block + 7``."""
    r0, r1, r2, r3 = philox4x64(
        np.uint64(block), np.uint64(path), np.uint64(stream), np.uint64(0), np.uint64(seed), np.uint64(0)
    )
    a0, a1 = _halves(r0)
    a2, a3 = _halves(r1)
    a4, a5 = _halves(r2)
    a6, a7 = _halves(r3)
    return (a0, a1, a2, a3, a4, a5, a6, a7)


@nb.njit(inline="always", cache=True)
def _box_muller(u1, u2):
    r = math.sqrt(-2.0 * math.log(u1))
    t = TWO_PI * u2
    return r * math.cos(t), r * math.sin(t)


@nb.njit(cache=True)
def normal_block(seed, path, block):
    """Eight standard normals for indices ``8*block .. 8*block + 7`` of one path."""
    u = uniform_block(seed, NOISE_STREAM, path, block)
    z0, z1 = _box_muller(u[0], u[1])
    z2, z3 = _box_muller(u[2], u[3])
    z4, z5 = _box_muller(u[4], u[5])
    z6, z7 = _box_muller(u[6], u[7])
    return (z0, z1, z2, z3, z4, z5, z6, z7)


@nb.njit(cache=True)
def _fill(seed, path, n, normal, out):
    for b in range((n + BLOCK - 1) // BLOCK):
        z = normal_block(seed, path, b) if normal else uniform_block(seed, BRIDGE_STREAM, path, b)
        for lane in range(BLOCK):
            i = BLOCK * b + lane
            if i < n:
                out[i] = z[lane]


def normals(seed: int, path: int, n: int) -> np.ndarray:
    """First ``n`` normals of the noise stream for ``(seed, path)``."""
    out = np.empty(n)
    _fill(np.uint64(seed), np.uint64(path), n, True, out)
    return out


def bridge_uniforms(seed: int, path: int, n: int) -> np.ndarray:
    """First ``n`` uniforms of the exit-test stream for ``(seed, path)``."""
    out = np.empty(n)
    _fill(np.uint64(seed), np.uint64(path), n, False, out)
    return out
