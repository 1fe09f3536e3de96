"""Counter-based pseudo-random generator (splitmix64).

Every random draw in the package flows through this module so that runs are
bit-reproducible from a single 64-bit seed, and so the stream definition is
simple enough to re-derive in any language:

    state_i = (seed + (i + 1) * GAMMA) mod 2^64          (i-th counter)
    out_i   = mix64(state_i)                              (i-th raw draw)

with GAMMA = 0x9E3779B97F4A7C15 and mix64 the splitmix64 finalizer

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

(all arithmetic mod 2^64). Uniforms in [0, 1) take the top 53 bits:
u_i = (out_i >> 11) * 2^-53.

Subsystem streams are derived, not split: ``derive_seed(seed, label)`` folds
the UTF-8 bytes of the label into the seed one mix at a time, so e.g. the
dropout stream and the shuffle stream of one run never collide.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, label: str) -> int:
    """Derive a child seed for a named subsystem stream."""
    h = seed & MASK64
    for b in label.encode("utf-8"):
        h = mix64((h + GAMMA + b) & MASK64)
    return mix64((h + GAMMA) & MASK64)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # uint64 arithmetic wraps mod 2^64, matching mix64 on scalars
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        return z ^ (z >> np.uint64(31))


class Rng:
    """Sequential view over the counter-based stream for one seed."""

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self.counter = 0

    def derive(self, label: str) -> "Rng":
        return Rng(derive_seed(self.seed, label))

    def next_u64(self) -> int:
        self.counter += 1
        return mix64((self.seed + self.counter * GAMMA) & MASK64)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def uniforms(self, shape) -> np.ndarray:
        """Array of uniforms, bit-identical to repeated uniform() calls."""
        n = int(np.prod(shape)) if not np.isscalar(shape) else int(shape)
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            states = np.uint64(self.seed) + idx * np.uint64(GAMMA)
        self.counter += n
        u = (_mix64_array(states) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return u.reshape(shape) if not np.isscalar(shape) else u

    def uniform_range(self, low: float, high: float, shape) -> np.ndarray:
        return low + (high - low) * self.uniforms(shape)

    def normals(self, shape) -> np.ndarray:
        """Standard normals via Box-Muller on consecutive uniform pairs."""
        n = int(np.prod(shape)) if not np.isscalar(shape) else int(shape)
        m = (n + 1) // 2
        u1 = self.uniforms(m)
        u2 = self.uniforms(m)
        r = np.sqrt(-2.0 * np.log1p(-u1))  # 1-u1 in (0,1], log finite
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return z.reshape(shape) if not np.isscalar(shape) else z

    def shuffle_index(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) (Fisher-Yates)."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
