"""Counter-based seed derivation.

Every random number in the package is a pure function of a 64-bit seed and
an integer counter (site index, realization index, ...), so realizations
regenerate bit-identically in any iteration order and at any worker count.
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(x):
    """SplitMix64 finalizer applied elementwise to uint64 input.

    Wraparound modulo 2**64 is intentional; scalar input comes back scalar.
    """
    scalar = np.ndim(x) == 0
    z = np.atleast_1d(np.asarray(x, dtype=np.uint64)) + _GAMMA
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z[0] if scalar else z


def derive_seed(base_seed, index):
    """64-bit sub-stream seed for item `index` under `base_seed`."""
    b = splitmix64(np.uint64(base_seed) & np.uint64(0xFFFFFFFFFFFFFFFF))
    return int(splitmix64(b ^ np.uint64(index)))


def counter_uniforms(seed, counters):
    """Uniform [0,1) variates indexed by integer counters (vectorized)."""
    c = np.asarray(counters, dtype=np.uint64)
    b = splitmix64(np.uint64(seed) & np.uint64(0xFFFFFFFFFFFFFFFF))
    bits = splitmix64(b ^ splitmix64(c))
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / 2**53)
