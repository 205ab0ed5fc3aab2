"""Counter-based random numbers: every draw is a hash of its coordinates.

A draw is addressed by (seed, path, channel, step, index), so any path can be
replayed alone, coupled runs see identical noise, and the result does not
depend on how paths are spread over threads.
"""

import math

import numba
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX_A = np.uint64(0xBF58476D1CE4E5B9)
MIX_B = np.uint64(0x94D049BB133111EB)
SHIFT_53 = 1.0 / 9007199254740992.0

# noise channels
BROWNIAN = 0
COUNTS = 1
MARKS = 2
KILLING = 3
BRIDGE = 4
EXPONENTIAL = 5


@numba.njit(cache=True, inline="always")
def mix(x):
    z = x + GOLDEN
    z = (z ^ (z >> np.uint64(30))) * MIX_A
    z = (z ^ (z >> np.uint64(27))) * MIX_B
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def stream_key(seed, path, channel):
    h = mix(np.uint64(seed))
    h = mix(h ^ np.uint64(path))
    return mix(h ^ np.uint64(channel))


@numba.njit(cache=True, inline="always")
def uniform(key, step, index):
    """Uniform on the open interval (0, 1)."""
    h = mix(mix(key ^ np.uint64(step)) ^ np.uint64(index))
    return (float(h >> np.uint64(11)) + 0.5) * SHIFT_53


@numba.njit(cache=True)
def normal_quantile(p):
    """Inverse standard normal CDF (Wichura's AS241, about 1e-16 relative)."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r
                   + 45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r
                + 133.14166789178437745) * r + 3.387132872796366608)
        den = (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r
                   + 21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r
                + 42.313330701600911252) * r + 1.0)
        return q * num / den
    r = p if q < 0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
                   + 1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r
                + 4.6303378461565452959) * r + 1.42343711074968357734)
        den = (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r
                   + 0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r
                + 2.05319162663775882187) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 0.0012426609473880784386) * r + 0.026532189526576123093) * r + 0.29656057182850489123) * r
                 + 1.7848265399172913358) * r + 5.4637849111641143699) * r + 6.6579046435011037772)
        den = (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
                    + 1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r + 0.0148753612908506148525) * r
                 + 0.13692988092273580531) * r + 0.59983220655588793769) * r + 1.0)
    value = num / den
    return -value if q < 0 else value


@numba.njit(cache=True)
def normal(key, step, index):
    return normal_quantile(uniform(key, step, index))


@numba.njit(cache=True)
def exponential(key, step, index):
    return -math.log(uniform(key, step, index))


POISSON_CHUNK = 30.0


@numba.njit(cache=True)
def poisson(key, step, index, mean):
    """Poisson count by inverse CDF, in chunks of mean at most POISSON_CHUNK.

    Chunk c uses the draw index index * 4096 + c.
    """
    total = 0
    chunk = 0
    remaining = mean
    while remaining > 0.0:
        m = min(remaining, POISSON_CHUNK)
        u = uniform(key, step, index * 4096 + chunk)
        p = math.exp(-m)
        cdf = p
        k = 0
        while u > cdf and k < 1000:
            k += 1
            p *= m / k
            cdf += p
        total += k
        remaining -= m
        chunk += 1
    return total
