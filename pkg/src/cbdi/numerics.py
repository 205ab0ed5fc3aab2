"""Special-function kernels and quadrature shared across modules.

The jump integrals of a mechanism reduce, after the substitution t = u*x,
to three kernels integrated against t**(-1-p) over an interval [T0, T1]:

    exp     e^{-t}
    bern    1 - e^{-t}
    comp    e^{-t} - 1 + t

Each is evaluated by a power series on the part of [T0, T1] inside [0, 1]
and by upper incomplete gamma functions on the part beyond 1.
"""

import math

import numpy as np
from scipy import special

SERIES_TERMS = 30

# Signed series coefficients (-1)^k / k! and the first k used by each kernel.
_SERIES_COEF = np.array([(-1.0) ** k / math.factorial(k) for k in range(SERIES_TERMS + 3)])
_KERNEL_START = {"exp": 0, "bern": 1, "comp": 2}
_KERNEL_SIGN = {"exp": 1.0, "bern": -1.0, "comp": 1.0}


def power_integral(q, lo, hi):
    """Integral of t**(q-1) over [lo, hi], elementwise.

    Stable as q -> 0, where it tends to log(hi/lo).  lo may be 0 when q > 0 and
    hi may be inf when q < 0.
    """
    lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    out = np.zeros(lo.shape)
    active = hi > lo
    if not np.any(active):
        return out
    at_zero = active & (lo == 0.0)
    at_inf = active & np.isinf(hi)
    inner = active & ~at_zero & ~at_inf
    both = at_zero & at_inf
    at_zero, at_inf = at_zero & ~both, at_inf & ~both
    out[both] = np.inf
    if np.any(at_zero):
        out[at_zero] = np.inf if q <= 0 else hi[at_zero] ** q / q
    if np.any(at_inf):
        out[at_inf] = np.inf if q >= 0 else -(lo[at_inf] ** q) / q
    if np.any(inner):
        log_ratio = np.log(hi[inner] / lo[inner])
        out[inner] = lo[inner] ** q * log_ratio * special.exprel(q * log_ratio)
    return out


def upper_gamma(s, x):
    """Upper incomplete gamma Gamma(s, x) for real s and x >= 1.

    Negative orders come from the recurrence
    Gamma(s, x) = (Gamma(s + 1, x) - x^s e^{-x}) / s started from an order in
    (0, 1] or from the exponential integral.
    """
    x = np.asarray(x, dtype=float)
    if s > 0:
        return special.gammaincc(s, x) * special.gamma(s)
    steps = int(math.ceil(-s)) if s != math.floor(s) else int(-s)
    start = s + steps
    if start == 0.0:
        value = special.exp1(x)
    else:
        value = special.gammaincc(start, x) * special.gamma(start)
    order = start
    decay = np.exp(-x)
    for _ in range(steps):
        order -= 1.0
        value = (value - x**order * decay) / order
    return value


def _series_part(kind, p, lo, hi):
    """Kernel integral over [lo, hi] inside [0, 1] by termwise power integrals."""
    total = np.zeros(lo.shape)
    for k in range(_KERNEL_START[kind], SERIES_TERMS + _KERNEL_START[kind]):
        total += _SERIES_COEF[k] * power_integral(k - p, lo, hi)
    return _KERNEL_SIGN[kind] * total


def _upper_part(kind, p, lo, hi):
    """Kernel integral over [lo, hi] inside [1, inf] via incomplete gammas."""
    gamma_lo = upper_gamma(-p, lo)
    gamma_hi = np.where(np.isinf(hi), 0.0, upper_gamma(-p, np.where(np.isinf(hi), 1.0, hi)))
    exp_part = gamma_lo - gamma_hi
    if kind == "exp":
        return exp_part
    base = power_integral(-p, lo, hi)
    if kind == "bern":
        return base - exp_part
    return exp_part - base + power_integral(1.0 - p, lo, hi)


def kernel_integral(kind, p, t_lo, t_hi):
    """Integral of kernel(t) * t**(-1-p) over [t_lo, t_hi], elementwise.

    kind is one of "exp", "bern", "comp".  Full-range integrals use the
    closed gamma-function values.
    """
    t_lo, t_hi = np.broadcast_arrays(np.asarray(t_lo, dtype=float), np.asarray(t_hi, dtype=float))
    full = (t_lo == 0.0) & np.isinf(t_hi)
    out = np.zeros(t_lo.shape)
    if np.any(full):
        out[full] = full_range_kernel(kind, p)
    rest = ~full & (t_hi > t_lo)
    if not np.any(rest):
        return out
    lo, hi = t_lo[rest], t_hi[rest]
    value = np.zeros(lo.shape)
    low_lo, low_hi = lo, np.minimum(hi, 1.0)
    low = low_hi > low_lo
    if np.any(low):
        value[low] += _series_part(kind, p, low_lo[low], low_hi[low])
    up_lo, up_hi = np.maximum(lo, 1.0), hi
    up = up_hi > up_lo
    if np.any(up):
        value[up] += _upper_part(kind, p, up_lo[up], up_hi[up])
    out[rest] = value
    return out


def full_range_kernel(kind, p):
    """Kernel integral over (0, inf); finite only on the admissible range of p."""
    if kind == "comp":
        if not 1.0 < p < 2.0:
            return np.inf
        return special.gamma(-p)
    if kind == "bern":
        if not 0.0 < p < 1.0:
            return np.inf
        return -special.gamma(-p)
    if p >= 0.0:
        return np.inf
    return special.gamma(-p)


def log_grid_integral(integrand, centre, s_min=-60.0, s_max=60.0, step=0.04):
    """Integral over (0, inf) of integrand(v) dv with v = centre * e^s.

    integrand must accept a 2-d array of v with the centres along axis 0; the
    trapezoid rule on the logarithmic scale is exponentially accurate for
    integrands that decay at both ends.
    """
    centre = np.atleast_1d(np.asarray(centre, dtype=float))
    s = np.arange(s_min, s_max + 0.5 * step, step)
    v = centre[:, None] * np.exp(s)[None, :]
    values = integrand(v) * v
    weights = np.full(s.shape, step)
    weights[0] = weights[-1] = 0.5 * step
    return values @ weights


def exact_mean(values):
    """Exactly rounded mean, independent of summation order."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        return float("nan")
    return math.fsum(values) / values.size
