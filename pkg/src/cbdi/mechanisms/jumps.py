"""Jump measures on (0, inf).

Every family flattens to a PiecewiseMeasure: a finite list of power segments
(density coef * u**(-1-index) on (lo, hi]) plus point masses.  All integrals
a mechanism needs are closed-form on that representation, so the families
differ only in how they build their pieces.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import special

from cbdi.errors import InvalidLevyMeasure, NegativeParameter
from cbdi.numerics import kernel_integral, power_integral


@dataclass(frozen=True)
class PowerSegment:
    """Density coef * u**(-1-index) on the interval (lo, hi]."""

    coef: float
    index: float
    lo: float
    hi: float

    @property
    def full_range(self):
        return self.lo == 0.0 and math.isinf(self.hi)

    def clip(self, lo, hi):
        new_lo, new_hi = max(self.lo, lo), min(self.hi, hi)
        if new_hi <= new_lo:
            return None
        return PowerSegment(self.coef, self.index, new_lo, new_hi)


@dataclass(frozen=True)
class PiecewiseMeasure:
    """Finite sum of power segments and atoms."""

    segments: tuple = ()
    atoms: tuple = ()  # (position, mass) pairs

    # -- structure --------------------------------------------------------

    @property
    def is_zero(self):
        return not self.segments and not self.atoms

    def restrict(self, lo, hi):
        """The measure restricted to (lo, hi]."""
        segs = tuple(s for s in (seg.clip(lo, hi) for seg in self.segments) if s is not None)
        atoms = tuple((u, m) for u, m in self.atoms if lo < u <= hi)
        return PiecewiseMeasure(segs, atoms)

    def plus(self, other):
        return PiecewiseMeasure(self.segments + other.segments, self.atoms + other.atoms)

    def scaled(self, factor):
        segs = tuple(PowerSegment(s.coef * factor, s.index, s.lo, s.hi) for s in self.segments)
        return PiecewiseMeasure(segs, tuple((u, m * factor) for u, m in self.atoms))

    # -- scalar functionals -----------------------------------------------

    def tail(self, u):
        """Mass of (u, inf), elementwise."""
        u = np.asarray(u, dtype=float)
        total = np.zeros(u.shape)
        for seg in self.segments:
            lo = np.maximum(u, seg.lo)
            total += seg.coef * power_integral(-seg.index, lo, np.full(u.shape, seg.hi))
        for pos, mass in self.atoms:
            total += np.where(u < pos, mass, 0.0)
        return total

    def moment(self, k, lo=0.0, hi=np.inf):
        """Integral of u**k over (lo, hi]; may be inf."""
        total = 0.0
        for seg in self.segments:
            part = seg.clip(lo, hi)
            if part is not None:
                total += part.coef * float(power_integral(k - part.index, part.lo, part.hi))
        for pos, mass in self.atoms:
            if lo < pos <= hi:
                total += mass * pos**k
        return total

    def total_mass(self):
        return self.moment(0.0)

    # -- transforms (vectorised in x > 0) ---------------------------------

    def _kernel(self, kind, shift, x):
        """Integral of kernel(u x) * u**shift against the measure."""
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape)
        for seg in self.segments:
            p = seg.index - shift
            total += seg.coef * x**p * kernel_integral(kind, p, seg.lo * x, seg.hi * x)
        for pos, mass in self.atoms:
            t = pos * x
            if kind == "exp":
                value = np.exp(-t)
            elif kind == "bern":
                value = -np.expm1(-t)
            else:
                value = _comp_atom(t)
            total += mass * pos**shift * value
        return total

    def compensated(self, x):
        """Integral of e^{-ux} - 1 + u x."""
        return self._kernel("comp", 0.0, x)

    def bernstein(self, x):
        """Integral of 1 - e^{-ux}."""
        return self._kernel("bern", 0.0, x)

    def u_bernstein(self, x):
        """Integral of u (1 - e^{-ux}); derivative of compensated()."""
        return self._kernel("bern", 1.0, x)

    def u_exp(self, x):
        """Integral of u e^{-ux}; derivative of bernstein()."""
        return self._kernel("exp", 1.0, x)

    def u2_exp(self, x):
        """Integral of u^2 e^{-ux}."""
        return self._kernel("exp", 2.0, x)

    # -- asymptotics ------------------------------------------------------

    def small_jump_tail(self):
        """(K, s) with tail(u) ~ K u**-s as u -> 0, or None for finite activity."""
        near_zero = [s for s in self.segments if s.lo == 0.0 and s.coef > 0]
        if not near_zero:
            return None
        index = max(s.index for s in near_zero)
        coef = sum(s.coef for s in near_zero if s.index == index)
        if index <= 0.0:
            # u^-1 density or lighter: infinite mass only when index == 0
            return (coef, 0.0) if index == 0.0 else None
        return coef / index, index

    def large_jump_tail(self):
        """(K, s) with tail(u) ~ K u**-s as u -> inf, or None for bounded support."""
        at_inf = [s for s in self.segments if math.isinf(s.hi) and s.coef > 0]
        if not at_inf:
            return None
        index = min(s.index for s in at_inf)
        coef = sum(s.coef for s in at_inf if s.index == index)
        return coef / index, index


def _comp_atom(t):
    """e^{-t} - 1 + t without cancellation for small t."""
    t = np.asarray(t, dtype=float)
    small = t < 1e-3
    out = np.empty(t.shape)
    ts = t[small]
    out[small] = ts * ts * (0.5 - ts / 6.0 + ts * ts / 24.0)
    tl = t[~small]
    out[~small] = np.expm1(-tl) + tl
    return out


# -- user-facing families -------------------------------------------------


class JumpMeasure:
    """Base class; subclasses build a PiecewiseMeasure."""

    def pieces(self):
        raise NotImplementedError

    def describe(self):
        raise NotImplementedError


@dataclass(frozen=True)
class NullMeasure(JumpMeasure):
    """No jumps."""

    def pieces(self):
        return PiecewiseMeasure()

    def describe(self):
        return {"family": "null"}


@dataclass(frozen=True)
class StableTail(JumpMeasure):
    """Density intensity * u**(-1-index) on (0, inf), index in (0, 2)."""

    intensity: float
    index: float

    def __post_init__(self):
        if self.intensity < 0:
            raise NegativeParameter(f"stable intensity {self.intensity} < 0")
        if not 0.0 < self.index < 2.0:
            raise InvalidLevyMeasure(f"stable index {self.index} outside (0, 2)")

    def pieces(self):
        if self.intensity == 0:
            return PiecewiseMeasure()
        return PiecewiseMeasure((PowerSegment(self.intensity, self.index, 0.0, math.inf),))

    def describe(self):
        return {"family": "stable", "intensity": self.intensity, "index": self.index}


@dataclass(frozen=True)
class FiniteAtoms(JumpMeasure):
    """Point masses masses[i] at positions[i]."""

    positions: tuple
    masses: tuple

    def __post_init__(self):
        object.__setattr__(self, "positions", tuple(float(p) for p in self.positions))
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        if len(self.positions) != len(self.masses):
            raise InvalidLevyMeasure("atom positions and masses differ in length")
        if any(p <= 0 or not math.isfinite(p) for p in self.positions):
            raise InvalidLevyMeasure("atom positions must be finite and positive")
        if any(m < 0 for m in self.masses):
            raise NegativeParameter("atom masses must be nonnegative")

    def pieces(self):
        return PiecewiseMeasure((), tuple((p, m) for p, m in zip(self.positions, self.masses) if m > 0))

    def describe(self):
        return {"family": "atoms", "positions": list(self.positions), "masses": list(self.masses)}


@dataclass(frozen=True)
class TabulatedTail(JumpMeasure):
    """Tail values on an increasing grid, log-log interpolated.

    Below the first node the tail grows like u**-index_at_zero and beyond the
    last node it decays like u**-index_at_infinity.  index_at_infinity = inf
    places the remaining mass as an atom at the last node.
    """

    grid: tuple
    tail: tuple
    index_at_zero: float
    index_at_infinity: float

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        object.__setattr__(self, "tail", tuple(float(t) for t in self.tail))
        grid, tail = np.array(self.grid), np.array(self.tail)
        if grid.size < 2 or grid.size != tail.size:
            raise InvalidLevyMeasure("tabulated tail needs at least two matching nodes")
        if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise InvalidLevyMeasure("tabulated grid must be positive and increasing")
        if np.any(tail <= 0) or np.any(np.diff(tail) > 0):
            raise InvalidLevyMeasure("tabulated tail must be positive and nonincreasing")
        if not 0.0 <= self.index_at_zero < 2.0:
            raise InvalidLevyMeasure("index at zero must lie in [0, 2)")
        if not self.index_at_infinity > 0.0:
            raise InvalidLevyMeasure("index at infinity must be positive")

    def pieces(self):
        grid, tail = self.grid, self.tail
        segs = []
        if self.index_at_zero > 0:
            s = self.index_at_zero
            segs.append(PowerSegment(s * tail[0] * grid[0] ** s, s, 0.0, grid[0]))
        for j in range(len(grid) - 1):
            s = -math.log(tail[j + 1] / tail[j]) / math.log(grid[j + 1] / grid[j])
            if s > 0:
                segs.append(PowerSegment(s * tail[j] * grid[j] ** s, s, grid[j], grid[j + 1]))
        atoms = ()
        if math.isinf(self.index_at_infinity):
            atoms = ((grid[-1], tail[-1]),)
        else:
            s = self.index_at_infinity
            segs.append(PowerSegment(s * tail[-1] * grid[-1] ** s, s, grid[-1], math.inf))
        return PiecewiseMeasure(tuple(segs), atoms)

    def describe(self):
        return {
            "family": "tabulated",
            "grid": list(self.grid),
            "tail": list(self.tail),
            "index_at_zero": self.index_at_zero,
            "index_at_infinity": self.index_at_infinity,
        }


@dataclass(frozen=True)
class Truncated(JumpMeasure):
    """Jumps larger than cap are replaced by jumps of size cap.

    extra_mass adds a further atom at cap; it carries the killing rate when a
    killed mechanism is truncated.
    """

    inner: JumpMeasure
    cap: float
    extra_mass: float = 0.0

    def __post_init__(self):
        if not (self.cap > 0 and math.isfinite(self.cap)):
            raise InvalidLevyMeasure("truncation level must be finite and positive")
        if self.extra_mass < 0:
            raise NegativeParameter("extra mass at the truncation level must be nonnegative")

    def pieces(self):
        base = self.inner.pieces()
        moved = float(base.tail(self.cap)) + self.extra_mass
        clipped = base.restrict(0.0, self.cap)
        if moved > 0:
            clipped = PiecewiseMeasure(clipped.segments, clipped.atoms + ((self.cap, moved),))
        return clipped

    def describe(self):
        return {
            "family": "truncated",
            "inner": self.inner.describe(),
            "cap": self.cap,
            "extra_mass": self.extra_mass,
        }


@dataclass(frozen=True)
class Superposition(JumpMeasure):
    """Sum of several jump measures."""

    parts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))

    def pieces(self):
        out = PiecewiseMeasure()
        for part in self.parts:
            out = out.plus(part.pieces())
        return out

    def describe(self):
        return {"family": "sum", "parts": [p.describe() for p in self.parts]}


def measure_from_description(desc):
    """Inverse of JumpMeasure.describe()."""
    family = desc.get("family")
    if family == "null":
        return NullMeasure()
    if family == "stable":
        return StableTail(float(desc["intensity"]), float(desc["index"]))
    if family == "atoms":
        return FiniteAtoms(tuple(desc["positions"]), tuple(desc["masses"]))
    if family == "tabulated":
        return TabulatedTail(
            tuple(desc["grid"]),
            tuple(desc["tail"]),
            float(desc["index_at_zero"]),
            float(desc["index_at_infinity"]),
        )
    if family == "truncated":
        return Truncated(
            measure_from_description(desc["inner"]), float(desc["cap"]), float(desc.get("extra_mass", 0.0))
        )
    if family == "sum":
        return Superposition(tuple(measure_from_description(p) for p in desc["parts"]))
    raise InvalidLevyMeasure(f"unknown jump family {family!r}")


def check_levy_integrability(measure):
    """Raise unless the integral of min(1, u^2) is finite."""
    for seg in measure.segments:
        if seg.coef < 0:
            raise InvalidLevyMeasure("segment density must be nonnegative")
        if seg.lo == 0.0 and seg.index >= 2.0:
            raise InvalidLevyMeasure("small jumps too dense: index at zero must be below 2")
        if math.isinf(seg.hi) and seg.index <= 0.0:
            raise InvalidLevyMeasure("infinite mass of large jumps")
    for pos, mass in measure.atoms:
        if mass < 0 or pos <= 0:
            raise InvalidLevyMeasure("atoms need positive positions and nonnegative masses")


def stable_intensity_for_power(coefficient, exponent):
    """Stable intensity whose full compensated or Bernstein integral is coefficient * x**exponent."""
    if 1.0 < exponent < 2.0:
        return coefficient * exponent * (exponent - 1.0) / special.gamma(2.0 - exponent)
    if 0.0 < exponent < 1.0:
        return coefficient * exponent / special.gamma(1.0 - exponent)
    raise InvalidLevyMeasure(f"no stable measure for exponent {exponent}")
