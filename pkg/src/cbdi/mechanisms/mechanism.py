"""Levy-Khintchine mechanisms and their (Sigma, Phi) decompositions."""

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
import math

import mpmath
import numpy as np
from scipy import optimize, special

from cbdi.errors import InvalidLevyMeasure, NegativeParameter
from cbdi.mechanisms.jumps import (
    FiniteAtoms,
    JumpMeasure,
    NullMeasure,
    PiecewiseMeasure,
    StableTail,
    Superposition,
    Truncated,
    check_levy_integrability,
    stable_intensity_for_power,
)

ZERO_BRACKET_LIMIT = 1e12


@dataclass(frozen=True)
class PowerLaw:
    """f(x) ~ coef * x**exponent * log_factor**log_power at the stated end.

    The log factor is log(x) at infinity and log(1/x) at zero.
    """

    coef: float
    exponent: float
    log_power: int = 0


# -- decomposition parts ----------------------------------------------------


def _positive(x):
    x = np.asarray(x, dtype=float)
    return x, x > 0


@dataclass(frozen=True)
class SigmaPart:
    """Sigma(x) = a x^2 + d x + int (e^{-ux} - 1 + ux) eta(du)."""

    diffusion: float = 0.0
    drift: float = 0.0
    measure: PiecewiseMeasure = field(default_factory=PiecewiseMeasure)

    def __post_init__(self):
        if self.diffusion < 0 or self.drift < 0:
            raise NegativeParameter("Sigma part needs a >= 0 and d >= 0")
        check_levy_integrability(self.measure)
        for seg in self.measure.segments:
            if math.isinf(seg.hi) and seg.index <= 1.0:
                raise InvalidLevyMeasure("Sigma part measure needs a finite first moment at infinity")

    @property
    def is_zero(self):
        return self.diffusion == 0 and self.drift == 0 and self.measure.is_zero

    def evaluate(self, x):
        x, pos = _positive(x)
        out = np.zeros(x.shape)
        xp = x[pos]
        out[pos] = self.diffusion * xp**2 + self.drift * xp + self.measure.compensated(xp)
        return out

    def derivative(self, x):
        x, pos = _positive(x)
        out = np.full(x.shape, self.slope_at_zero())
        xp = x[pos]
        out[pos] = 2 * self.diffusion * xp + self.drift + self.measure.u_bernstein(xp)
        return out

    def second_derivative(self, x):
        x, pos = _positive(x)
        out = np.full(x.shape, np.inf)
        xp = x[pos]
        out[pos] = 2 * self.diffusion + self.measure.u2_exp(xp)
        return out

    def slope_at_zero(self):
        """Sigma'(0+) = d, since u (1 - e^{-ux}) -> 0 under a finite first moment at infinity."""
        return self.drift

    def at_infinity(self):
        """Leading power law of Sigma at infinity, or None when Sigma vanishes."""
        if self.diffusion > 0:
            return PowerLaw(self.diffusion, 2.0)
        small = self.measure.small_jump_tail()
        if small is not None and small[1] > 1.0:
            k, s = small
            return PowerLaw(k * special.gamma(2.0 - s) / (s - 1.0), s)
        if small is not None and small[1] == 1.0:
            return PowerLaw(small[0], 1.0, 1)
        slope = self.drift + self.measure.moment(1.0)
        if slope > 0:
            return PowerLaw(slope, 1.0)
        return None

    def at_zero(self):
        if self.drift > 0:
            return PowerLaw(self.drift, 1.0)
        large = self.measure.large_jump_tail()
        if large is not None and large[1] < 2.0:
            k, s = large
            return PowerLaw(k * s * special.gamma(-s), s)
        if large is not None and large[1] == 2.0:
            return PowerLaw(large[0], 2.0, 1)
        curvature = self.diffusion + 0.5 * self.measure.moment(2.0)
        return PowerLaw(curvature, 2.0) if curvature > 0 else None

    def evaluate_complex(self, s):
        """Sigma at complex arguments with Re s > 0 or on a Talbot contour."""
        s = np.asarray(s, dtype=complex)
        out = self.diffusion * s**2 + self.drift * s
        for pos, mass in self.measure.atoms:
            out = out + mass * (np.exp(-pos * s) - 1.0 + pos * s)
        for seg in self.measure.segments:
            out = out + _segment_complex(seg, s, "comp")
        return out


@dataclass(frozen=True)
class PhiPart:
    """Phi(x) = beta x + int (1 - e^{-ux}) nu(du) + lambda."""

    drift: float = 0.0
    measure: PiecewiseMeasure = field(default_factory=PiecewiseMeasure)
    killing: float = 0.0

    def __post_init__(self):
        if self.drift < 0 or self.killing < 0:
            raise NegativeParameter("Phi part needs beta >= 0 and lambda >= 0")
        check_levy_integrability(self.measure)
        for seg in self.measure.segments:
            if seg.lo == 0.0 and seg.index >= 1.0:
                raise InvalidLevyMeasure("Phi part measure needs finite variation near zero")

    @property
    def is_zero(self):
        return self.drift == 0 and self.killing == 0 and self.measure.is_zero

    def evaluate(self, x):
        x, pos = _positive(x)
        out = np.full(x.shape, float(self.killing))
        xp = x[pos]
        out[pos] += self.drift * xp + self.measure.bernstein(xp)
        return out

    def derivative(self, x):
        x, pos = _positive(x)
        out = np.full(x.shape, self.slope_at_zero())
        xp = x[pos]
        out[pos] = self.drift + self.measure.u_exp(xp)
        return out

    def second_derivative(self, x):
        x, pos = _positive(x)
        out = np.full(x.shape, -self.measure.moment(2.0))
        xp = x[pos]
        out[pos] = -self.measure.u2_exp(xp)
        return out

    def slope_at_zero(self):
        """Phi'(0+), possibly inf."""
        return self.drift + self.measure.moment(1.0)

    def at_zero(self):
        """Leading power law of Phi at zero, or None when Phi vanishes."""
        if self.killing > 0:
            return PowerLaw(self.killing, 0.0)
        slope = self.slope_at_zero()
        if math.isfinite(slope):
            return PowerLaw(slope, 1.0) if slope > 0 else None
        k, s = self.measure.large_jump_tail()
        if s < 1.0:
            return PowerLaw(k * special.gamma(1.0 - s), s)
        return PowerLaw(k, 1.0, 1)

    def at_infinity(self):
        if self.drift > 0:
            return PowerLaw(self.drift, 1.0)
        small = self.measure.small_jump_tail()
        if small is not None and small[1] > 0:
            k, s = small
            return PowerLaw(k * special.gamma(1.0 - s), s)
        if small is not None:
            return PowerLaw(small[0], 0.0, 1)
        limit = self.killing + self.measure.total_mass()
        return PowerLaw(limit, 0.0) if limit > 0 else None

    def evaluate_complex(self, s):
        s = np.asarray(s, dtype=complex)
        out = self.killing + self.drift * s
        for pos, mass in self.measure.atoms:
            out = out + mass * (1.0 - np.exp(-pos * s))
        for seg in self.measure.segments:
            out = out + _segment_complex(seg, s, "bern")
        return out


def _segment_complex(seg, s, kind):
    """Segment integral at complex s; closed form on the full range, mpmath otherwise."""
    if seg.full_range:
        p = seg.index
        if kind == "comp":
            return seg.coef * special.gamma(-p) * s**p
        return -seg.coef * special.gamma(-p) * s**p

    def one(z):
        z = mpmath.mpc(z)
        if kind == "comp":
            f = lambda u: (mpmath.exp(-u * z) - 1 + u * z) * seg.coef * u ** (-1 - seg.index)
        else:
            f = lambda u: (1 - mpmath.exp(-u * z)) * seg.coef * u ** (-1 - seg.index)
        hi = mpmath.inf if math.isinf(seg.hi) else seg.hi
        return complex(mpmath.quad(f, [seg.lo, hi]))

    return np.vectorize(one, otypes=[complex])(s)


@dataclass(frozen=True)
class Decomposition:
    """Psi = Sigma - Phi."""

    sigma: SigmaPart
    phi: PhiPart

    def evaluate(self, x):
        return self.sigma.evaluate(x) - self.phi.evaluate(x)

    @property
    def diffusion(self):
        return self.sigma.diffusion

    @property
    def killing(self):
        return self.phi.killing


# -- mechanisms -------------------------------------------------------------


class MechanismClass(Enum):
    SUBCRITICAL = "Subcritical"
    CRITICAL = "Critical"
    SUPERCRITICAL_CHANGING_SIGN = "SupercriticalChangingSign"
    IMMORTAL = "Immortal"


@dataclass(frozen=True)
class Classification:
    kind: MechanismClass
    largest_zero: float


@dataclass(frozen=True)
class Mechanism:
    """Psi(x) = a x^2 - gamma x - lambda + int (e^{-ux} - 1 + ux 1_{u<=1}) pi(du)."""

    jumps: JumpMeasure = field(default_factory=NullMeasure)
    diffusion: float = 0.0
    drift: float = 0.0
    killing: float = 0.0

    def __post_init__(self):
        if self.diffusion < 0:
            raise NegativeParameter(f"diffusion coefficient {self.diffusion} < 0")
        if self.killing < 0:
            raise NegativeParameter(f"killing rate {self.killing} < 0")
        check_levy_integrability(self.measure)

    @cached_property
    def measure(self):
        return self.jumps.pieces()

    @cached_property
    def canonical(self):
        return canonical_decomposition(self)

    @cached_property
    def analytic(self):
        return analytic_decomposition(self)

    def __call__(self, x):
        return evaluate(self, x)

    def describe(self):
        return {
            "diffusion": self.diffusion,
            "drift": self.drift,
            "killing": self.killing,
            "jumps": self.jumps.describe(),
        }


def make_mechanism(jumps=None, a=0.0, gamma=0.0, lam=0.0):
    """Build and validate a mechanism from its Levy-Khintchine quadruplet."""
    m = Mechanism(jumps if jumps is not None else NullMeasure(), float(a), float(gamma), float(lam))
    grid = np.geomspace(1e-3, 1e3, 25)
    values = evaluate(m, grid)
    # spot check of convexity on the grid
    slopes = np.diff(values) / np.diff(grid)
    if np.any(np.diff(slopes) < -1e-8 * (1.0 + np.abs(slopes[1:]))):
        raise InvalidLevyMeasure("mechanism failed the convexity spot check")
    return m


def power_mechanism(terms):
    """Psi(x) = sum of coef * x**exponent over (coef, exponent) pairs.

    Admissible terms: exponent 2 with coef >= 0, exponent in (1, 2) with
    coef > 0, exponent 1 with any coef, exponent in (0, 1) with coef < 0,
    exponent 0 with coef <= 0.
    """
    diffusion, gamma, killing = 0.0, 0.0, 0.0
    parts = []
    for coef, exponent in terms:
        coef, exponent = float(coef), float(exponent)
        if coef == 0:
            continue
        if exponent == 2.0 and coef > 0:
            diffusion += coef
        elif 1.0 < exponent < 2.0 and coef > 0:
            c = stable_intensity_for_power(coef, exponent)
            parts.append(StableTail(c, exponent))
            gamma -= c / (exponent - 1.0)
        elif exponent == 1.0:
            gamma -= coef
        elif 0.0 < exponent < 1.0 and coef < 0:
            c = stable_intensity_for_power(-coef, exponent)
            parts.append(StableTail(c, exponent))
            gamma += c / (1.0 - exponent)
        elif exponent == 0.0 and coef < 0:
            killing -= coef
        else:
            raise InvalidLevyMeasure(f"term {coef} * x^{exponent} is not of Levy-Khintchine type")
    if not parts:
        jumps = NullMeasure()
    elif len(parts) == 1:
        jumps = parts[0]
    else:
        jumps = Superposition(tuple(parts))
    return Mechanism(jumps, diffusion, gamma, killing)


def evaluate(m, x):
    """Psi(x), elementwise for x >= 0."""
    if isinstance(m, Decomposition):
        return m.evaluate(x)
    return m.analytic.evaluate(x)


def derivative(m, x):
    d = m if isinstance(m, Decomposition) else m.analytic
    return d.sigma.derivative(x) - d.phi.derivative(x)


def second_derivative(m, x):
    d = m if isinstance(m, Decomposition) else m.analytic
    return d.sigma.second_derivative(x) - d.phi.second_derivative(x)


def derivative_at_zero(m):
    """Psi'(0+) = -gamma - int_{(1, inf)} u pi(du), possibly -inf."""
    if isinstance(m, Decomposition):
        return m.sigma.slope_at_zero() - m.phi.slope_at_zero()
    return -m.drift - m.measure.moment(1.0, 1.0, math.inf)


def canonical_decomposition(m):
    """eta = pi on (0, 1], d = gamma^-, nu = pi on (1, inf), beta = gamma^+."""
    sigma = SigmaPart(m.diffusion, max(-m.drift, 0.0), m.measure.restrict(0.0, 1.0))
    phi = PhiPart(max(m.drift, 0.0), m.measure.restrict(1.0, math.inf), m.killing)
    return Decomposition(sigma, phi)


def analytic_decomposition(m):
    """Decomposition that keeps full-range stable pieces whole.

    A full-range stable segment of index in (1, 2) goes entirely to Sigma and
    one of index in (0, 1) entirely to Phi, so pure power mechanisms split
    into pure power parts.  Everything else is split at 1 as in the canonical
    form.  The leftover linear coefficient goes to whichever side keeps it
    nonnegative.
    """
    linear = -m.drift
    eta_segments, nu_segments = [], []
    for seg in m.measure.segments:
        if seg.full_range and 1.0 < seg.index < 2.0:
            eta_segments.append(seg)
            linear -= seg.coef / (seg.index - 1.0)
        elif seg.full_range and 0.0 < seg.index < 1.0:
            nu_segments.append(seg)
            linear += seg.coef / (1.0 - seg.index)
        else:
            low, high = seg.clip(0.0, 1.0), seg.clip(1.0, math.inf)
            if low is not None:
                eta_segments.append(low)
            if high is not None:
                nu_segments.append(high)
    eta_atoms = tuple((u, w) for u, w in m.measure.atoms if u <= 1.0)
    nu_atoms = tuple((u, w) for u, w in m.measure.atoms if u > 1.0)
    sigma = SigmaPart(m.diffusion, max(linear, 0.0), PiecewiseMeasure(tuple(eta_segments), eta_atoms))
    phi = PhiPart(max(-linear, 0.0), PiecewiseMeasure(tuple(nu_segments), nu_atoms), m.killing)
    return Decomposition(sigma, phi)


def largest_zero(m):
    """sup{x >= 0 : Psi(x) <= 0}, found by convexity-aware bracketing."""
    d = m if isinstance(m, Decomposition) else m.analytic
    psi = lambda x: float(d.evaluate(np.array([x]))[0])
    if d.phi.killing == 0 and derivative_at_zero(m) >= 0:
        return 0.0
    lo, hi = 0.0, 1.0
    if psi(hi) > 0:
        # Psi < 0 just right of zero; find such a point so the bracket is strict
        lo = hi
        while psi(lo) >= 0:
            lo *= 0.25
            if lo < 1e-300:
                return 0.0
    while psi(hi) <= 0:
        lo = hi
        if hi >= ZERO_BRACKET_LIMIT:
            slope = float(d.sigma.derivative(np.array([hi]))[0] - d.phi.derivative(np.array([hi]))[0])
            if slope > 0:
                # convexity: the tangent at hi crosses zero beyond the root
                hi = hi - psi(hi) / slope
                break
            if _sigma_dominates(d):
                hi *= 4.0
                if hi > 1e300:
                    return math.inf
                continue
            return math.inf
        hi *= 4.0
    return optimize.brentq(psi, lo, hi, xtol=1e-300, rtol=1e-12, maxiter=500)


def _sigma_dominates(d):
    """True when Sigma grows strictly faster than Phi at infinity."""
    s, p = d.sigma.at_infinity(), d.phi.at_infinity()
    if s is None:
        return False
    if p is None:
        return True
    return (s.exponent, s.log_power) > (p.exponent, p.log_power)


def classify_mechanism(m):
    rho = largest_zero(m)
    if math.isinf(rho):
        kind = MechanismClass.IMMORTAL
    elif rho > 0:
        kind = MechanismClass.SUPERCRITICAL_CHANGING_SIGN
    elif derivative_at_zero(m) > 0:
        kind = MechanismClass.SUBCRITICAL
    else:
        kind = MechanismClass.CRITICAL
    return Classification(kind, rho)


def truncate(m, n):
    """Mechanism whose jumps above n, and the killing, become jumps of size n.

    At n = 1 the folded atom sits on the compensation boundary, so the drift
    is raised by its mass to keep it uncompensated.
    """
    if n < 1:
        raise InvalidLevyMeasure("truncation level must be at least 1")
    jumps = Truncated(m.jumps, float(n), m.killing)
    gamma = m.drift
    if n == 1:
        gamma += float(m.measure.tail(1.0)) + m.killing + sum(w for u, w in m.measure.atoms if u == 1.0)
    return Mechanism(jumps, m.diffusion, gamma, 0.0)


def truncated_decomposition(m, n):
    """Canonical Sigma together with the truncated Phi^n."""
    canon = canonical_decomposition(m)
    mass = float(m.measure.tail(n)) + m.killing + sum(w for u, w in m.measure.atoms if u == n)
    nu = m.measure.restrict(1.0, n)
    nu = PiecewiseMeasure(nu.segments, tuple((u, w) for u, w in nu.atoms if u < n))
    if n == 1:
        nu = PiecewiseMeasure()
    if mass > 0:
        nu = PiecewiseMeasure(nu.segments, nu.atoms + ((float(n), mass),))
    return Decomposition(canon.sigma, PhiPart(canon.phi.drift, nu, 0.0))


def shift(m, c):
    """Psi(x) - c x."""
    return Mechanism(m.jumps, m.diffusion, m.drift + c, m.killing)


# -- convenient constructors ------------------------------------------------


def pure_sigma(coef, exponent):
    """Decomposition with Sigma = coef * x**exponent (exponent in (1, 2]) and Phi = 0."""
    return Decomposition(_power_sigma(coef, exponent), PhiPart())


def pure_phi(coef, exponent):
    """Decomposition with Sigma = 0 and Phi = coef * x**exponent (exponent in [0, 1])."""
    return Decomposition(SigmaPart(), _power_phi(coef, exponent))


def _power_sigma(coef, exponent):
    if exponent == 2.0:
        return SigmaPart(diffusion=coef)
    if exponent == 1.0:
        return SigmaPart(drift=coef)
    c = stable_intensity_for_power(coef, exponent)
    return SigmaPart(measure=StableTail(c, exponent).pieces())


def _power_phi(coef, exponent):
    if exponent == 0.0:
        return PhiPart(killing=coef)
    if exponent == 1.0:
        return PhiPart(drift=coef)
    c = stable_intensity_for_power(coef, exponent)
    return PhiPart(measure=StableTail(c, exponent).pieces())


def power_decomposition(sigma_terms=(), phi_terms=()):
    """Sigma and Phi given as sums of power laws coef * x**exponent."""
    sigma, phi = SigmaPart(), PhiPart()
    for coef, exponent in sigma_terms:
        part = _power_sigma(float(coef), float(exponent))
        sigma = SigmaPart(
            sigma.diffusion + part.diffusion, sigma.drift + part.drift, sigma.measure.plus(part.measure)
        )
    for coef, exponent in phi_terms:
        part = _power_phi(float(coef), float(exponent))
        phi = PhiPart(phi.drift + part.drift, phi.measure.plus(part.measure), phi.killing + part.killing)
    return Decomposition(sigma, phi)


def as_decomposition(m, kind="analytic"):
    """Mechanism or Decomposition to a Decomposition."""
    if isinstance(m, Decomposition):
        return m
    if kind == "canonical":
        return m.canonical
    return m.analytic


def atoms(positions, masses):
    return FiniteAtoms(tuple(positions), tuple(masses))
