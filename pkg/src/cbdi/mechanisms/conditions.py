"""Finite / infinite / inconclusive tests for the integral conditions.

    H1    int_0^1 du / Phi(u)          (infinite: no explosion)
    H2    int_1^inf du / Sigma(u)      (infinite: no extinction)
    JI    int^inf (1 + u tail(u)) / Psi_hat(u) du, tail of the branching jumps
    GREY  int^inf du / Psi(u) beyond the largest zero
    DYNKIN int_0 du / (-Psi(u)) near zero
    POTENTIAL_AT_0     int_1^inf u(z) / z dz with u the potential density of Phi
    SCALE_AT_INFINITY  int_0^1 W(z) / z dz with W the scale function of Sigma

H1, H2 and JI are decided from the leading power laws at the singular end.
GREY and DYNKIN read the local log-log slope of Psi itself and the last two
read it from the potential density or scale function, so each of them is an
independent route to the same verdict as H2 or H1.
"""

from dataclasses import dataclass
from enum import Enum
import math

import numpy as np
from scipy import integrate

from cbdi.errors import DegenerateMechanism, NoDensityKnown
from cbdi.mechanisms.mechanism import as_decomposition, largest_zero

# Distance from the critical exponent below which a numeric slope is not trusted,
# and the width inside which it is read as exactly critical (1/z integrand).
SLOPE_MARGIN = 0.06
FLAT_SLOPE = 2e-3


class Verdict(Enum):
    FINITE = "Finite"
    INFINITE = "Infinite"
    INCONCLUSIVE = "Inconclusive"


class Condition(Enum):
    H1 = "H1"
    H2 = "H2"
    JI = "JI"
    GREY = "Grey"
    DYNKIN = "Dynkin"
    POTENTIAL_AT_0 = "PotentialAt0"
    SCALE_AT_INFINITY = "ScaleAtInfinity"


@dataclass(frozen=True)
class Trichotomy:
    verdict: Verdict
    value: float = None
    reason: str = ""
    method: str = "exponent"

    @property
    def finite(self):
        return self.verdict is Verdict.FINITE

    @property
    def infinite(self):
        return self.verdict is Verdict.INFINITE

    @property
    def decided(self):
        return self.verdict is not Verdict.INCONCLUSIVE


def _decide(exponent, log_power, critical, finite_above, what):
    """Integrability of 1 / (x^exponent log^log_power) at the singular end.

    finite_above says whether exponents beyond the critical one integrate.
    """
    if exponent == critical:
        if log_power == 0:
            return Trichotomy(Verdict.INFINITE, math.inf, f"{what} is exactly linear: logarithmic divergence")
        return Trichotomy(
            Verdict.INCONCLUSIVE,
            reason=f"{what} has the critical exponent {critical} with a logarithmic correction",
        )
    finite = (exponent > critical) == finite_above
    return Trichotomy(Verdict.FINITE if finite else Verdict.INFINITE, None, f"{what} ~ x^{exponent:g}")


def integral_condition(kind, target, dual=None):
    """Decide one integral condition.

    target is a Mechanism or Decomposition; dual is the interaction mechanism
    and is only used by JI.
    """
    kind = Condition(kind) if not isinstance(kind, Condition) else kind
    if kind is Condition.H1:
        return _h1(as_decomposition(target).phi)
    if kind is Condition.H2:
        return _h2(as_decomposition(target).sigma)
    if kind is Condition.JI:
        if dual is None:
            raise DegenerateMechanism("JI needs the interaction mechanism")
        return _jump_integrability(target, dual)
    if kind is Condition.GREY:
        return _grey(target)
    if kind is Condition.DYNKIN:
        return _dynkin(target)
    if kind is Condition.POTENTIAL_AT_0:
        return _potential_at_zero(as_decomposition(target).phi)
    return _scale_at_infinity(as_decomposition(target).sigma)


def _h1(phi):
    if phi.is_zero:
        return Trichotomy(Verdict.INFINITE, math.inf, "Phi vanishes identically")
    law = phi.at_zero()
    result = _decide(law.exponent, law.log_power, 1.0, finite_above=False, what="Phi near 0")
    if result.finite:
        cut = 1e-8
        body = integrate.quad(lambda u: 1.0 / float(phi.evaluate(np.array([u]))[0]), cut, 1.0, limit=200)[0]
        tail = cut ** (1 - law.exponent) / (law.coef * (1 - law.exponent))
        result = Trichotomy(Verdict.FINITE, body + tail, result.reason)
    return result


def _h2(sigma):
    if sigma.is_zero:
        return Trichotomy(Verdict.INFINITE, math.inf, "Sigma vanishes identically")
    law = sigma.at_infinity()
    result = _decide(law.exponent, law.log_power, 1.0, finite_above=True, what="Sigma at infinity")
    if result.finite:
        cut = 1e8
        body = integrate.quad(
            lambda s: math.exp(s) / float(sigma.evaluate(np.array([math.exp(s)]))[0]), 0.0, math.log(cut), limit=200
        )[0]
        tail = cut ** (1 - law.exponent) / (law.coef * (law.exponent - 1))
        result = Trichotomy(Verdict.FINITE, body + tail, result.reason)
    return result


def _interaction_at_infinity(dual):
    """Leading power law of Psi_hat at infinity, which must be positive."""
    d = as_decomposition(dual)
    s, p = d.sigma.at_infinity(), d.phi.at_infinity()
    if s is None:
        raise DegenerateMechanism("competition part vanishes: Psi_hat is not eventually positive")
    if p is None or (s.exponent, s.log_power) > (p.exponent, p.log_power):
        return s
    if (s.exponent, s.log_power) == (p.exponent, p.log_power) and s.coef > p.coef:
        return type(s)(s.coef - p.coef, s.exponent, s.log_power)
    raise DegenerateMechanism("cooperation dominates competition: Psi_hat is eventually negative")


def _jump_integrability(branching, dual):
    denom = _interaction_at_infinity(dual)
    d = as_decomposition(branching)
    tail = d.phi.measure.plus(d.sigma.measure).large_jump_tail()
    growth = 0.0
    if tail is not None and tail[1] < 1.0:
        growth = 1.0 - tail[1]
    exponent = denom.exponent - growth
    log_power = denom.log_power
    result = _decide(exponent, log_power, 1.0, finite_above=True, what="integrand denominator")
    return Trichotomy(result.verdict, None, result.reason)


# -- numeric local-slope routes ----------------------------------------------


def _local_slope(f, points):
    """Log-log slope of f between the last two points."""
    values = np.array([f(p) for p in points])
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        return None
    return math.log(values[-1] / values[-2]) / math.log(points[-1] / points[-2])


def _slope_verdict(slope, critical, finite_above, what):
    if slope is None:
        return Trichotomy(Verdict.INCONCLUSIVE, reason=f"{what} is not positive on the probe points", method="slope")
    if abs(slope - critical) < FLAT_SLOPE:
        return Trichotomy(
            Verdict.INFINITE, math.inf, f"{what} local slope {slope:.4f} is critical without drift", method="slope"
        )
    if abs(slope - critical) < SLOPE_MARGIN:
        return Trichotomy(
            Verdict.INCONCLUSIVE, reason=f"{what} local slope {slope:.4f} is at the critical value", method="slope"
        )
    finite = (slope > critical) == finite_above
    return Trichotomy(
        Verdict.FINITE if finite else Verdict.INFINITE, None, f"{what} local slope {slope:.4f}", method="slope"
    )


def _grey(mechanism):
    d = as_decomposition(mechanism)
    rho = largest_zero(d)
    if math.isinf(rho):
        return Trichotomy(Verdict.INFINITE, math.inf, "Psi never becomes positive", method="slope")
    start = max(1.0, 10 * rho)
    points = np.array([start * 1e10, start * 1e12])
    slope = _local_slope(lambda u: float(d.evaluate(np.array([u]))[0]), points)
    return _slope_verdict(slope, 1.0, True, "Psi at infinity")


def _dynkin(mechanism):
    d = as_decomposition(mechanism)
    if d.phi.is_zero:
        return Trichotomy(Verdict.INFINITE, math.inf, "Psi is nonnegative", method="slope")
    if d.phi.killing > 0:
        return Trichotomy(Verdict.FINITE, None, "Psi(0) < 0", method="slope")
    points = np.array([1e-10, 1e-12])
    slope = _local_slope(lambda u: -float(d.evaluate(np.array([u]))[0]), points)
    return _slope_verdict(slope, 1.0, False, "-Psi near 0")


def _potential_at_zero(phi):
    from cbdi.potential_theory import potential_density

    if phi.is_zero:
        return Trichotomy(Verdict.INFINITE, math.inf, "Phi vanishes identically (same verdict as H1)", "slope")
    if phi.killing > 0:
        return Trichotomy(Verdict.FINITE, None, "Phi(0) > 0: finite potential mass (same verdict as H1)", "slope")
    try:
        density = potential_density(phi)
    except NoDensityKnown as exc:
        return Trichotomy(Verdict.INCONCLUSIVE, reason=str(exc), method="slope")
    points = np.array([1e6, 1e8])
    slope = _local_slope(lambda z: float(density(np.array([z]))[0]), points)
    # u(z) ~ z^(alpha - 1); the integral of u(z)/z converges iff the slope is below 0
    verdict = _slope_verdict(slope, 0.0, False, "potential density at infinity")
    return _as_condition_of(verdict, "H1")


def _scale_at_infinity(sigma):
    from cbdi.potential_theory import scale_function

    if sigma.is_zero:
        return Trichotomy(Verdict.INFINITE, math.inf, "Sigma vanishes identically (same verdict as H2)", "slope")
    scale = scale_function(sigma)
    points = np.array([1e-6, 1e-8])
    slope = _local_slope(lambda z: float(scale(np.array([z]))[0]), points)
    # W(z) ~ z^beta near 0; the integral of W(z)/z converges iff beta > 0
    verdict = _slope_verdict(slope, 0.0, True, "scale function near 0")
    return _as_condition_of(verdict, "H2")


def _as_condition_of(verdict, name):
    """The transform integral is finite exactly when the original integral is."""
    return Trichotomy(verdict.verdict, verdict.value, f"{verdict.reason} (same verdict as {name})", verdict.method)
