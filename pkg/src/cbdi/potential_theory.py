"""Scale functions of Sigma-type parts and potential densities of Phi-type parts.

    int_0^inf e^{-qz} W(z) dz = 1 / Sigma(q)
    int_0^inf e^{-qz} u(z) dz = 1 / Phi(q)

Pure power laws have closed forms.  A drift plus finitely many atoms has an
exact renewal series for u.  Everything else is inverted numerically on a
fixed Talbot contour, with power-law bands W(z) ~ K / (z Sigma(1/z)) glued
on beyond the inversion window.
"""

from dataclasses import dataclass
import itertools
import math

import numpy as np
from scipy import special

from cbdi.errors import FiniteVariation, NoDensityKnown, NotSubcritical
from cbdi.mechanisms.mechanism import (
    Decomposition,
    Mechanism,
    PhiPart,
    SigmaPart,
    derivative_at_zero,
)
from cbdi.numerics import log_grid_integral

TALBOT_NODES = 32
REFINEMENT_TOLERANCE = 1e-6
INVERSION_WINDOW = (1e-9, 1e9)
SERIES_TERM_LIMIT = 200_000
# Relative size below which a cancelled linear coefficient is taken as zero.
ROUNDING = 1e-12
PAIR_CUT = -40.0  # log of the lower end of the check quadrature, relative to 1/q


# -- inversion -----------------------------------------------------------------


def talbot_invert(transform, t, nodes=TALBOT_NODES):
    """Fixed Talbot inversion of transform at the points t > 0."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    k = np.arange(1, nodes)
    theta = k * np.pi / nodes
    cot = 1.0 / np.tan(theta)
    r = 2.0 * nodes / (5.0 * t)
    s = r[:, None] * theta[None, :] * (cot[None, :] + 1j)
    sigma = theta + (theta * cot - 1.0) * cot
    head = 0.5 * np.exp(r * t) * np.real(transform(r.astype(complex)))
    body = np.sum(np.real(np.exp(t[:, None] * s) * transform(s) * (1.0 + 1j * sigma[None, :])), axis=1)
    return r / nodes * (head + body)


@dataclass(frozen=True)
class InversionCheck:
    accepted: bool
    worst_relative_change: float


def checked_inversion(transform, t, nodes=TALBOT_NODES):
    """Inversion with nodes and nodes // 2; accepted when they agree to 1e-6.

    The comparison runs downwards because the contour loses accuracy to
    rounding in double precision well before 2 * nodes.
    """
    fine = talbot_invert(transform, t, nodes)
    coarse = talbot_invert(transform, t, nodes // 2)
    scale = np.maximum(np.abs(fine), 1e-300)
    worst = float(np.max(np.abs(fine - coarse) / scale))
    return fine, InversionCheck(worst <= REFINEMENT_TOLERANCE, worst)


# -- parts from mechanisms -------------------------------------------------------


def sigma_form(m):
    """A (sub)critical mechanism written as a Sigma part with all jumps compensated."""
    if isinstance(m, SigmaPart):
        return m
    if isinstance(m, Decomposition):
        if m.phi.is_zero:
            return m.sigma
        raise NotSubcritical("decomposition has a nonzero Phi part")
    if m.killing > 0:
        raise NotSubcritical("killed mechanism is not (sub)critical")
    slope = derivative_at_zero(m)
    if abs(slope) <= ROUNDING * (1.0 + abs(m.drift)):
        slope = 0.0
    if not slope >= 0:
        raise NotSubcritical(f"Psi'(0+) = {slope} < 0")
    return SigmaPart(m.diffusion, slope, m.measure)


def phi_form(m):
    """An immortal mechanism -Phi written as a Phi part."""
    if isinstance(m, PhiPart):
        return m
    if isinstance(m, Decomposition):
        if m.sigma.is_zero:
            return m.phi
        raise NotSubcritical("decomposition has a nonzero Sigma part")
    if m.diffusion > 0:
        raise NotSubcritical("diffusive mechanism is not of Bernstein type")
    small_mean = m.measure.moment(1.0, 0.0, 1.0)
    beta = m.drift - small_mean
    if abs(beta) <= ROUNDING * (1.0 + abs(m.drift)):
        beta = 0.0
    if not beta >= 0:
        raise NotSubcritical("mechanism is not of Bernstein type")
    return PhiPart(max(beta, 0.0), m.measure, m.killing)


def _pure_power(part):
    """(coef, exponent) when the part is a single power law, else None."""
    if isinstance(part, SigmaPart):
        pieces = part.measure
        terms = []
        if part.diffusion > 0:
            terms.append((part.diffusion, 2.0))
        if part.drift > 0:
            terms.append((part.drift, 1.0))
        if pieces.atoms or any(not s.full_range for s in pieces.segments):
            return None
        for seg in pieces.segments:
            terms.append((seg.coef * special.gamma(-seg.index), seg.index))
    else:
        pieces = part.measure
        terms = []
        if part.killing > 0:
            terms.append((part.killing, 0.0))
        if part.drift > 0:
            terms.append((part.drift, 1.0))
        if pieces.atoms or any(not s.full_range for s in pieces.segments):
            return None
        for seg in pieces.segments:
            terms.append((-seg.coef * special.gamma(-seg.index), seg.index))
    exponents = {e for _, e in terms}
    if len(exponents) != 1:
        return None
    return sum(c for c, _ in terms), exponents.pop()


# -- scale function --------------------------------------------------------------


class ScaleFunction:
    """W with Laplace transform 1 / Sigma."""

    def __init__(self, sigma, nodes=TALBOT_NODES):
        self.sigma = sigma_form(sigma)
        law = self.sigma.at_infinity()
        if law is None:
            raise FiniteVariation("Sigma vanishes identically")
        if law.exponent <= 1.0 and law.log_power == 0:
            raise FiniteVariation("Sigma(x) / x stays bounded: finite variation")
        self.nodes = nodes
        power = _pure_power(self.sigma)
        if power is not None:
            self.mode = "closed_form"
            self.coef, self.exponent = power
        else:
            self.mode = "inversion"
            self._band_constants = self._match_bands()

    def laplace(self, q):
        return 1.0 / self.sigma.evaluate(q)

    def _band(self, z):
        return 1.0 / (z * self.sigma.evaluate(1.0 / z))

    def _invert(self, z):
        transform = lambda s: 1.0 / self.sigma.evaluate_complex(s)
        values, check = checked_inversion(transform, z, self.nodes)
        if not check.accepted:
            raise NoDensityKnown(f"scale inversion unstable (relative change {check.worst_relative_change:.2e})")
        return values

    def _match_bands(self):
        lo, hi = INVERSION_WINDOW
        ends = np.array([lo, hi])
        values = self._invert(ends)
        return values / self._band(ends)

    def __call__(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        out = np.zeros(z.shape)
        pos = z > 0
        if self.mode == "closed_form":
            beta = self.exponent - 1.0
            out[pos] = z[pos] ** beta / (self.coef * special.gamma(self.exponent))
            return out
        lo, hi = INVERSION_WINDOW
        inner = pos & (z >= lo) & (z <= hi)
        if np.any(inner):
            out[inner] = self._invert(z[inner])
        below, above = pos & (z < lo), z > hi
        if np.any(below):
            out[below] = self._band_constants[0] * self._band(z[below])
        if np.any(above):
            out[above] = self._band_constants[1] * self._band(z[above])
        return out


def scale_function(sigma, nodes=TALBOT_NODES):
    return ScaleFunction(sigma, nodes)


def scale_value(sigma, z):
    return scale_function(sigma)(z)


def exit_probability(sigma, x, y):
    """P_x(hit 0 before x + y) = W(y) / W(x + y) for the CB process of Sigma."""
    w = scale_function(sigma)
    return float(w(np.array([y]))[0] / w(np.array([x + y]))[0])


# -- potential density ------------------------------------------------------------


class PotentialDensity:
    """u with Laplace transform 1 / Phi."""

    def __init__(self, phi, nodes=TALBOT_NODES):
        self.phi = phi_form(phi)
        if self.phi.is_zero:
            raise NoDensityKnown("Phi vanishes identically")
        self.nodes = nodes
        power = _pure_power(self.phi)
        measure = self.phi.measure
        if power is not None and power[1] > 0:
            self.mode = "closed_form"
            self.coef, self.exponent = power
        elif self.phi.drift > 0 and not measure.segments:
            self.mode = "drift_series"
        elif self.phi.drift == 0 and math.isfinite(measure.total_mass()):
            raise NoDensityKnown("no drift and finite jump activity: the potential measure has an atom at 0")
        else:
            self.mode = "inversion"
            self._band_constants = self._match_bands()

    def laplace(self, q):
        return 1.0 / self.phi.evaluate(q)

    def _band(self, z):
        return 1.0 / (z * self.phi.evaluate(1.0 / z))

    def _invert(self, z):
        transform = lambda s: 1.0 / self.phi.evaluate_complex(s)
        values, check = checked_inversion(transform, z, self.nodes)
        if not check.accepted:
            raise NoDensityKnown(f"potential inversion unstable (relative change {check.worst_relative_change:.2e})")
        return values

    def _match_bands(self):
        lo, hi = INVERSION_WINDOW
        ends = np.array([lo, hi])
        return self._invert(ends) / self._band(ends)

    def _series(self, z):
        """Renewal series over atom counts: exact for drift, killing and atoms."""
        beta = self.phi.drift
        positions = np.array([u for u, _ in self.phi.measure.atoms])
        masses = np.array([w for _, w in self.phi.measure.atoms])
        total = self.phi.killing + masses.sum()
        z_max = float(z.max())
        out = np.zeros(z.shape)
        for counts, offset in _count_vectors(positions, z_max):
            n = int(sum(counts))
            log_weight = sum(k * math.log(w) - math.lgamma(k + 1) for k, w in zip(counts, masses) if k)
            gap = z - offset
            live = gap > 0
            g = gap[live]
            with np.errstate(divide="ignore"):
                log_term = log_weight + n * np.log(g) - total * g / beta - (n + 1) * math.log(beta)
            out[live] += np.exp(log_term)
        return out

    def __call__(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        out = np.zeros(z.shape)
        pos = z > 0
        if self.mode == "closed_form":
            out[pos] = z[pos] ** (self.exponent - 1.0) / (self.coef * special.gamma(self.exponent))
            return out
        if self.mode == "drift_series":
            out[pos] = self._series(z[pos])
            return out
        lo, hi = INVERSION_WINDOW
        inner = pos & (z >= lo) & (z <= hi)
        if np.any(inner):
            out[inner] = self._invert(z[inner])
        below, above = pos & (z < lo), z > hi
        if np.any(below):
            out[below] = self._band_constants[0] * self._band(z[below])
        if np.any(above):
            out[above] = self._band_constants[1] * self._band(z[above])
        return out


def _count_vectors(positions, z_max):
    """All atom-count vectors whose total displacement stays below z_max."""
    if positions.size == 0:
        yield (), 0.0
        return
    limits = [int(z_max // p) for p in positions]
    produced = 0
    for counts in itertools.product(*(range(lim + 1) for lim in limits)):
        offset = float(np.dot(counts, positions))
        if offset < z_max:
            produced += 1
            if produced > SERIES_TERM_LIMIT:
                raise NoDensityKnown("renewal series too long for the requested range")
            yield counts, offset


def potential_density(phi, nodes=TALBOT_NODES):
    return PotentialDensity(phi, nodes)


def potential_density_value(phi, z):
    return potential_density(phi)(z)


# -- Laplace pair checks -------------------------------------------------------------


@dataclass(frozen=True)
class LaplacePairCheck:
    q: np.ndarray
    numeric: np.ndarray
    expected: np.ndarray
    max_relative_error: float


def _power_remainder(body, v_cut):
    """int_0^v_cut body, treating body as a power law below the cut."""
    v = np.array([[v_cut, v_cut * math.exp(-1.0)]])
    at_cut, below = body(v)[0]
    if at_cut <= 0 or below <= 0:
        return 0.0
    slope = math.log(at_cut / below) + 1.0  # exponent of v * body(v) in log v
    return at_cut * v_cut / slope if slope > 0 else math.inf


def verify_laplace_pair(kind, part, q_grid):
    """Compare the Laplace transform of W or u with 1/Sigma or 1/Phi on q_grid."""
    q = np.atleast_1d(np.asarray(q_grid, dtype=float))
    if kind == "scale":
        fn = scale_function(part)
        expected = 1.0 / fn.sigma.evaluate(q)
    elif kind == "potential":
        fn = potential_density(part)
        expected = 1.0 / fn.phi.evaluate(q)
    else:
        raise ValueError(f"unknown pair kind {kind!r}")
    numeric = np.empty(q.shape)
    for i, qi in enumerate(q):
        body = lambda v: np.exp(-qi * v) * fn(v.ravel()).reshape(v.shape)
        numeric[i] = log_grid_integral(body, 1.0 / qi, s_min=PAIR_CUT, s_max=6.0)[0]
        numeric[i] += _power_remainder(body, math.exp(PAIR_CUT) / qi)
    err = float(np.max(np.abs(numeric - expected) / np.abs(expected)))
    return LaplacePairCheck(q, numeric, expected, err)
