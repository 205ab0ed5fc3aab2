"""The functions F and G, the Lyapunov functions f and g, and the boundary parameters.

    F(x) = int_0^inf e^{-zx} Phi(z) W_hat(z) / z dz
         = beta / Sigma_hat(x) + int_0^inf (nu_tail(h) + lambda) / Sigma_hat(x + h) dh
    G(x) = int_0^inf e^{-zx} Sigma(z) / z U_hat(dz)
         = a Phi_hat'(x) / Phi_hat(x)^2 + d / Phi_hat(x)
           + int_0^inf eta_tail(h) (1 / Phi_hat(x) - 1 / Phi_hat(x + h)) dh

theta is the limit of x F(x) as x -> inf and rho the limit of x G(x) as
x -> 0.  The second (tail) forms are the primary numerical route; the first
(Laplace) forms go through the scale function and potential density and are
kept as an independent cross-check.

All integrals run over logarithmic variables with composite Gauss-Legendre
panels, split at every kink or jump of the tail, and closed at infinite ends
by the local power law of the integrand.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special

from cbdi.errors import CompetitionTooWeak, CooperationTooWeak, NotRegularlyVarying
from cbdi.mechanisms.conditions import integral_condition
from cbdi.mechanisms.mechanism import Decomposition, PhiPart, SigmaPart, as_decomposition, evaluate
from cbdi.numerics import log_grid_integral

PANEL_WIDTH = 0.5
PANEL_ORDER = 8
# Natural-log span covered beyond the relevant scale before the power-law end correction.
END_SPAN = 40.0
# Relative jump size below which increments are replaced by their Taylor expansion.
TAYLOR_RATIO = 1e-3

_GL_NODES, _GL_WEIGHTS = leggauss(PANEL_ORDER)


# -- quadrature primitives ---------------------------------------------------------


def _log_quadrature(fn, t_lo, t_hi):
    """Row-wise integral of fn(v) dv over v in [e^t_lo, e^t_hi].

    fn receives a 2-d array of v with one row per entry of t_lo.
    """
    t_lo = np.atleast_1d(np.asarray(t_lo, dtype=float))
    t_hi = np.atleast_1d(np.asarray(t_hi, dtype=float))
    span = np.maximum(t_hi - t_lo, 0.0)
    panels = max(1, int(math.ceil(float(span.max()) / PANEL_WIDTH))) if span.size else 1
    width = span / panels
    offsets = (np.arange(panels)[:, None] + 0.5 * (_GL_NODES[None, :] + 1.0)).ravel()
    t = t_lo[:, None] + width[:, None] * offsets[None, :]
    v = np.exp(t)
    weights = np.tile(_GL_WEIGHTS, panels)[None, :] * 0.5 * width[:, None]
    values = fn(v)
    values = np.where(weights > 0, values, 0.0)
    return np.sum(values * v * weights, axis=1)


def _end_correction(g_end, g_inner):
    """Remainder of int g(t) dt beyond an end where g decays geometrically.

    g_end is the log-variable integrand at the end and g_inner one unit inwards.
    """
    g_end = np.asarray(g_end, dtype=float)
    g_inner = np.asarray(g_inner, dtype=float)
    out = np.zeros(g_end.shape)
    live = g_end != 0
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.log(np.abs(g_end[live]) / np.abs(g_inner[live]))
        out[live] = np.where(rate < 0, g_end[live] / -rate, np.copysign(np.inf, g_end[live]))
    return out


def _tail_integral(measure, kernel, x):
    """int_0^inf tail(h) kernel(x, h) dh for each x, with tail the measure's tail.

    kernel takes (x[:, None], h) with h of shape (len(x), m).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if measure.is_zero:
        return np.zeros(x.shape)
    breaks = {b for s in measure.segments for b in (s.lo, s.hi) if 0.0 < b < math.inf}
    breaks |= {u for u, _ in measure.atoms}
    edges = [0.0] + sorted(breaks)
    if any(math.isinf(s.hi) for s in measure.segments):
        edges.append(math.inf)
    integrand = lambda h: measure.tail(h) * kernel(x[:, None], h)
    log_g = lambda t: integrand(np.exp(t)[:, None])[:, 0] * np.exp(t)
    total = np.zeros(x.shape)
    for lo, hi in zip(edges[:-1], edges[1:]):
        t_lo = np.full(x.shape, math.log(lo)) if lo > 0 else np.log(np.minimum(hi, x)) - END_SPAN
        t_hi = np.full(x.shape, math.log(hi)) if math.isfinite(hi) else np.log(np.maximum(lo, x)) + END_SPAN
        total += _log_quadrature(integrand, t_lo, t_hi)
        if lo == 0:
            total += _end_correction(log_g(t_lo), log_g(t_lo + 1.0))
        if math.isinf(hi):
            total += _end_correction(log_g(t_hi), log_g(t_hi - 1.0))
    return total


# -- argument handling -----------------------------------------------------------------


def _phi_of(m):
    if isinstance(m, PhiPart):
        return m
    return as_decomposition(m).phi


def _sigma_of(m):
    if isinstance(m, SigmaPart):
        return m
    return as_decomposition(m).sigma


def _require_competition(sigma_hat):
    if sigma_hat.is_zero or integral_condition("H2", Decomposition(sigma_hat, PhiPart())).infinite:
        raise CompetitionTooWeak("int_1^inf du / Sigma_hat(u) diverges")


def _require_cooperation(phi_hat):
    if phi_hat.is_zero or integral_condition("H1", Decomposition(SigmaPart(), phi_hat)).infinite:
        raise CooperationTooWeak("int_0^1 du / Phi_hat(u) diverges")


# -- Lyapunov functions ---------------------------------------------------------------


def lyapunov_f(sigma_hat, x):
    """f(x) = int_x^inf du / Sigma_hat(u)."""
    sigma_hat = _sigma_of(sigma_hat)
    _require_competition(sigma_hat)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    inverse = lambda v: 1.0 / sigma_hat.evaluate(v)
    t_lo = np.log(x)
    t_hi = t_lo + END_SPAN
    body = _log_quadrature(inverse, t_lo, t_hi)
    log_g = lambda t: np.exp(t) / sigma_hat.evaluate(np.exp(t))
    return body + _end_correction(log_g(t_hi), log_g(t_hi - 1.0))


def lyapunov_g(phi_hat, x):
    """g(x) = int_0^x du / Phi_hat(u)."""
    phi_hat = _phi_of(phi_hat)
    _require_cooperation(phi_hat)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    inverse = lambda v: 1.0 / phi_hat.evaluate(v)
    t_hi = np.log(x)
    t_lo = t_hi - END_SPAN
    body = _log_quadrature(inverse, t_lo, t_hi)
    log_g = lambda t: np.exp(t) / phi_hat.evaluate(np.exp(t))
    return body + _end_correction(log_g(t_lo), log_g(t_lo + 1.0))


# -- F and G -----------------------------------------------------------------------------


def F_value(phi, sigma_hat, x, route="tail"):
    """F(x) for the Bernstein part phi and the competition part sigma_hat."""
    phi, sigma_hat = _phi_of(phi), _sigma_of(sigma_hat)
    _require_competition(sigma_hat)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if route == "laplace":
        return _F_laplace(phi, sigma_hat, x)
    out = phi.drift / sigma_hat.evaluate(x)
    if phi.killing > 0:
        out = out + phi.killing * lyapunov_f(sigma_hat, x)
    kernel = lambda xs, h: 1.0 / sigma_hat.evaluate(xs + h)
    return out + _tail_integral(phi.measure, kernel, x)


def _F_laplace(phi, sigma_hat, x):
    from cbdi.potential_theory import scale_function

    scale = scale_function(sigma_hat)

    def integrand(z):
        flat = z.ravel()
        values = phi.evaluate(flat) * scale(flat) / flat
        return values.reshape(z.shape) * np.exp(-z * x[:, None])

    return log_grid_integral(integrand, 1.0 / x)


def _phi_increment(phi_hat, x, h):
    """Phi_hat(x + h) - Phi_hat(x) without cancellation for h << x."""
    x, h = np.broadcast_arrays(x, h)
    out = np.empty(h.shape)
    small = h < TAYLOR_RATIO * x
    if np.any(small):
        xs, hs = x[small], h[small]
        out[small] = phi_hat.derivative(xs) * hs + 0.5 * phi_hat.second_derivative(xs) * hs**2
    big = ~small
    if np.any(big):
        out[big] = phi_hat.evaluate(x[big] + h[big]) - phi_hat.evaluate(x[big])
    return out


def G_value(sigma, phi_hat, x, route="tail"):
    """G(x) for the competition part sigma and the Bernstein part phi_hat."""
    sigma, phi_hat = _sigma_of(sigma), _phi_of(phi_hat)
    # G itself only needs Phi_hat > 0; the integrability at 0 matters for rho and g
    if phi_hat.is_zero:
        raise CooperationTooWeak("Phi_hat vanishes identically")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if route == "laplace":
        return _G_laplace(sigma, phi_hat, x)
    base = phi_hat.evaluate(x)
    out = sigma.drift / base
    if sigma.diffusion > 0:
        out = out + sigma.diffusion * phi_hat.derivative(x) / base**2

    def kernel(xs, h):
        return _phi_increment(phi_hat, xs, h) / (phi_hat.evaluate(xs) * phi_hat.evaluate(xs + h))

    return out + _tail_integral(sigma.measure, kernel, x)


def _G_laplace(sigma, phi_hat, x):
    from cbdi.potential_theory import potential_density

    density = potential_density(phi_hat)

    def integrand(z):
        flat = z.ravel()
        values = sigma.evaluate(flat) * density(flat) / flat
        return values.reshape(z.shape) * np.exp(-z * x[:, None])

    return log_grid_integral(integrand, 1.0 / x)


# -- limit estimation -------------------------------------------------------------------------


@dataclass(frozen=True)
class GridConfig:
    """Geometric grid for liminf / limsup estimation.

    kind "log" uses points start * 10^(k / points_per_decade); kind "loglog"
    feeds the same grid to callables of t = log(1/z), which reaches the
    oscillation scale of slowly varying factors.
    """

    points_per_decade: int = 64
    decades: int = 8
    start: float = 1.0
    window_decades: int = 1
    tolerance: float = 0.02
    kind: str = "log"

    def points(self, direction):
        k = np.arange(self.points_per_decade * self.decades + 1)
        return self.start * 10.0 ** (direction * k / self.points_per_decade)


@dataclass(frozen=True)
class LimitEstimate:
    liminf: float
    limsup: float
    method: str
    grid: np.ndarray = field(default=None, repr=False)
    values: np.ndarray = field(default=None, repr=False)
    window: tuple = None
    converged: bool = True
    trend: str = "flat"
    reason: str = ""

    @property
    def diverges(self):
        return self.trend == "increasing"

    @property
    def value(self):
        return 0.5 * (self.liminf + self.limsup)

    def as_record(self):
        return {
            "liminf": self.liminf,
            "limsup": self.limsup,
            "method": self.method,
            "converged": self.converged,
            "trend": self.trend,
            "reason": self.reason,
        }


def closed_estimate(value, reason):
    return LimitEstimate(float(value), float(value), "closed_form", reason=reason)


def limit_from_grid(grid, values, config):
    """(min, max) over the final window with a two-decade convergence check."""
    ppd = config.points_per_decade
    width = ppd * config.window_decades
    last = values[-(width + 1):]
    previous = values[-(width + ppd + 1):-width] if values.size > width + ppd else values[: -width or None]
    lo, hi = float(np.min(last)), float(np.max(last))
    mean_last, mean_prev = float(np.mean(values[-(ppd + 1):])), float(np.mean(previous[-(ppd + 1):]))
    tol = config.tolerance
    if not np.isfinite(mean_last):
        trend = "increasing"
    elif mean_last > mean_prev * (1.0 + tol) + 1e-300:
        trend = "increasing"
    elif mean_last < mean_prev * (1.0 - tol):
        trend = "decreasing"
    else:
        trend = "flat"
    recent = values[-(2 * ppd + 1):]
    scale = max(abs(float(np.max(recent))), 1e-300)
    converged = bool(np.all(np.isfinite(recent)) and (np.max(recent) - np.min(recent)) <= tol * scale)
    window = (float(grid[-(width + 1)]), float(grid[-1]))
    return LimitEstimate(lo, hi, "grid", grid, values, window, converged, trend)


def _regular_law(law, exponent_range):
    lo, hi = exponent_range
    return law is not None and law.log_power == 0 and lo <= law.exponent <= hi


def _theta_closed(phi, sigma_hat):
    if phi.killing > 0:
        if sigma_hat.diffusion > 0:
            return closed_estimate(phi.killing / sigma_hat.diffusion, "Phi(0) > 0 and quadratic competition")
        return closed_estimate(math.inf, "Phi(0) > 0 without quadratic competition")
    if sigma_hat.diffusion > 0:
        return closed_estimate(0.0, "Phi(0) = 0 and quadratic competition")
    if math.isfinite(phi.slope_at_zero()):
        return closed_estimate(0.0, "Phi'(0+) finite")
    small, large = phi.at_zero(), sigma_hat.at_infinity()
    if _regular_law(small, (0.0, 1.0)) and _regular_law(large, (1.0, 2.0)):
        alpha, beta_hat = small.exponent, large.exponent - 1.0
        if math.isclose(beta_hat, 1.0 - alpha, abs_tol=1e-12):
            value = small.coef / (large.coef * special.gamma(2.0 - alpha))
            return closed_estimate(value, "regular variation, matched indices")
        return closed_estimate(
            math.inf if beta_hat < 1.0 - alpha else 0.0, "regular variation, unmatched indices"
        )
    return None


def _rho_closed(sigma, phi_hat):
    if phi_hat.killing > 0:
        return closed_estimate(0.0, "Phi_hat(0) > 0")
    small, large = phi_hat.at_zero(), sigma.at_infinity()
    if _regular_law(small, (0.0, 1.0)) and _regular_law(large, (1.0, 2.0)):
        alpha, beta = small.exponent, large.exponent - 1.0
        if math.isclose(beta, 1.0 - alpha, abs_tol=1e-12):
            value = large.coef / (small.coef * special.gamma(alpha))
            return closed_estimate(value, "regular variation, matched indices")
        return closed_estimate(math.inf if beta > 1.0 - alpha else 0.0, "regular variation, unmatched indices")
    return None


def estimate_theta(phi, sigma_hat, config=None, method="auto"):
    """theta bounds for the pair (Phi, Sigma_hat): limits of x F(x) as x -> inf."""
    phi, sigma_hat = _phi_of(phi), _sigma_of(sigma_hat)
    _require_competition(sigma_hat)
    config = config or GridConfig()
    if method != "grid":
        closed = _theta_closed(phi, sigma_hat)
        if closed is not None:
            return closed
        if method == "closed":
            raise NotRegularlyVarying("no closed form applies to this pair")
    grid = config.points(+1)
    values = grid * F_value(phi, sigma_hat, grid)
    return limit_from_grid(grid, values, config)


def estimate_rho(sigma, phi_hat, config=None, method="auto"):
    """rho bounds for the pair (Sigma, Phi_hat): limits of x G(x) as x -> 0."""
    sigma, phi_hat = _sigma_of(sigma), _phi_of(phi_hat)
    _require_cooperation(phi_hat)
    config = config or GridConfig()
    if method != "grid":
        closed = _rho_closed(sigma, phi_hat)
        if closed is not None:
            return closed
        if method == "closed":
            raise NotRegularlyVarying("no closed form applies to this pair")
    grid = config.points(-1)
    values = grid * G_value(sigma, phi_hat, grid)
    return limit_from_grid(grid, values, config)


def estimate_xi(slow_phi, slow_sigma_hat, config=None):
    """Bounds of ell(z) / L_hat(1/z) as z -> 0.

    With config.kind == "log" both callables take z (and 1/z).  With "loglog"
    they take t = log(1/z) and the grid runs over t, so oscillations in
    log log(1/z) are reached.
    """
    config = config or GridConfig()
    if config.kind == "loglog":
        grid = config.points(+1)
        values = np.array([slow_phi(t) / slow_sigma_hat(t) for t in grid], dtype=float)
    else:
        grid = config.points(-1)
        values = np.array([slow_phi(z) / slow_sigma_hat(1.0 / z) for z in grid], dtype=float)
    if not np.all(values >= 0):
        raise NotRegularlyVarying("slowly varying factors must be positive")
    return limit_from_grid(grid, values, config)


def slowly_varying_factors(phi, sigma_hat):
    """ell(z) = Phi(z) / z^alpha and L_hat(x) = Sigma_hat(x) / x^(2 - alpha) from the leading laws."""
    phi, sigma_hat = _phi_of(phi), _sigma_of(sigma_hat)
    small, large = phi.at_zero(), sigma_hat.at_infinity()
    if small is None or large is None or not 0.0 < small.exponent < 1.0:
        raise NotRegularlyVarying("Phi is not regularly varying at 0 with index in (0, 1)")
    alpha = small.exponent
    if not math.isclose(large.exponent, 2.0 - alpha, abs_tol=1e-12):
        raise NotRegularlyVarying("Sigma_hat index does not match 2 - alpha")
    ell = lambda z: float(phi.evaluate(np.array([z]))[0]) / z**alpha
    big_l = lambda v: float(sigma_hat.evaluate(np.array([v]))[0]) / v ** (2.0 - alpha)
    return alpha, ell, big_l


# -- generator ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class _TestFunction:
    """Derivatives and increments of a smooth test function at one point."""

    slope: float
    curvature: float
    third: float
    value: float
    at_infinity: float
    increment: object  # callable u -> h(x + u) - h(x)


def _lyapunov_f_test(sigma_hat, x):
    s = float(sigma_hat.evaluate(np.array([x]))[0])
    s1 = float(sigma_hat.derivative(np.array([x]))[0])
    s2 = float(sigma_hat.second_derivative(np.array([x]))[0])
    inverse = lambda v: 1.0 / sigma_hat.evaluate(v)

    def increment(u):
        u = np.atleast_1d(u)
        return -_log_quadrature(inverse, np.full(u.shape, math.log(x)), np.log(x + u))

    value = float(lyapunov_f(sigma_hat, x)[0])
    return _TestFunction(-1.0 / s, s1 / s**2, s2 / s**2 - 2.0 * s1**2 / s**3, value, 0.0, increment)


def _lyapunov_g_test(phi_hat, x):
    p = float(phi_hat.evaluate(np.array([x]))[0])
    p1 = float(phi_hat.derivative(np.array([x]))[0])
    p2 = float(phi_hat.second_derivative(np.array([x]))[0])
    inverse = lambda v: 1.0 / phi_hat.evaluate(v)

    def increment(u):
        u = np.atleast_1d(u)
        return _log_quadrature(inverse, np.full(u.shape, math.log(x)), np.log(x + u))

    value = float(lyapunov_g(phi_hat, x)[0])
    # a Bernstein function grows at most linearly, so g is unbounded
    return _TestFunction(1.0 / p, -p1 / p**2, -p2 / p**2 + 2.0 * p1**2 / p**3, value, math.inf, increment)


def _jump_integral(measure, test, x, compensated):
    """int (h(x+u) - h(x) - [compensated] u h'(x)) measure(du)."""
    if measure.is_zero:
        return 0.0
    cut = TAYLOR_RATIO * x
    total = (
        (0.0 if compensated else test.slope * measure.moment(1.0, 0.0, cut))
        + 0.5 * test.curvature * measure.moment(2.0, 0.0, cut)
        + test.third / 6.0 * measure.moment(3.0, 0.0, cut)
    )
    kernel = lambda u: test.increment(u) - (test.slope * u if compensated else 0.0)
    for pos, mass in measure.atoms:
        if pos > cut:
            total += mass * float(kernel(np.array([pos]))[0])
    for seg in measure.segments:
        part = seg.clip(cut, math.inf)
        if part is None:
            continue
        density = lambda u, s=part: kernel(u.ravel()).reshape(u.shape) * s.coef * u ** (-1.0 - s.index)
        t_lo = math.log(part.lo)
        t_hi = math.log(part.hi) if math.isfinite(part.hi) else math.log(max(part.lo, x)) + END_SPAN
        total += float(_log_quadrature(density, [t_lo], [t_hi])[0])
        if math.isinf(part.hi):
            log_g = lambda t: float(density(np.array([[math.exp(t)]]))[0, 0]) * math.exp(t)
            total += float(_end_correction(log_g(t_hi), log_g(t_hi - 1.0)))
    return total


def generator_apply(psi, psi_hat, kind, x, y=None):
    """X h(x) = x L^Psi h(x) - Psi_hat(x) h'(x).

    kind is "exp" (h = e^{-. y}, in closed form), "f" (the Lyapunov function
    of the competition part of psi_hat) or "g" (that of its cooperation part).
    """
    x = float(x)
    psi_hat_x = float(evaluate(psi_hat, np.array([x]))[0])
    if kind == "exp":
        psi_y = float(evaluate(psi, np.array([y]))[0])
        return (x * psi_y + y * psi_hat_x) * math.exp(-x * y)
    dual = as_decomposition(psi_hat)
    if kind == "f":
        test = _lyapunov_f_test(dual.sigma, x)
    elif kind == "g":
        test = _lyapunov_g_test(dual.phi, x)
    else:
        raise ValueError(f"unknown test function {kind!r}")
    d = as_decomposition(psi)
    sigma, phi = d.sigma, d.phi
    local = sigma.diffusion * test.curvature - sigma.drift * test.slope + phi.drift * test.slope
    jumps = _jump_integral(sigma.measure, test, x, True) + _jump_integral(phi.measure, test, x, False)
    killing = phi.killing * (test.at_infinity - test.value) if phi.killing > 0 else 0.0
    return x * (local + jumps + killing) - psi_hat_x * test.slope


def epsilon_residual(psi, psi_hat, x, route="tail"):
    """eps(x) = 1 - x F(x) - X f(x) for the decomposition parts of the pair."""
    d, dual = as_decomposition(psi), as_decomposition(psi_hat)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    f_part = xs * F_value(d.phi, dual.sigma, xs, route=route)
    return np.array([1.0 - fx - generator_apply(psi, psi_hat, "f", xv) for xv, fx in zip(xs, f_part)])
