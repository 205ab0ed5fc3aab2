"""Analytic oracles for pure CB processes and the Monte Carlo Laplace-duality check.

The oracles rest on the flow dy/dt = -Psi(y): a CB(Psi) from x satisfies
E_x[e^{-X_t y}] = e^{-x y_t(y)}.  The duality check estimates both sides of
E_x[e^{-X_t y}] = E^y[e^{-x Y_t}] for X = CBDI(psi, psi_hat) and
Y = CBDI(psi_hat, psi) by independent simulations.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy import integrate

from cbdi.mechanisms.conditions import Verdict, integral_condition
from cbdi.mechanisms.mechanism import as_decomposition
from cbdi.simulator.engine import NoiseBundle, SimConfig, laplace_values, mean_and_error, run_batch
from cbdi.simulator.tables import POWERS, ZERO, function_table

FLOW_RTOL = 1e-12
FLOW_ATOL = 1e-14
LARGE_STARTS = (1e6, 1e8)
SMALL_STARTS = (1e-6, 1e-8)
LIMIT_AGREEMENT = 1e-6
PASSAGE_CUT = 300.0  # log of the level where the passage integral switches to its power-law remainder


def _power_form(psi):
    """(coef, exponent) when Psi is a single power term (constants included), else None."""
    d = as_decomposition(psi)
    sigma, phi = function_table(d.sigma, "sigma"), function_table(d.phi, "phi")
    if sigma.mode not in (ZERO, POWERS) or phi.mode not in (ZERO, POWERS):
        return None
    terms = list(zip(sigma.coefs, sigma.exponents)) + [(-c, e) for c, e in zip(phi.coefs, phi.exponents)]
    if len(terms) == 1:
        return float(terms[0][0]), float(terms[0][1])
    if not terms:
        return 0.0, 1.0
    return None


def _evaluator(psi):
    d = as_decomposition(psi)
    return lambda y: float(d.evaluate(np.array([y]))[0])


def ode_flow(psi, y, t):
    """y_t(y) for dy/dt = -Psi(y), y_0 = y."""
    if not 0 < y < math.inf:
        raise ValueError("the flow starts inside (0, inf)")
    if t == 0:
        return float(y)
    form = _power_form(psi)
    if form is not None:
        coef, p = form
        if p == 1.0:
            return y * math.exp(-coef * t)
        if p == 0.0:
            return y + (-coef) * t
        base = y ** (1.0 - p) + (p - 1.0) * coef * t
        return base ** (1.0 / (1.0 - p))
    evaluate = _evaluator(psi)

    def rate(_, s):
        # trial stages may probe far outside the path; keep them finite
        state = math.exp(min(max(s[0], -700.0), 300.0))
        return [-evaluate(state) / state]

    sol = integrate.solve_ivp(
        rate,
        (0.0, t), [math.log(y)], method="DOP853", rtol=FLOW_RTOL, atol=FLOW_ATOL,
    )
    if not sol.success:
        raise ArithmeticError(f"flow integration failed: {sol.message}")
    return math.exp(sol.y[0, -1])


def cb_semigroup(psi, x, y, t):
    """E_x[e^{-X_t y}] = e^{-x y_t(y)} for the CB(Psi), with X = 0 and X = inf as cemeteries."""
    if x == 0:
        return 1.0
    flow = ode_flow(psi, y, t)
    if math.isinf(x):
        return 0.0
    return math.exp(-x * flow)


@dataclass
class AbsorptionProbabilities:
    extinct_by_t: float
    exploded_by_t: float
    extinction_condition: str
    explosion_condition: str
    flow_at_infinity: float = None
    flow_at_zero: float = None
    converged: bool = True


def _limit(psi, t, starts):
    """Flow started at the boundary, from two large (or two small) starts.

    A flow from the boundary needs time tau(Y) = int du / |Psi| between the
    boundary and Y to reach Y, so y_t(boundary) = y_{t - tau(Y)}(Y).  The two
    starts must agree to LIMIT_AGREEMENT.
    """
    evaluate = _evaluator(psi)
    from_infinity = starts[0] > 1

    def passage(level):
        if from_infinity:
            body = lambda s: math.exp(s) / evaluate(math.exp(s))
            inner = integrate.quad(body, math.log(level), PASSAGE_CUT, epsabs=0, epsrel=1e-12, limit=400)[0]
            # beyond the cut Psi is a power law u^p; the remainder is u / ((p - 1) Psi(u))
            top = math.exp(PASSAGE_CUT)
            p = math.log(evaluate(top) / evaluate(top / math.e))
            return inner + top / ((p - 1.0) * evaluate(top))
        body = lambda s: math.exp(s) / -evaluate(math.exp(s))
        return integrate.quad(body, -700.0, math.log(level), epsabs=0, epsrel=1e-12, limit=400)[0]

    values = []
    for level in starts:
        tau = passage(level)
        if tau >= t:
            raise ArithmeticError(f"start {level:g} is not far enough out for t = {t:g}")
        values.append(ode_flow(psi, level, t - tau))
    agree = abs(values[0] - values[1]) <= LIMIT_AGREEMENT * abs(values[1])
    return values[1], agree


def absorption_probabilities(psi, x, t):
    """P_x(X_t = 0) and P_x(X_t = inf) for the CB(Psi)."""
    grey = integral_condition("Grey", psi)
    dynkin = integral_condition("Dynkin", psi)
    converged = True
    extinct, at_inf = 0.0, None
    form = _power_form(psi)
    if grey.verdict is Verdict.FINITE:
        if form is not None and form[1] > 1.0 and form[0] > 0:
            coef, p = form
            at_inf = ((p - 1.0) * coef * t) ** (-1.0 / (p - 1.0))
        else:
            at_inf, ok = _limit(psi, t, LARGE_STARTS)
            converged &= ok
        extinct = math.exp(-x * at_inf)
    exploded, at_zero = 0.0, None
    if dynkin.verdict is Verdict.FINITE:
        if form is not None and form[1] < 1.0 and form[0] < 0:
            coef, p = form
            at_zero = ((1.0 - p) * (-coef) * t) ** (1.0 / (1.0 - p))
        else:
            at_zero, ok = _limit(psi, t, SMALL_STARTS)
            converged &= ok
        exploded = -math.expm1(-x * at_zero)
    return AbsorptionProbabilities(
        extinct, exploded, f"Grey: {grey.verdict.value}", f"Dynkin: {dynkin.verdict.value}", at_inf, at_zero, converged
    )


# -- the Monte Carlo duality check ---------------------------------------------------


@dataclass
class DualityCell:
    x: float
    y: float
    t: float
    lhs: float
    lhs_error: float
    rhs: float
    rhs_error: float
    passed: bool
    mismatch: str = None  # "statistical" or "structural" for failing cells

    @property
    def combined_error(self):
        return math.hypot(self.lhs_error, self.rhs_error)


@dataclass
class DualityReport:
    cells: list
    k: float
    conventions: str
    hypotheses: dict
    tag: str
    seeds: tuple
    config: dict = field(default_factory=dict)

    @property
    def pass_fraction(self):
        return sum(c.passed for c in self.cells) / max(len(self.cells), 1)

    @property
    def passed_cells(self):
        return sum(c.passed for c in self.cells)

    def transposed(self):
        """The report for the swapped pair: x and y trade places and so do the sides."""
        cells = [
            DualityCell(c.y, c.x, c.t, c.rhs, c.rhs_error, c.lhs, c.lhs_error, c.passed, c.mismatch)
            for c in self.cells
        ]
        return DualityReport(cells, self.k, self.conventions, self.hypotheses, self.tag, self.seeds[::-1],
                             self.config)


CONVENTIONS = "e^{-inf y} = 0 for y > 0; e^{-X 0} = 1 iff X < inf; e^{-0 inf} = 1"


def _side(process, interaction, starts, others, times, cfg, seed, offset):
    """Estimates of E_s[e^{-Z_t o}] for each start s, other value o and time t, from one batch per start."""
    out = {}
    horizon = max(max(times), cfg.dt)
    run_cfg = replace(cfg, horizon=round(horizon / cfg.dt) * cfg.dt, record_every=1)
    for s in starts:
        batch = run_batch(process, interaction, s, run_cfg, NoiseBundle(seed, offset))
        for t in times:
            states = batch.at_time(t)
            for o in others:
                out[(s, o, t)] = mean_and_error(laplace_values(states, o))
    return out


def _hypotheses(psi, psi_hat):
    h1 = integral_condition("H1", psi).verdict
    h1_hat = integral_condition("H1", psi_hat).verdict
    hyps = {"H1": h1.value, "H1_hat": h1_hat.value}
    holds = [v is Verdict.INFINITE for v in (h1, h1_hat)]
    if all(holds):
        tag = "both processes non-explosive"
    elif any(holds):
        tag = "one process may explode"
    else:
        tag = "both processes may explode"
    return hyps, tag


def duality_check(psi, psi_hat, grid, cfg, seeds=None, k=3.0, recheck=True):
    """Compare both sides of the Laplace duality cell by cell over grid = (xs, ys, ts).

    seeds = (seed for the X side, seed for the Y side); by default both derive
    from cfg.seed.  With recheck, failing cells are re-estimated on twice as
    many fresh paths: still failing marks the mismatch "structural", passing
    marks it "statistical" (the cell keeps its original pass flag).
    """
    xs, ys, ts = (list(map(float, g)) for g in grid)
    seeds = seeds or (2 * cfg.seed + 1, 2 * cfg.seed + 2)
    lhs = _side(psi, psi_hat, xs, ys, ts, cfg, seeds[0], 0)
    rhs = _side(psi_hat, psi, ys, xs, ts, cfg, seeds[1], 0)
    cells = []
    for x in xs:
        for y in ys:
            for t in ts:
                (a, sa), (b, sb) = lhs[(x, y, t)], rhs[(y, x, t)]
                cells.append(DualityCell(x, y, t, a, sa, b, sb, _agree(a, sa, b, sb, k)))
    failing = [c for c in cells if not c.passed]
    if recheck and failing:
        bigger = replace(cfg, n_paths=2 * cfg.n_paths)
        fx = sorted({c.x for c in failing})
        fy = sorted({c.y for c in failing})
        ft = sorted({c.t for c in failing})
        lhs2 = _side(psi, psi_hat, fx, fy, ft, bigger, seeds[0], cfg.n_paths)
        rhs2 = _side(psi_hat, psi, fy, fx, ft, bigger, seeds[1], cfg.n_paths)
        for c in failing:
            (a, sa), (b, sb) = lhs2[(c.x, c.y, c.t)], rhs2[(c.y, c.x, c.t)]
            c.mismatch = "statistical" if _agree(a, sa, b, sb, k) else "structural"
    hyps, tag = _hypotheses(psi, psi_hat)
    record = {"dt": cfg.dt, "n_paths": cfg.n_paths, "epsilon": cfg.epsilon, "seed": cfg.seed}
    return DualityReport(cells, k, CONVENTIONS, hyps, tag, tuple(seeds), record)


def _agree(a, sa, b, sb, k):
    return abs(a - b) <= k * math.hypot(sa, sb)


def oracle_sim_config(**overrides):
    """Configuration used by the oracle comparisons: dt = 1e-3, 10^5 paths."""
    base = SimConfig(dt=1e-3, horizon=1.0, n_paths=100_000, jump_cap=1e4)
    return replace(base, **overrides)
