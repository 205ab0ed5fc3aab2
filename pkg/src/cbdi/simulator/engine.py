"""Monte Carlo for the minimal CBDI and its truncated and killed variants.

The state of X = CBDI(psi, psi_hat) evolves under branching psi and the
deterministic interaction -psi_hat(X).  Recorded values use 0.0 for the
cemetery at 0 and inf for the cemetery at infinity.
"""

from dataclasses import dataclass, field, replace
import math
import os

import numpy as np

from cbdi.errors import UnstableStep
from cbdi.mechanisms.mechanism import as_decomposition
from cbdi.numerics import exact_mean
from cbdi.simulator import kernels
from cbdi.simulator.tables import function_table, jump_table

DROP, GAUSSIAN_CORRECTION = "Drop", "GaussianCorrection"
AT_ZERO, AT_INFINITY, INTERIOR = "AtZero", "AtInfinity", "Interior"
CAUSES = {0: None, 1: "extinction", 2: "explosion", 3: "killing", 4: "dual_kill"}
THREADS_VARIABLE = "CBDI_THREADS"


def configure_threads(count=None):
    """Set the worker count from the argument or CBDI_THREADS; results do not depend on it."""
    import numba

    if count is None:
        raw = os.environ.get(THREADS_VARIABLE)
        if not raw:
            return numba.get_num_threads()
        count = int(raw)
    count = max(1, min(int(count), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(count)
    return count


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    horizon: float = 1.0
    epsilon: float = 1e-2
    small_jump_mode: str = GAUSSIAN_CORRECTION
    x_floor: float = 1e-8
    x_ceil: float = 1e12
    n_paths: int = 1000
    seed: int = 0
    record_every: int = 1
    jump_cap: float = math.inf
    adaptive_cutoff: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and self.horizon > 0 and self.dt <= self.horizon * (1 + 1e-12)):
            raise ValueError("need 0 < dt <= horizon")
        if not 0 < self.epsilon:
            raise ValueError("epsilon must be positive")
        if self.small_jump_mode not in (DROP, GAUSSIAN_CORRECTION):
            raise ValueError(f"unknown small_jump_mode {self.small_jump_mode!r}")
        if not 0 < self.x_floor < self.x_ceil:
            raise ValueError("need 0 < x_floor < x_ceil")
        if self.n_paths < 0 or self.record_every < 1:
            raise ValueError("n_paths must be >= 0 and record_every >= 1")

    @property
    def n_steps(self):
        steps = self.horizon / self.dt
        rounded = round(steps)
        if abs(steps - rounded) > 1e-6 * max(1.0, steps):
            raise ValueError("horizon must be a whole number of steps")
        return int(rounded)

    def times(self):
        count = self.n_steps // self.record_every
        return np.arange(count + 1) * self.record_every * self.dt


@dataclass(frozen=True)
class NoiseBundle:
    """Seed-derived noise: the streams of path i are addressed by (seed, path_offset + i).

    layered=True draws jump points on nested strips so that coupled paths see
    nested jump sets; it changes the realised noise relative to the default.
    """

    seed: int = 0
    path_offset: int = 0
    layered: bool = False


@dataclass
class Path:
    times: np.ndarray
    values: np.ndarray
    hits: dict = field(default_factory=dict)
    cause: str = None
    jump_count: int = 0

    @property
    def flags(self):
        out = np.full(self.values.shape, INTERIOR, dtype=object)
        out[self.values == 0.0] = AT_ZERO
        out[np.isinf(self.values)] = AT_INFINITY
        return out

    @property
    def final(self):
        return float(self.values[-1])


@dataclass
class Batch:
    """Many paths from one start: values has shape (paths, records)."""

    times: np.ndarray
    values: np.ndarray
    hits: np.ndarray  # columns: level_lo, level_hi, zero, infinity (nan when not reached)
    causes: np.ndarray
    jump_counts: np.ndarray
    config: SimConfig

    def path(self, i):
        names = ("level_lo", "level_hi", "zero", "infinity")
        hits = {n: float(self.hits[i, c]) for c, n in enumerate(names) if not math.isnan(self.hits[i, c])}
        return Path(self.times, self.values[i].copy(), hits, CAUSES[int(self.causes[i])], int(self.jump_counts[i]))

    def at_time(self, t):
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"time {t} is not on the recording grid")
        return self.values[:, k]


@dataclass(frozen=True)
class _Variant:
    phi_cap: float = math.inf
    kill_to_cap: bool = False
    dual_kill: float = 0.0
    level_lo: float = -1.0
    level_hi: float = math.inf
    stop_at_levels: bool = False


def _prepare(psi, psi_hat, cfg):
    branching = as_decomposition(psi)
    interaction = as_decomposition(psi_hat)
    jumps = jump_table(branching, cfg.epsilon)
    return jumps, function_table(interaction.sigma, "sigma"), function_table(interaction.phi, "phi")


def run_batch(psi, psi_hat, x0, cfg, noise=None, variant=None):
    """Simulate cfg.n_paths paths of CBDI(psi, psi_hat) from x0."""
    noise = noise or NoiseBundle(cfg.seed)
    variant = variant or _Variant()
    jumps, sigma_t, phi_t = _prepare(psi, psi_hat, cfg)
    if jumps.drifts[0] * cfg.dt < -0.5:
        raise UnstableStep(f"linear drift {jumps.drifts[0]:g} is too strong for dt = {cfg.dt:g}")
    n = cfg.n_paths
    n_rec = cfg.n_steps // cfg.record_every + 1
    fparams = np.zeros(kernels.F_SIZE)
    fparams[kernels.F_DT] = cfg.dt
    fparams[kernels.F_X_FLOOR] = cfg.x_floor
    fparams[kernels.F_X_CEIL] = cfg.x_ceil
    fparams[kernels.F_LEVEL_LO] = variant.level_lo
    fparams[kernels.F_LEVEL_HI] = variant.level_hi
    fparams[kernels.F_PHI_CAP] = variant.phi_cap
    fparams[kernels.F_ALL_CAP] = cfg.jump_cap
    fparams[kernels.F_DUAL_KILL] = variant.dual_kill
    iparams = np.zeros(kernels.I_SIZE, dtype=np.int64)
    iparams[kernels.I_SEED] = noise.seed
    iparams[kernels.I_STEPS] = cfg.n_steps
    iparams[kernels.I_RECORD_EVERY] = cfg.record_every
    iparams[kernels.I_SMALL_MODE] = int(cfg.small_jump_mode == GAUSSIAN_CORRECTION)
    iparams[kernels.I_KILL_MODE] = int(variant.kill_to_cap)
    iparams[kernels.I_LAYERED] = int(noise.layered)
    iparams[kernels.I_STOP_AT_LEVELS] = int(variant.stop_at_levels)
    iparams[kernels.I_ADAPTIVE] = int(cfg.adaptive_cutoff and not noise.layered)
    values = np.zeros((n, n_rec))
    hits = np.zeros((n, 4))
    causes = np.zeros(n, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    status = np.zeros(n, dtype=np.int64)
    if n:
        kernels.run_paths(
            fparams, iparams, np.arange(noise.path_offset, noise.path_offset + n, dtype=np.int64), float(x0),
            jumps.diffusion, jumps.killing,
            jumps.seg_coef, jumps.seg_index, jumps.seg_lo, jumps.seg_hi, jumps.seg_phi,
            jumps.atom_pos, jumps.atom_phi,
            jumps.cutoffs, jumps.rates, jumps.drifts, jumps.variances, jumps.piece_mass,
            sigma_t.mode, sigma_t.coefs, sigma_t.exponents, sigma_t.log_start, sigma_t.log_step, sigma_t.log_values,
            phi_t.mode, phi_t.coefs, phi_t.exponents, phi_t.log_start, phi_t.log_step, phi_t.log_values,
            values, hits, causes, counts, status,
        )
    if np.any(status == kernels.UNSTABLE):
        raise UnstableStep("the adaptive cutoff made the linear drift too strong for dt; reduce dt")
    return Batch(cfg.times(), values, hits, causes, counts, cfg)


def _single(batch):
    return batch.path(0)


def simulate_minimal(psi, psi_hat, x0, cfg, noise=None):
    """One path of the minimal process (both boundaries absorbing)."""
    return _single(run_batch(psi, psi_hat, x0, replace(cfg, n_paths=1), noise))


def simulate_truncated(psi, psi_hat, n, x0, cfg, noise=None):
    """One path with the cooperative jumps capped at n and killing turned into jumps of size n."""
    if n < 1:
        raise ValueError("truncation level must be at least 1")
    return _single(run_batch(psi, psi_hat, x0, replace(cfg, n_paths=1), noise, _Variant(phi_cap=float(n),
                                                                                        kill_to_cap=True)))


def simulate_dual_killed(psi_hat, psi, lambda_n, y0, cfg, noise=None):
    """One path of CBDI(psi_hat, psi) sent to infinity once lambda_n * int Y ds exceeds an Exp(1) mark."""
    if not lambda_n > 0:
        raise ValueError("lambda_n must be positive")
    return _single(run_batch(psi_hat, psi, y0, replace(cfg, n_paths=1), noise, _Variant(dual_kill=float(lambda_n))))


def batch_truncated(psi, psi_hat, n, x0, cfg, noise=None):
    return run_batch(psi, psi_hat, x0, cfg, noise, _Variant(phi_cap=float(n), kill_to_cap=True))


def batch_dual_killed(psi_hat, psi, lambda_n, y0, cfg, noise=None):
    return run_batch(psi_hat, psi, y0, cfg, noise, _Variant(dual_kill=float(lambda_n)))


# -- estimators ---------------------------------------------------------------------


def laplace_values(states, y):
    """e^{-X y} with the boundary products read as limits in y.

    y = 0 gives the indicator of X < inf and y = inf the indicator of X = 0;
    the cemetery at infinity contributes 0 for every y > 0.
    """
    states = np.asarray(states, dtype=float)
    if y == 0:
        return np.where(np.isinf(states), 0.0, 1.0)
    if math.isinf(y):
        return np.where(states == 0.0, 1.0, 0.0)
    out = np.exp(-np.where(np.isinf(states), 0.0, states) * y)
    out[np.isinf(states)] = 0.0
    return out


def mean_and_error(samples):
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n == 0:
        return math.nan, math.nan
    mean = exact_mean(samples)
    if n == 1:
        return mean, math.inf
    var = math.fsum((samples - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def estimate_laplace(psi, psi_hat, x, y, t, cfg, noise=None):
    """(mean, standard error) of e^{-X_t y} from x."""
    batch = run_batch(psi, psi_hat, x, replace(cfg, horizon=_horizon_for(t, cfg)), noise)
    return mean_and_error(laplace_values(batch.at_time(t), y))


def _horizon_for(t, cfg):
    if t <= 0:
        return cfg.dt
    steps = round(t / cfg.dt)
    if abs(steps * cfg.dt - t) > 1e-9 * t:
        raise ValueError("t must be a whole number of steps")
    return steps * cfg.dt


@dataclass
class HittingStatistics:
    level_lo: float
    level_hi: float
    lower_times: np.ndarray
    upper_times: np.ndarray
    extinct_fraction: float
    exploded_fraction: float
    lower_first: tuple  # (fraction, standard error) of paths reaching level_lo before level_hi
    undecided_fraction: float
    exit_oracle: float = None


def hitting_statistics(psi, psi_hat, x0, levels, cfg, noise=None, stop_at_levels=True):
    """First passages below levels[0] and above levels[1], with absorption frequencies.

    For a pure CB with Sigma, the chance of reaching 0 before x + y is
    W(y) / W(x + y); with levels (0, x0 + y) that oracle is attached.
    """
    lo, hi = levels
    variant = _Variant(level_lo=float(lo), level_hi=float(hi), stop_at_levels=stop_at_levels)
    batch = run_batch(psi, psi_hat, x0, cfg, noise, variant)
    lower, upper = batch.hits[:, kernels.H_LO], batch.hits[:, kernels.H_HI]
    if lo <= 0:
        lower = batch.hits[:, kernels.H_ZERO]
    reached_lo = ~np.isnan(lower)
    reached_hi = ~np.isnan(upper)
    first = reached_lo & (~reached_hi | (lower <= upper))
    undecided = ~reached_lo & ~reached_hi
    oracle = None
    d_hat = as_decomposition(psi_hat)
    if lo <= 0 and d_hat.sigma.is_zero and d_hat.phi.is_zero:
        d = as_decomposition(psi)
        if d.phi.is_zero and not d.sigma.is_zero:
            from cbdi.potential_theory import exit_probability

            oracle = float(exit_probability(d.sigma, x0, hi - x0))
    n = max(cfg.n_paths, 1)
    return HittingStatistics(
        lo, hi, lower[reached_lo], upper[reached_hi],
        float(np.count_nonzero(batch.hits[:, kernels.H_ZERO] >= 0)) / n,
        float(np.count_nonzero(batch.hits[:, kernels.H_INF] >= 0)) / n,
        mean_and_error(first.astype(float)), float(np.count_nonzero(undecided)) / n, oracle,
    )


# -- couplings ----------------------------------------------------------------------


@dataclass(frozen=True)
class InitialValues:
    psi: object
    psi_hat: object
    x_low: float
    x_high: float


@dataclass(frozen=True)
class Drifts:
    """Interactions ordered pointwise: psi_hat_low <= psi_hat_high, so X_low >= X_high."""

    psi: object
    psi_hat_low: object
    psi_hat_high: object
    x0: float


@dataclass(frozen=True)
class Truncations:
    psi: object
    psi_hat: object
    n_low: float
    n_high: float
    x0: float


@dataclass
class OrderingReport:
    pairs: int
    grid_points: int
    violations: int
    worst_violation: float
    slack: float
    identical: bool

    @property
    def violation_fraction(self):
        return self.violations / max(self.pairs * self.grid_points, 1)


def coupled_compare(spec, cfg, noise=None, slack=0.0):
    """Run both sides of a coupling on identical noise and count order violations beyond slack."""
    noise = replace(noise or NoiseBundle(cfg.seed), layered=True)
    if isinstance(spec, InitialValues):
        small = run_batch(spec.psi, spec.psi_hat, spec.x_low, cfg, noise).values
        large = run_batch(spec.psi, spec.psi_hat, spec.x_high, cfg, noise).values
    elif isinstance(spec, Drifts):
        small = run_batch(spec.psi, spec.psi_hat_high, spec.x0, cfg, noise).values
        large = run_batch(spec.psi, spec.psi_hat_low, spec.x0, cfg, noise).values
    elif isinstance(spec, Truncations):
        small = batch_truncated(spec.psi, spec.psi_hat, spec.n_low, spec.x0, cfg, noise).values
        large = batch_truncated(spec.psi, spec.psi_hat, spec.n_high, spec.x0, cfg, noise).values
    else:
        raise TypeError(f"unknown coupling {spec!r}")
    with np.errstate(invalid="ignore"):
        gap = np.where(np.isinf(small) & np.isinf(large), 0.0, small - large)
    bad = gap > slack
    worst = float(np.max(gap)) if gap.size else 0.0
    return OrderingReport(
        small.shape[0], small.shape[1], int(np.count_nonzero(bad)), max(worst, 0.0), slack,
        bool(np.array_equal(small, large)),
    )


# -- refinement ---------------------------------------------------------------------------


@dataclass
class RefinementStudy:
    oracle: float
    coarse: tuple  # (dt, mean, standard error)
    fine: tuple
    within_coarse: bool
    within_fine: bool
    structural_bias: bool


def refinement_study(psi, psi_hat, x, y, t, oracle, cfg, k=3.0):
    """Laplace estimates at dt and dt/2 against an oracle.

    A bias is flagged structural when both estimates miss the oracle by more
    than k standard errors and halving dt does not shrink the discrepancy.
    """
    return refinement_studies(psi, psi_hat, x, y, [t], [oracle], cfg, k)[0]


def refinement_studies(psi, psi_hat, x, y, times, oracles, cfg, k=3.0):
    """refinement_study for several times, sharing one batch per step size."""
    estimates = []
    for dt in (cfg.dt, cfg.dt / 2):
        run_cfg = replace(cfg, dt=dt, horizon=_horizon_for(max(times), replace(cfg, dt=dt)))
        batch = run_batch(psi, psi_hat, x, run_cfg)
        estimates.append([(dt, *mean_and_error(laplace_values(batch.at_time(t), y))) for t in times])
    studies = []
    for oracle, coarse, fine in zip(oracles, *estimates):
        (_, m1, s1), (_, m2, s2) = coarse, fine
        d1, d2 = abs(m1 - oracle), abs(m2 - oracle)
        within1, within2 = d1 <= k * s1, d2 <= k * s2
        structural = (not within1) and (not within2) and d2 >= d1
        studies.append(RefinementStudy(oracle, coarse, fine, within1, within2, structural))
    return studies
