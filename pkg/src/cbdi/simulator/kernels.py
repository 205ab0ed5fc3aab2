"""Compiled path stepping.

One step from state x, in this order:

  1. continuous part in the square-root variable:
     s = sqrt(x) + k dB, x1 = s^2 - k^2 dt, with 4 k^2 = 2a + v(eps);
     a > 0 absorbs at 0 when s <= 0, x1 <= 0 or the Brownian bridge of
     sqrt(x) crosses 0 inside the step;
  2. linear drift as the factor (1 + b(eps) dt);
  3. jumps above eps at rate x * rate(eps), killing at rate lambda x;
  4. cooperation explicitly, w = x3 + dt Phi_hat(x);
  5. competition implicitly, z + dt Sigma_hat(z) = w.

Every map is nondecreasing in x given the noise, so couplings stay ordered.
In layered mode the jump points live on nested dyadic strips of the
(r, u) plane and a path at x accepts the points with r <= x, so two coupled
paths see nested jump sets.
"""

import math

import numba
import numpy as np

from cbdi.simulator.rng import (
    BRIDGE,
    BROWNIAN,
    COUNTS,
    EXPONENTIAL,
    KILLING,
    MARKS,
    exponential,
    normal,
    poisson,
    stream_key,
    uniform,
)

# above this expected count per step the cutoff climbs the ladder; the Gaussian
# correction's relative skewness then stays near sqrt(dt / MAX_JUMPS_PER_STEP)
MAX_JUMPS_PER_STEP = 16.0
LAYER_BASE = 2.0**-10
NEWTON_ITERATIONS = 200

# float parameter slots
F_DT, F_X_FLOOR, F_X_CEIL, F_LEVEL_LO, F_LEVEL_HI, F_PHI_CAP, F_ALL_CAP, F_DUAL_KILL = range(8)
F_SIZE = 8
# integer parameter slots
I_SEED, I_STEPS, I_RECORD_EVERY, I_SMALL_MODE, I_KILL_MODE, I_LAYERED, I_STOP_AT_LEVELS, I_ADAPTIVE = range(8)
I_SIZE = 8
# hit columns
H_LO, H_HI, H_ZERO, H_INF = range(4)
# causes of absorption
CAUSE_NONE, CAUSE_EXTINCTION, CAUSE_EXPLOSION, CAUSE_KILLING, CAUSE_DUAL_KILL = range(5)
# status codes
OK, UNSTABLE = 0, 1


@numba.njit(cache=True, inline="always")
def table_value(mode, coefs, exps, log_start, log_step, log_values, x):
    """Value and derivative of an interaction part at x > 0."""
    if mode == 0 or x <= 0.0:
        return 0.0, 0.0
    if mode == 1:
        value = 0.0
        slope = 0.0
        for i in range(coefs.size):
            term = coefs[i] * x ** exps[i]
            value += term
            slope += exps[i] * term / x
        return value, slope
    t = (math.log(x) - log_start) / log_step
    n = log_values.size
    i = int(math.floor(t))
    if i < 0:
        i = 0
    if i > n - 2:
        i = n - 2
    frac = t - i
    local = (log_values[i + 1] - log_values[i]) / log_step
    value = math.exp(log_values[i] + frac * (log_values[i + 1] - log_values[i]))
    return value, value * local / x


@numba.njit(cache=True, inline="always")
def solve_competition(mode, coefs, exps, log_start, log_step, log_values, w, dt):
    """Root z of z + dt Sigma_hat(z) = w; Newton from the right is monotone for convex Sigma_hat."""
    if mode == 0 or w <= 0.0:
        return w
    z = w
    for _ in range(NEWTON_ITERATIONS):
        value, slope = table_value(mode, coefs, exps, log_start, log_step, log_values, z)
        g = z + dt * value - w
        step = g / (1.0 + dt * slope)
        z_new = z - step
        if z_new <= 0.0:
            z_new = 0.5 * z
        if abs(z_new - z) <= 1e-15 * z:
            return z_new
        z = z_new
    return z


@numba.njit(cache=True)
def sample_mark(key, step, index, j, seg_coef, seg_index, seg_lo, seg_hi, atom_pos, cutoffs, piece_mass, total):
    """Jump size above cutoffs[j] and the piece it came from."""
    target = uniform(key, step, 2 * index) * total
    n_seg = seg_coef.size
    n_pieces = piece_mass.shape[1]
    k = 0
    acc = piece_mass[j, 0]
    while acc < target and k < n_pieces - 1:
        k += 1
        acc += piece_mass[j, k]
    while piece_mass[j, k] == 0.0 and k > 0:
        k -= 1
    if k >= n_seg:
        return atom_pos[k - n_seg], k
    v = uniform(key, step, 2 * index + 1)
    s = seg_index[k]
    lo = max(seg_lo[k], cutoffs[j])
    hi = seg_hi[k]
    if abs(s) < 1e-12:
        return lo * math.exp(v * math.log(hi / lo)), k
    a = lo ** (-s)
    b = 0.0 if math.isinf(hi) else hi ** (-s)
    return (a - v * (a - b)) ** (-1.0 / s), k


@numba.njit(cache=True)
def jump_total(count_key, key, step, x, j, dt, rate, layered, seg_coef, seg_index, seg_lo, seg_hi, seg_phi, atom_pos, atom_phi,
               cutoffs, piece_mass, phi_cap, all_cap):
    """Sum of jumps in one step for a path at x; returns (sum, count)."""
    total_rate = rate * dt
    if total_rate <= 0.0 or x <= 0.0:
        return 0.0, 0
    n_seg = seg_coef.size
    acc = 0.0
    count = 0
    if layered == 0:
        n = poisson(count_key, step, 0, x * total_rate)
        for i in range(n):
            u, k = sample_mark(key, step, i, j, seg_coef, seg_index, seg_lo, seg_hi, atom_pos, cutoffs, piece_mass,
                               rate)
            phi = seg_phi[k] if k < n_seg else atom_phi[k - n_seg]
            if phi == 1 and u > phi_cap:
                u = phi_cap
            if u > all_cap:
                u = all_cap
            acc += u
        return acc, n
    layer = 0
    lower = 0.0
    upper = LAYER_BASE
    while lower < x:
        n = poisson(count_key, step, layer, (upper - lower) * total_rate)
        for i in range(n):
            index = (layer << 24) + 3 * i
            r = lower + (upper - lower) * uniform(key, step, index + 2 + (1 << 40))
            if r > x:
                continue
            u, k = sample_mark(key, step, index, j, seg_coef, seg_index, seg_lo, seg_hi, atom_pos, cutoffs,
                               piece_mass, rate)
            phi = seg_phi[k] if k < n_seg else atom_phi[k - n_seg]
            if phi == 1 and u > phi_cap:
                u = phi_cap
            if u > all_cap:
                u = all_cap
            acc += u
            count += 1
        layer += 1
        lower = upper
        upper *= 2.0
    return acc, count


@numba.njit(cache=True, parallel=True)
def run_paths(
    fparams, iparams, path_ids, x0,
    diffusion, killing,
    seg_coef, seg_index, seg_lo, seg_hi, seg_phi, atom_pos, atom_phi,
    cutoffs, rates, drifts, variances, piece_mass,
    s_mode, s_coefs, s_exps, s_start, s_step, s_logv,
    p_mode, p_coefs, p_exps, p_start, p_step, p_logv,
    out_values, out_hits, out_cause, out_jumps, out_status,
):
    dt = fparams[F_DT]
    x_floor, x_ceil = fparams[F_X_FLOOR], fparams[F_X_CEIL]
    level_lo, level_hi = fparams[F_LEVEL_LO], fparams[F_LEVEL_HI]
    phi_cap, all_cap = fparams[F_PHI_CAP], fparams[F_ALL_CAP]
    dual_kill = fparams[F_DUAL_KILL]
    seed, n_steps, every = iparams[I_SEED], iparams[I_STEPS], iparams[I_RECORD_EVERY]
    small_mode, kill_mode, layered = iparams[I_SMALL_MODE], iparams[I_KILL_MODE], iparams[I_LAYERED]
    stop_at_levels, adaptive = iparams[I_STOP_AT_LEVELS], iparams[I_ADAPTIVE]
    n_paths = path_ids.size
    n_ladder = cutoffs.size

    for p in numba.prange(n_paths):
        pid = path_ids[p]
        k_bm = stream_key(seed, pid, BROWNIAN)
        k_count = stream_key(seed, pid, COUNTS)
        k_kill = stream_key(seed, pid, KILLING)
        k_bridge = stream_key(seed, pid, BRIDGE)
        mark_key = stream_key(seed, pid, MARKS)
        for c in range(4):
            out_hits[p, c] = np.nan
        out_cause[p] = CAUSE_NONE
        out_jumps[p] = 0
        out_status[p] = OK
        x = x0
        if x <= 0.0:
            x = 0.0
            out_hits[p, H_ZERO] = 0.0
            out_cause[p] = CAUSE_EXTINCTION
        elif math.isinf(x):
            out_hits[p, H_INF] = 0.0
            out_cause[p] = CAUSE_EXPLOSION
        if x <= level_lo:
            out_hits[p, H_LO] = 0.0
        if x >= level_hi:
            out_hits[p, H_HI] = 0.0
        mark = exponential(stream_key(seed, pid, EXPONENTIAL), 0, 0) if dual_kill > 0.0 else math.inf
        integral = 0.0
        out_values[p, 0] = x
        rec = 1
        stopped = False
        for step in range(n_steps):
            alive = x > 0.0 and not math.isinf(x) and not stopped
            if alive:
                j = 0
                if adaptive == 1:
                    while j < n_ladder - 1 and x * rates[j] * dt > MAX_JUMPS_PER_STEP:
                        j += 1
                b = drifts[j]
                if b * dt < -0.5:
                    out_status[p] = UNSTABLE
                v = variances[j] if small_mode == 1 else 0.0
                kappa2 = 0.25 * (2.0 * diffusion + v)
                t_end = (step + 1) * dt
                new = x
                extinct = False
                if kappa2 > 0.0:
                    root = math.sqrt(x)
                    s = root + math.sqrt(kappa2 * dt) * normal(k_bm, step, 0)
                    new = s * s - kappa2 * dt if s > 0.0 else 0.0
                    if diffusion > 0.0:
                        if s <= 0.0 or new <= 0.0:
                            extinct = True
                        elif uniform(k_bridge, step, 0) < math.exp(-2.0 * root * s / (kappa2 * dt)):
                            extinct = True
                    if new < 0.0:
                        new = 0.0
                if extinct:
                    x_next = 0.0
                else:
                    new = new * (1.0 + b * dt)
                    if rates[j] > 0.0:
                        jumps, count = jump_total(
                            k_count, mark_key, step, x, j, dt, rates[j], layered, seg_coef, seg_index, seg_lo, seg_hi,
                            seg_phi, atom_pos, atom_phi, cutoffs, piece_mass, phi_cap, all_cap,
                        )
                        new += jumps
                        out_jumps[p] += count
                    killed = False
                    if killing > 0.0 and uniform(k_kill, step, 0) < -math.expm1(-killing * x * dt):
                        if kill_mode == 1:
                            new += phi_cap
                        else:
                            killed = True
                    if killed:
                        x_next = math.inf
                        out_cause[p] = CAUSE_KILLING
                        out_hits[p, H_INF] = t_end
                    else:
                        w = new
                        if p_mode != 0:
                            coop, _ = table_value(p_mode, p_coefs, p_exps, p_start, p_step, p_logv, x)
                            w += dt * coop
                        x_next = w
                        if s_mode != 0:
                            x_next = solve_competition(s_mode, s_coefs, s_exps, s_start, s_step, s_logv, w, dt)
                        if x_next >= x_ceil:
                            x_next = math.inf
                            out_cause[p] = CAUSE_EXPLOSION
                            out_hits[p, H_INF] = t_end
                        elif x_next <= x_floor and (diffusion == 0.0 or x_next <= 0.0):
                            extinct = True
                            x_next = 0.0
                if extinct:
                    out_cause[p] = CAUSE_EXTINCTION
                    out_hits[p, H_ZERO] = t_end
                # level passages, with a bridge check on the diffusive part
                if math.isnan(out_hits[p, H_LO]):
                    crossed = x_next <= level_lo
                    if not crossed and diffusion > 0.0 and level_lo > 0.0 and x_next > 0.0:
                        gap = (math.sqrt(x) - math.sqrt(level_lo)) * (math.sqrt(x_next) - math.sqrt(level_lo))
                        crossed = uniform(k_bridge, step, 1) < math.exp(-2.0 * gap / (kappa2 * dt))
                    if crossed:
                        out_hits[p, H_LO] = t_end
                if math.isnan(out_hits[p, H_HI]):
                    crossed = x_next >= level_hi
                    if not crossed and diffusion > 0.0 and not math.isinf(level_hi) and x_next > 0.0:
                        gap = (math.sqrt(level_hi) - math.sqrt(x)) * (math.sqrt(level_hi) - math.sqrt(x_next))
                        crossed = uniform(k_bridge, step, 2) < math.exp(-2.0 * gap / (kappa2 * dt))
                    if crossed:
                        out_hits[p, H_HI] = t_end
                if dual_kill > 0.0 and 0.0 < x_next and not math.isinf(x_next):
                    integral += dual_kill * 0.5 * (x + x_next) * dt
                    if integral > mark:
                        x_next = math.inf
                        out_cause[p] = CAUSE_DUAL_KILL
                        out_hits[p, H_INF] = t_end
                x = x_next
                if stop_at_levels == 1 and not (math.isnan(out_hits[p, H_LO]) and math.isnan(out_hits[p, H_HI])):
                    stopped = True
            if (step + 1) % every == 0 and rec < out_values.shape[1]:
                out_values[p, rec] = x
                rec += 1
