"""Flattening mechanisms into arrays the compiled step can read.

An interaction part (Sigma_hat or Phi_hat) becomes either an exact sum of
powers or a log-log table with power-law ends.  A branching mechanism becomes
its jump pieces plus, for a ladder of cutoffs eps * 2^j, the jump rate above
the cutoff, the compensated drift and the small-jump variance.
"""

from dataclasses import dataclass
import math

import numpy as np

from cbdi.mechanisms.jumps import PiecewiseMeasure
from cbdi.numerics import power_integral

ZERO, POWERS, TABLE = 0, 1, 2
TABLE_LOG_RANGE = (-35.0, 35.0)
TABLE_STEP = 0.01
LADDER = 48


@dataclass(frozen=True)
class FunctionTable:
    mode: int
    coefs: np.ndarray
    exponents: np.ndarray
    log_start: float
    log_step: float
    log_values: np.ndarray


def _power_terms(part, kind):
    """(coefs, exponents) when the part is an exact sum of powers, else None."""
    coefs, exps = [], []
    if kind == "sigma":
        if part.diffusion:
            coefs.append(part.diffusion), exps.append(2.0)
        if part.drift:
            coefs.append(part.drift), exps.append(1.0)
    else:
        if part.killing:
            coefs.append(part.killing), exps.append(0.0)
        if part.drift:
            coefs.append(part.drift), exps.append(1.0)
    if part.measure.atoms:
        return None
    for seg in part.measure.segments:
        if not seg.full_range:
            return None
        single = PiecewiseMeasure((seg,), ())
        value = single.compensated(np.array([1.0])) if kind == "sigma" else single.bernstein(np.array([1.0]))
        coefs.append(float(value[0])), exps.append(seg.index)
    return np.array(coefs, dtype=float), np.array(exps, dtype=float)


def function_table(part, kind):
    """Table for a SigmaPart (kind "sigma") or PhiPart (kind "phi")."""
    empty = np.zeros(0)
    if part.is_zero:
        return FunctionTable(ZERO, empty, empty, 0.0, 1.0, empty)
    terms = _power_terms(part, kind)
    if terms is not None:
        return FunctionTable(POWERS, terms[0], terms[1], 0.0, 1.0, empty)
    lo, hi = TABLE_LOG_RANGE
    grid = np.arange(lo, hi + 0.5 * TABLE_STEP, TABLE_STEP)
    values = part.evaluate(np.exp(grid))
    if np.any(values <= 0):
        raise ValueError("interaction part must be positive on (0, inf)")
    return FunctionTable(TABLE, empty, empty, lo, TABLE_STEP, np.log(values))


@dataclass(frozen=True)
class JumpTable:
    seg_coef: np.ndarray
    seg_index: np.ndarray
    seg_lo: np.ndarray
    seg_hi: np.ndarray
    seg_phi: np.ndarray
    atom_pos: np.ndarray
    atom_mass: np.ndarray
    atom_phi: np.ndarray
    cutoffs: np.ndarray  # eps * 2^j
    rates: np.ndarray  # jump mass above each cutoff
    drifts: np.ndarray  # linear drift coefficient for each cutoff
    variances: np.ndarray  # small-jump second moment for each cutoff
    piece_mass: np.ndarray  # (ladder, pieces) mass of each piece above the cutoff
    diffusion: float
    killing: float


def jump_table(decomposition, eps):
    """Arrays for the branching mechanism Psi = Sigma - Phi with cutoff eps."""
    sigma, phi = decomposition.sigma, decomposition.phi
    eta, nu = sigma.measure, phi.measure
    segs = [(s, 0) for s in eta.segments] + [(s, 1) for s in nu.segments]
    atoms = [(u, m, 0) for u, m in eta.atoms] + [(u, m, 1) for u, m in nu.atoms]
    cutoffs = eps * 2.0 ** np.arange(LADDER)
    both = eta.plus(nu)
    rates = np.array([float(both.tail(c)) for c in cutoffs])
    drifts = np.array(
        [phi.drift - sigma.drift - eta.moment(1.0, c, math.inf) + nu.moment(1.0, 0.0, c) for c in cutoffs]
    )
    variances = np.array([both.moment(2.0, 0.0, c) for c in cutoffs])
    piece_mass = np.zeros((LADDER, len(segs) + len(atoms)))
    for j, c in enumerate(cutoffs):
        for k, (s, _) in enumerate(segs):
            lo = max(s.lo, c)
            piece_mass[j, k] = s.coef * float(power_integral(-s.index, lo, s.hi)) if s.hi > lo else 0.0
        for k, (u, m, _) in enumerate(atoms):
            piece_mass[j, len(segs) + k] = m if u > c else 0.0
    arr = lambda xs: np.array(xs, dtype=float)
    return JumpTable(
        arr([s.coef for s, _ in segs]),
        arr([s.index for s, _ in segs]),
        arr([s.lo for s, _ in segs]),
        arr([s.hi for s, _ in segs]),
        np.array([f for _, f in segs], dtype=np.int64),
        arr([a[0] for a in atoms]),
        arr([a[1] for a in atoms]),
        np.array([a[2] for a in atoms], dtype=np.int64),
        cutoffs,
        rates,
        drifts,
        variances,
        piece_mass,
        float(sigma.diffusion),
        float(phi.killing),
    )
