"""Boundary verdicts for 0 and infinity from condition checks and parameter estimates.

Each boundary is decided along two axes, accessibility and absorption, by
independent rules.  A rule fires only when every hypothesis it needs is
positively established; an Inconclusive condition or a parameter inside the
tolerance band around 1 blocks exactly the rules that depend on it.  The
verdict is then read off the pair:

                  absorbing    non-absorbing
    accessible    Exit         Regular
    inaccessible  Natural      Entrance
"""

from dataclasses import dataclass, field
from enum import Enum
import math

from scipy import special

from cbdi.boundary_params import (
    GridConfig,
    closed_estimate,
    estimate_rho,
    estimate_theta,
    estimate_xi,
    slowly_varying_factors,
)
from cbdi.errors import CbdiError
from cbdi.mechanisms.conditions import Trichotomy, Verdict, integral_condition
from cbdi.mechanisms.mechanism import as_decomposition

DEFAULT_TAU = 0.05
FINITE_MEANS_HOLDS = {"JI"}


class BoundaryVerdict(Enum):
    ENTRANCE = "Entrance"
    EXIT = "Exit"
    REGULAR = "Regular"
    NATURAL = "Natural"
    INDETERMINATE = "Indeterminate"


_TABLE = {
    (True, True): BoundaryVerdict.EXIT,
    (True, False): BoundaryVerdict.REGULAR,
    (False, True): BoundaryVerdict.NATURAL,
    (False, False): BoundaryVerdict.ENTRANCE,
}


@dataclass
class BoundaryReport:
    boundary: str
    process: str
    verdict: BoundaryVerdict
    accessible: bool = None
    absorbing: bool = None
    conditions: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    rationale: list = field(default_factory=list)
    missing: list = field(default_factory=list)

    @property
    def determinate(self):
        return self.verdict is not BoundaryVerdict.INDETERMINATE

    def as_record(self):
        return {
            "boundary": self.boundary,
            "process": self.process,
            "verdict": self.verdict.value,
            "accessible": self.accessible,
            "absorbing": self.absorbing,
            "conditions": {k: _condition_record(v) for k, v in self.conditions.items()},
            "parameters": {k: v.as_record() if v is not None else None for k, v in self.parameters.items()},
            "extras": dict(self.extras),
            "rationale": list(self.rationale),
            "missing": list(self.missing),
        }


def _condition_record(value):
    if isinstance(value, Trichotomy):
        return value.verdict.value
    return value


# -- comparisons against 1 -------------------------------------------------------------


def upper_below_one(estimate, tau=DEFAULT_TAU):
    """True when the upper limit is below 1, False when it is above 1, None inside the band."""
    if estimate is None:
        return None
    if estimate.limsup < 1.0 - tau and estimate.trend != "increasing":
        return True
    if estimate.liminf > 1.0 + tau and estimate.trend != "decreasing":
        return False
    return None


def lower_above_one(estimate, tau=DEFAULT_TAU):
    """True when the lower limit is above 1, False when it is below 1, None inside the band."""
    if estimate is None:
        return None
    if estimate.liminf > 1.0 + tau and estimate.trend != "decreasing":
        return True
    if estimate.limsup < 1.0 - tau and estimate.trend != "increasing":
        return False
    return None


# -- evidence gathering --------------------------------------------------------------------


class _Evidence:
    """Lazily computed conditions and parameters for the pair (Psi, Psi_hat).

    overrides maps a condition or parameter name to a Trichotomy, a Verdict,
    a bool (for flags) or a LimitEstimate, replacing the computed value.
    """

    def __init__(self, psi, psi_hat, config, tau, overrides, method):
        self.d = as_decomposition(psi)
        self.dh = as_decomposition(psi_hat)
        self.config = config or GridConfig()
        self.tau = tau
        self.overrides = dict(overrides or {})
        self.method = method
        self.conditions = {}
        self.parameters = {}
        self.rationale = []
        self.missing = []

    # conditions hold when the integral diverges, except those in FINITE_MEANS_HOLDS
    def holds(self, name):
        value = self._condition(name)
        if isinstance(value, bool):
            return value
        if value.verdict is Verdict.INCONCLUSIVE:
            return None
        if name in FINITE_MEANS_HOLDS:
            return value.verdict is Verdict.FINITE
        return value.verdict is Verdict.INFINITE

    def _condition(self, name):
        if name in self.conditions:
            return self.conditions[name]
        if name in self.overrides:
            value = self.overrides[name]
            if isinstance(value, Verdict):
                value = Trichotomy(value, reason="override")
        else:
            value = self._compute_condition(name)
        self.conditions[name] = value
        return value

    def _compute_condition(self, name):
        d, dh = self.d, self.dh
        try:
            if name == "H1":
                return integral_condition("H1", d)
            if name == "H2":
                return integral_condition("H2", d)
            if name == "H1_hat":
                return integral_condition("H1", dh)
            if name == "H2_hat":
                return integral_condition("H2", dh)
            if name == "JI":
                return integral_condition("JI", d, dh)
        except CbdiError as exc:
            return Trichotomy(Verdict.INCONCLUSIVE, reason=str(exc))
        flags = {
            "a=0": d.sigma.diffusion == 0,
            "a_hat=0": dh.sigma.diffusion == 0,
            "lambda>0": d.phi.killing > 0,
            "lambda_hat>0": dh.phi.killing > 0,
            "Phi_hat'(0+) in (0,inf)": 0 < dh.phi.slope_at_zero() < math.inf,
            "Phi'(0+) finite": math.isfinite(d.phi.slope_at_zero()),
        }
        if name in flags:
            return bool(flags[name])
        raise KeyError(name)

    def all_hold(self, tag, requirements):
        """True when every (name, expected) requirement is established; records gaps."""
        gaps = []
        for name, expected in requirements:
            value = self.holds(name)
            if value is None:
                gaps.append(f"{tag}: {name} undecided")
            elif value != expected:
                return False
        self.missing.extend(gaps)
        return not gaps

    def parameter(self, name):
        if name in self.parameters:
            return self.parameters[name]
        if name in self.overrides:
            value = self.overrides[name]
            if isinstance(value, (int, float)):
                value = closed_estimate(value, "override")
        else:
            value = self._compute_parameter(name)
        self.parameters[name] = value
        return value

    def _compute_parameter(self, name):
        d, dh = self.d, self.dh
        try:
            if name == "theta(Phi,Sigma_hat)":
                return estimate_theta(d.phi, dh.sigma, self.config, self.method)
            if name == "rho(Sigma_hat,Phi)":
                return estimate_rho(dh.sigma, d.phi, self._rho_config(), self.method)
            if name == "theta(Phi_hat,Sigma)":
                return estimate_theta(dh.phi, d.sigma, self.config, self.method)
            if name == "rho(Sigma,Phi_hat)":
                return estimate_rho(d.sigma, dh.phi, self._rho_config(), self.method)
        except CbdiError as exc:
            self.missing.append(f"{name}: {exc}")
            return None
        raise KeyError(name)

    def _rho_config(self):
        c = self.config
        return GridConfig(c.points_per_decade, c.decades, 1.0 / c.start, c.window_decades, c.tolerance, c.kind)

    def below(self, name):
        result = upper_below_one(self.parameter(name), self.tau)
        if result is None:
            self.missing.append(f"upper {name} not separated from 1")
        return result

    def above(self, name):
        result = lower_above_one(self.parameter(name), self.tau)
        if result is None:
            self.missing.append(f"lower {name} not separated from 1")
        return result


class _Axis:
    """Collects conclusions for one axis and flags contradictions."""

    def __init__(self, name):
        self.name = name
        self.value = None
        self.conflict = False

    def set(self, value, evidence, tag):
        if self.value is not None and self.value != value:
            self.conflict = True
            evidence.missing.append(f"conflicting {self.name} conclusions ({tag})")
            return
        self.value = value
        evidence.rationale.append(tag)


def _report(boundary, process, evidence, access, absorb):
    if access.conflict or absorb.conflict or access.value is None or absorb.value is None:
        verdict = BoundaryVerdict.INDETERMINATE
    else:
        verdict = _TABLE[(access.value, absorb.value)]
    return BoundaryReport(
        boundary,
        process,
        verdict,
        None if access.conflict else access.value,
        None if absorb.conflict else absorb.value,
        dict(evidence.conditions),
        dict(evidence.parameters),
        {},
        list(dict.fromkeys(evidence.rationale)),
        list(dict.fromkeys(evidence.missing)),
    )


# -- the two boundaries -------------------------------------------------------------------


def classify_infinity(psi, psi_hat, config=None, tau=DEFAULT_TAU, overrides=None, method="auto", process="X"):
    """Verdict for infinity of the CBDI(psi, psi_hat) extended at infinity."""
    ev = _Evidence(psi, psi_hat, config, tau, overrides, method)
    access, absorb = _Axis("accessibility"), _Axis("absorption")

    if ev.all_hold("non-explosion", [("H1", True)]):
        access.set(False, ev, "H1: no explosion")
    if ev.all_hold("killing", [("lambda>0", True)]):
        access.set(True, ev, "lambda > 0: killing sends the process to infinity")
    rho_hyps = [("H1_hat", True), ("a_hat=0", True), ("H2_hat", False), ("H1", False)]
    if ev.all_hold("rho accessibility", rho_hyps):
        if ev.below("rho(Sigma_hat,Phi)"):
            access.set(True, ev, "upper rho(Sigma_hat,Phi) < 1: infinity accessible")
        elif ev.above("rho(Sigma_hat,Phi)"):
            access.set(False, ev, "lower rho(Sigma_hat,Phi) > 1: infinity inaccessible")

    extension = [("H2_hat", False), ("H1_hat", True)]
    if ev.all_hold("theta absorption", extension):
        if ev.below("theta(Phi,Sigma_hat)"):
            absorb.set(False, ev, "upper theta(Phi,Sigma_hat) < 1: infinity non-absorbing")
        elif ev.above("theta(Phi,Sigma_hat)"):
            absorb.set(True, ev, "lower theta(Phi,Sigma_hat) > 1: infinity absorbing")
    if ev.all_hold("weak competition", [("H2_hat", True), ("H1_hat", True), ("H1", True)]):
        absorb.set(True, ev, "H2_hat with both processes non-explosive: infinity natural")
    if ev.all_hold("finite-mean entrance", [("Phi_hat'(0+) in (0,inf)", True), ("JI", True)]):
        access.set(False, ev, "JI with Phi_hat'(0+) finite: infinity entrance")
        absorb.set(False, ev, "JI with Phi_hat'(0+) finite: infinity entrance")

    return _report("infinity", process, ev, access, absorb)


def classify_zero(psi, psi_hat, config=None, tau=DEFAULT_TAU, overrides=None, method="auto", process="X"):
    """Verdict for 0 of the CBDI(psi, psi_hat) extended at 0."""
    ev = _Evidence(psi, psi_hat, config, tau, overrides, method)
    access, absorb = _Axis("accessibility"), _Axis("absorption")

    if ev.all_hold("non-extinction", [("H2", True)]):
        access.set(False, ev, "H2: no extinction")
    extension = [("H2", False), ("H1", True)]
    if ev.all_hold("theta accessibility", extension):
        if ev.below("theta(Phi_hat,Sigma)"):
            access.set(True, ev, "upper theta(Phi_hat,Sigma) < 1: 0 accessible")
        elif ev.above("theta(Phi_hat,Sigma)"):
            access.set(False, ev, "lower theta(Phi_hat,Sigma) > 1: 0 entrance")
            absorb.set(False, ev, "lower theta(Phi_hat,Sigma) > 1: 0 entrance")

    rho_hyps = [("H1", True), ("a=0", True), ("H2", False), ("H1_hat", False)]
    if ev.all_hold("rho absorption", rho_hyps):
        if ev.below("rho(Sigma,Phi_hat)"):
            absorb.set(False, ev, "upper rho(Sigma,Phi_hat) < 1: 0 non-absorbing")
        elif ev.above("rho(Sigma,Phi_hat)"):
            absorb.set(True, ev, "lower rho(Sigma,Phi_hat) > 1: 0 absorbing")
    if ev.all_hold("killed cooperation", extension + [("a=0", True), ("lambda_hat>0", True)]):
        access.set(False, ev, "Phi_hat(0) > 0 without diffusion: 0 entrance")
        absorb.set(False, ev, "Phi_hat(0) > 0 without diffusion: 0 entrance")
    if ev.all_hold("non-explosive dual", extension + [("a=0", True), ("H1_hat", True)]):
        absorb.set(True, ev, "H1_hat: the dual cannot explode, 0 absorbing")
    if ev.all_hold("weak cooperation", [("H2", True), ("H1", True), ("H1_hat", True)]):
        access.set(False, ev, "H2 with both processes non-explosive: 0 natural")
        absorb.set(True, ev, "H2 with both processes non-explosive: 0 natural")

    return _report("zero", process, ev, access, absorb)


def classify_pair(psi, psi_hat, config=None, tau=DEFAULT_TAU, method="auto"):
    """The paired reports: infinity of X = CBDI(psi, psi_hat) and 0 of Y = CBDI(psi_hat, psi)."""
    at_infinity = classify_infinity(psi, psi_hat, config, tau, method=method, process="X")
    at_zero = classify_zero(psi_hat, psi, config, tau, method=method, process="Y")
    flags = regularity_flags(psi, psi_hat, config, tau)
    at_infinity.extras.update(flags["infinity"])
    at_zero.extras.update(flags["zero"])
    return at_infinity, at_zero


def classify_all(psi, psi_hat, config=None, tau=DEFAULT_TAU, method="auto"):
    """Both boundaries of both processes."""
    return {
        ("X", "infinity"): classify_infinity(psi, psi_hat, config, tau, method=method, process="X"),
        ("X", "zero"): classify_zero(psi, psi_hat, config, tau, method=method, process="X"),
        ("Y", "infinity"): classify_infinity(psi_hat, psi, config, tau, method=method, process="Y"),
        ("Y", "zero"): classify_zero(psi_hat, psi, config, tau, method=method, process="Y"),
    }


# -- regular-for-itself and non-sticky ----------------------------------------------------------


def regularity_flags(psi, psi_hat, config=None, tau=DEFAULT_TAU):
    """Flags for infinity of X and 0 of Y in the regularly varying window.

    Values are "Yes" when the window condition on xi holds and the structural
    case applies, "Unknown" otherwise; no rule here produces "No".
    """
    unknown = {"regular_for_itself": "Unknown", "non_sticky": "Unknown"}
    flags = {"infinity": dict(unknown), "zero": dict(unknown)}
    d, dh = as_decomposition(psi), as_decomposition(psi_hat)
    try:
        alpha, ell, big_l = slowly_varying_factors(d.phi, dh.sigma)
    except CbdiError:
        return flags
    small, large = d.phi.at_zero(), dh.sigma.at_infinity()
    if small.log_power == 0 and large.log_power == 0:
        xi = closed_estimate(small.coef / large.coef, "constant slowly varying factors")
    else:
        xi = estimate_xi(ell, big_l, config)
    low, high = 1.0 / special.gamma(alpha), special.gamma(2.0 - alpha)
    inside = xi.liminf > low * (1.0 + tau) and xi.limsup < high * (1.0 - tau)
    if not inside:
        return flags
    if d.sigma.is_zero:
        flags["infinity"]["regular_for_itself"] = "Yes"
        flags["zero"]["non_sticky"] = "Yes"
    if dh.phi.is_zero:
        flags["zero"]["regular_for_itself"] = "Yes"
        flags["infinity"]["non_sticky"] = "Yes"
    return flags
