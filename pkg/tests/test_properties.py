import math

import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from cbdi.boundary_params import estimate_theta
from cbdi.cli_io import dump_config, parse_config
from cbdi.cli_io.config import from_dict
from cbdi.duality_lab import ode_flow
from cbdi.mechanisms.jumps import FiniteAtoms, StableTail, Superposition
from cbdi.mechanisms.mechanism import (
    as_decomposition,
    canonical_decomposition,
    make_mechanism,
    power_mechanism,
    pure_phi,
    pure_sigma,
    truncated_decomposition,
)

from conftest import value


def np_approx(expected, rel=1e-9):
    return pytest.approx(expected, rel=rel, abs=1e-10)


PROPERTY = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

positive = st.floats(0.05, 5.0)
index_below_one = st.floats(0.1, 0.9)
index_above_one = st.floats(1.1, 1.9)


@st.composite
def mechanisms(draw):
    parts = []
    if draw(st.booleans()):
        parts.append(StableTail(draw(positive), draw(st.floats(0.1, 1.9))))
    if draw(st.booleans()):
        count = draw(st.integers(1, 3))
        positions = tuple(sorted(draw(st.lists(st.floats(0.1, 6.0), min_size=count, max_size=count, unique=True))))
        masses = tuple(draw(st.lists(positive, min_size=count, max_size=count)))
        parts.append(FiniteAtoms(positions, masses))
    jumps = Superposition(tuple(parts)) if len(parts) > 1 else (parts[0] if parts else None)
    kwargs = dict(a=draw(st.floats(0.0, 2.0)), gamma=draw(st.floats(-3.0, 3.0)), lam=draw(st.floats(0.0, 2.0)))
    return make_mechanism(jumps, **kwargs) if jumps is not None else make_mechanism(**kwargs)


@st.composite
def power_terms(draw):
    terms = []
    if draw(st.booleans()):
        terms.append((draw(positive), 2.0))
    if draw(st.booleans()):
        terms.append((draw(positive), draw(index_above_one)))
    if draw(st.booleans()):
        terms.append((draw(st.floats(-3.0, 3.0)), 1.0))
    if draw(st.booleans()):
        terms.append((-draw(positive), draw(index_below_one)))
    if draw(st.booleans()):
        terms.append((-draw(positive), 0.0))
    return terms


@PROPERTY
@given(mechanisms(), st.floats(0.01, 50.0), st.floats(0.01, 50.0))
def test_mechanism_is_convex(m, x, y):
    mid = value(m, 0.5 * (x + y))
    chord = 0.5 * (value(m, x) + value(m, y))
    assert mid <= chord + 1e-9 * (1.0 + abs(chord))


@PROPERTY
@given(mechanisms(), st.sampled_from(["canonical", "analytic"]), st.floats(1e-3, 1e3))
def test_decomposition_is_sound(m, kind, x):
    d = as_decomposition(m, kind)
    target = value(m, x)
    assert value(d.sigma, x) - value(d.phi, x) == np_approx(target)
    assert value(d.phi, x) >= -1e-12


@PROPERTY
@given(mechanisms(), st.floats(1e-2, 1e2), st.floats(1.0, 4.0))
def test_truncation_sandwich(m, x, n):
    full = value(canonical_decomposition(m).phi, x)
    lower = value(truncated_decomposition(m, n).phi, x)
    higher = value(truncated_decomposition(m, 2.0 * n).phi, x)
    assert lower <= higher + 1e-9 * (1.0 + abs(higher))
    assert higher <= full + 1e-9 * (1.0 + abs(full))


@PROPERTY
@given(st.floats(0.1, 2.0), index_below_one, st.floats(1.0, 3.0))
def test_theta_is_monotone_in_the_cooperation_scale(c, alpha, factor):
    sigma_hat = pure_sigma(1.0, 2.0 - alpha)
    low = estimate_theta(pure_phi(c, alpha), sigma_hat).value
    high = estimate_theta(pure_phi(c * factor, alpha), sigma_hat).value
    assert high >= low * (1.0 - 1e-12)
    assert high == np_approx(low * factor)


@PROPERTY
@given(power_terms(), st.floats(0.1, 10.0), st.floats(0.01, 0.5), st.floats(0.01, 0.5))
def test_flow_property(terms, y, s, t):
    psi = power_mechanism(terms)
    try:
        direct = ode_flow(psi, y, s + t)
        composed = ode_flow(psi, ode_flow(psi, y, s), t)
    except (ValueError, ArithmeticError):
        assume(False)
    assume(math.isfinite(direct) and 0 < direct < 1e100)
    assert composed == np_approx(direct, rel=1e-7)


@PROPERTY
@given(power_terms(), power_terms(), st.integers(0, 2**31), st.floats(1e-4, 0.1), st.integers(0, 5000))
def test_config_round_trip(terms, terms_hat, seed, dt, paths):
    doc = {"seed": seed, "psi": {"terms": [list(t) for t in terms]},
           "psi_hat": {"terms": [list(t) for t in terms_hat]}, "sim": {"dt": dt, "paths": paths}}
    cfg = from_dict(doc)
    text = dump_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert dump_config(again) == text
