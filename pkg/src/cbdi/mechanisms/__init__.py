"""Levy-Khintchine mechanisms, decompositions and integral conditions."""

from cbdi.mechanisms.jumps import (
    FiniteAtoms,
    JumpMeasure,
    NullMeasure,
    PiecewiseMeasure,
    PowerSegment,
    StableTail,
    Superposition,
    TabulatedTail,
    Truncated,
    measure_from_description,
)
from cbdi.mechanisms.mechanism import (
    Classification,
    Decomposition,
    Mechanism,
    MechanismClass,
    PhiPart,
    PowerLaw,
    SigmaPart,
    analytic_decomposition,
    as_decomposition,
    canonical_decomposition,
    classify_mechanism,
    derivative,
    derivative_at_zero,
    evaluate,
    largest_zero,
    make_mechanism,
    power_decomposition,
    power_mechanism,
    pure_phi,
    pure_sigma,
    second_derivative,
    shift,
    truncate,
    truncated_decomposition,
)
