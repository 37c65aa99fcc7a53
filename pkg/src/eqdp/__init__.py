"""Stochastic control with mode-switching affine dynamics and quadratic-plus-
equality-constraint costs: a closed function algebra, exact dynamic
programming over it, canonical problem builders, and a CLI."""

from .extquad import (AffineMap, ExtendedQuadratic, FreeParamRep, ImproperInput,
                      IMPROPER, NONCONVEX, OK, UNBOUNDED, free_param,
                      range_contains)
from .moments import (ConstraintsPresent, ExactMoments, MomentPair,
                      SecondMomentTensor, expected_precompose,
                      expected_quadratic, lognormal_moments)
from .dp import (BLOCKED, DEFAULT_CHUNK, DIVERGENCE_BOUND, ProblemSpec, Solution,
                 SpreadReport, StageBatch, StageSample, Trajectory, bellman_apply,
                 dp_finite, dp_infinite, mc_error, simulate, stage_cost,
                 stream_rng)

__all__ = [
    "AffineMap", "ExtendedQuadratic", "FreeParamRep", "ImproperInput",
    "IMPROPER", "NONCONVEX", "OK", "UNBOUNDED", "free_param", "range_contains",
    "ConstraintsPresent", "ExactMoments", "MomentPair", "SecondMomentTensor",
    "expected_precompose", "expected_quadratic", "lognormal_moments",
    "BLOCKED", "DEFAULT_CHUNK", "DIVERGENCE_BOUND", "ProblemSpec", "Solution",
    "SpreadReport", "StageBatch", "StageSample", "Trajectory", "bellman_apply",
    "dp_finite", "dp_infinite", "mc_error", "simulate", "stage_cost",
    "stream_rng",
]

__version__ = "0.1.0"
