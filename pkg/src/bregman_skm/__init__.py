"""Stochastic Krasnoselskii-Mann fixed-point iteration with Bregman geometries.

A library and CLI for running averaged fixed-point iterations of nonexpansive
operators under non-Euclidean (mirror-map) geometries, with adaptive geometry
schedules, robust noise trimming, and convergence-rate diagnostics.
"""

from .analysis import (
    DescentCheckReport,
    RateFit,
    averaged_residual,
    bound_envelope_check,
    descent_check,
    fit_rate,
    step_sum,
)
from .config import ExperimentConfig, VariantSpec, load_experiment, parse_experiment
from .experiments import RunResult, SummaryTable, run_experiment, summarize
from .errors import (
    BregmanSkmError,
    ConfigError,
    DegenerateFit,
    DimensionMismatch,
    Diverged,
    DomainError,
    InsufficientTrace,
    NoConvergence,
)
from .geometry import (
    EuclideanGeometry,
    GeometrySchedule,
    LegendreGeometry,
    NegEntropySimplexGeometry,
    PNormGeometry,
    ScaledGeometry,
    geometry_at,
    modulus_lower_bound,
    one_plus_harmonic,
    rate_exponent,
    three_point_defect,
    uniform_simplex,
)
from .iteration import (
    ConstantSteps,
    HarmonicOffsetSteps,
    IterationConfig,
    PolynomialSteps,
    StepSchedule,
    Trace,
    hilbert_equivalence_check,
    run,
    skm_step,
    step_size,
)
from .noise import (
    GaussianNoise,
    NoiseModel,
    StudentTNoise,
    TrimSchedule,
    ZeroNoise,
    make_rng,
    sample,
    trim,
    trim_level,
)
from .operators import (
    AffineAverageOperator,
    FixedPointRef,
    IdentityOperator,
    Operator,
    SoftmaxPolicyOperator,
    fixed_point_oracle,
    nonexpansiveness_probe,
    random_affine_average,
    random_softmax_policy,
)

__version__ = "0.1.0"
