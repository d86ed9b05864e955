"""Nonparametric panel effects for stayers with uniform inference.

In a two-period panel where a point mass of units keeps the same regressor
value in both periods, contrasts of derivative surfaces across periods
identify mean and quantile effects for those "stayers" without instruments.
This package provides the series estimators, the scale/shift extension for
non-homogeneous periods, a weighted bootstrap with sup-t uniform bands, and
synthetic data generators with brute-force oracles for validation.
"""

from .errors import ConfigError, DataError, NumericalError, StayerfxError
from .panel import (
    IngestLog,
    PanelDataset,
    SummaryReport,
    load_csv,
    summarize,
    within_variation_pct,
    write_csv,
)
from .basis import (
    BasisEval,
    BasisSpec,
    design_matrix,
    eval_basis,
    make_spec,
    spec_digest,
    spline_block,
    univariate_design,
)
from .regress import (
    LinearFit,
    Prediction,
    QuantileFit,
    check_loss,
    predict,
    qr_fit,
    variance_fit,
    wls_fit,
)
from .effects import (
    EffectCurve,
    EffectPipeline,
    EvalGrid,
    TimeEffectFns,
    averaged_quantile_effect,
    cross_section_effect,
    default_grid,
    mean_effect,
    mean_effect_time_adjusted,
    quantile_effect,
    quantile_effect_time_adjusted,
    scale_location_from_moments,
    scale_location_from_quantiles,
    transformed_outcome_effect,
)
from .inference import (
    BootstrapRun,
    CoverageReport,
    UniformBand,
    banded_curve,
    bootstrap_curves,
    coverage_study,
    draw_weights,
    pointwise_tcrits,
    register_weight_law,
    uniform_band,
)
from .dgp import (
    AdditiveLinearDgp,
    HomogeneityReport,
    LocationScaleDgp,
    OracleResult,
    RandomCoefficientDgp,
    RegressorLaw,
    cross_section_slope_bias,
    dgp_from_dict,
    dgp_to_dict,
    simulate,
    time_homogeneity_check,
    true_effect,
    true_scale,
    true_shift,
    true_transform_effect,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
