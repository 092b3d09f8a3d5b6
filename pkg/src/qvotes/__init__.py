"""qvotes: how many subjective quality votes per condition are enough.

Resamples real rating datasets to show how validity (agreement with a
reference test) and reliability (inter-rater agreement, certainty gain,
MOS confidence width) depend on the number of votes per condition, and
fits saturating power models to the resulting curves.
"""

__version__ = "0.1.0"

from .bootstrap import Interval, bootstrap_ci_mos, clopper_pearson, max_ci_width
from .data import (
    RatingDataset,
    RatingRecord,
    ReferenceMos,
    empirical_score_dist,
    empirical_user_prob,
    load_ratings,
    load_reference,
    reference_coverage,
    remove_outliers_iqr,
)
from .errors import ConfigError, DataError, DegenerateDataError, QvotesError
from .modelfit import PowerModel, evaluate_model, fit_power_model, votes_for_target
from .simulate import (
    CertaintyGain,
    CurvePoint,
    MetricCurve,
    RunSample,
    SweepConfig,
    certainty_gain,
    ci_width_curve,
    draw_run_sample,
    irr_curve,
    irr_full,
    read_curves_csv,
    read_curves_json,
    run_sweep,
    sample_condition,
    write_curves_csv,
    write_curves_json,
)
from .stats import (
    ComparisonResult,
    LinearMap,
    MosVector,
    average_ranks,
    compare_to_reference,
    dataset_mos,
    fit_first_order_map,
    fit_line,
    mos_plain,
    mos_user_balanced,
    rmse,
    srcc,
)

__all__ = [
    "__version__",
    "CertaintyGain",
    "ComparisonResult",
    "ConfigError",
    "CurvePoint",
    "DataError",
    "DegenerateDataError",
    "Interval",
    "LinearMap",
    "MetricCurve",
    "MosVector",
    "PowerModel",
    "QvotesError",
    "RatingDataset",
    "RatingRecord",
    "ReferenceMos",
    "RunSample",
    "SweepConfig",
    "average_ranks",
    "bootstrap_ci_mos",
    "certainty_gain",
    "ci_width_curve",
    "clopper_pearson",
    "compare_to_reference",
    "dataset_mos",
    "draw_run_sample",
    "empirical_score_dist",
    "empirical_user_prob",
    "evaluate_model",
    "fit_first_order_map",
    "fit_line",
    "fit_power_model",
    "irr_curve",
    "irr_full",
    "load_ratings",
    "load_reference",
    "max_ci_width",
    "mos_plain",
    "mos_user_balanced",
    "read_curves_csv",
    "read_curves_json",
    "reference_coverage",
    "remove_outliers_iqr",
    "rmse",
    "run_sweep",
    "sample_condition",
    "srcc",
    "votes_for_target",
    "write_curves_csv",
    "write_curves_json",
]
