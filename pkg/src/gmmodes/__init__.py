"""Numerical laboratory for counting modes of Gaussian mixtures."""

from . import bounds, constructions, errors, mixture, modefinder
from .constructions import (
    HyperplaneArrangement,
    Scenario,
    arrangement_mixture,
    cross_example,
    duistermaat_triangle,
    generic_arrangement,
    product_mixture,
    scenario_catalog,
    select_delta,
    seven_mode_probe,
    univariate_pair,
)
from .mixture import (
    EvalResult,
    GaussianComponent,
    Mixture,
    affine_transform,
    evaluate,
    is_homoscedastic,
    is_isotropic,
    load_mixture,
    make_mixture,
    save_mixture,
)
from .modefinder import (
    AscentOptions,
    CriticalPoint,
    ModeReport,
    ascend,
    default_starts,
    find_critical_points,
    fixed_point_step,
    ridgeline_oracle_k2,
    ridgeline_point,
    verify_ridgeline_membership,
)

__version__ = "0.1.0"
