"""Group entitativity from motion: forward model, crowd simulation, estimation,
refitting and parameter design."""

__version__ = "0.1.0"

from entikit.core import (  # noqa: E402
    FEATURE_NAMES,
    GP_NAMES,
    PUBLISHED,
    DEFAULT_BOX,
    EntitativityLabel,
    EntitativityModel,
    FeatureVector,
    MotionParams,
    ParamBox,
    PedestrianState,
    combine_features,
    entitativity_error,
    entitativity_extremes,
    entitativity_label,
    normalize_entitativity,
    predict_entitativity,
    predict_features,
)
from entikit.design import (  # noqa: E402
    DesignTarget,
    design_for_entitativity,
    design_for_features,
    preset_scenario,
)
from entikit.estimation import (  # noqa: E402
    ClusterConfig,
    ObservedTrack,
    classify,
    cluster_groups,
    enkf_em_estimate,
    estimate_params,
    resample,
)
from entikit.fitting import (  # noqa: E402
    ModelBundle,
    StudyDataset,
    average_by_stimulus,
    correlation_matrix,
    cronbach_alpha,
    ols_fit,
    pca_first_component,
    refit_pipeline,
)
from entikit.sim import Agent, GroupSpec, Scenario, TrajectorySet, simulate, spawn  # noqa: E402
