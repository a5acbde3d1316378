"""Trajectory-aided RSS localization of a UAV from multiple base stations."""

from trajrss.crlb import CrlbReport, FisherMatrix, crlb_report, fisher_matrix, gradient_vectors
from trajrss.errors import (
    DegenerateGeometryError,
    ScenarioSchemaError,
    SingularFisherError,
    TrajRssError,
)
from trajrss.estimators import (
    ESTIMATORS,
    EstimateReport,
    GridModel,
    ObjectiveSlice,
    SearchGrid,
    alpha_hat,
    estimate,
    estimate_baseline,
    estimate_joint,
    estimate_lcsl_bst,
    estimate_lcsl_tbs,
    objective,
)
from trajrss.model import (
    NoiseModel,
    PathLossParams,
    RssMatrix,
    Scenario,
    TrajectoryKnowledge,
    displacement,
    distance,
    mean_rss,
    synthesize,
    virtual_bs_position,
)
from trajrss.scenario import builtin, hexagon_scenario, load_scenario, save_scenario

__version__ = "0.1.0"

__all__ = [
    "ESTIMATORS",
    "CrlbReport",
    "DegenerateGeometryError",
    "EstimateReport",
    "FisherMatrix",
    "GridModel",
    "NoiseModel",
    "ObjectiveSlice",
    "PathLossParams",
    "RssMatrix",
    "Scenario",
    "ScenarioSchemaError",
    "SearchGrid",
    "SingularFisherError",
    "TrajRssError",
    "TrajectoryKnowledge",
    "alpha_hat",
    "builtin",
    "crlb_report",
    "displacement",
    "distance",
    "estimate",
    "estimate_baseline",
    "estimate_joint",
    "estimate_lcsl_bst",
    "estimate_lcsl_tbs",
    "fisher_matrix",
    "gradient_vectors",
    "hexagon_scenario",
    "load_scenario",
    "mean_rss",
    "objective",
    "save_scenario",
    "synthesize",
    "virtual_bs_position",
]
