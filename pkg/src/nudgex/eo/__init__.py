from .geometry import (
    AcquisitionConfig,
    AcquisitionPlan,
    BoundingBox,
    allowed_months,
    clamp_horizon,
    compute_bbox,
    plan_acquisition,
)
from .acquire import (
    EOProvider,
    FixtureProvider,
    HttpSearchProvider,
    QualityReport,
    SceneAsset,
    SceneCandidate,
    SceneStore,
    assess_quality,
    fetch_scenes,
)

__all__ = [
    "AcquisitionConfig",
    "AcquisitionPlan",
    "BoundingBox",
    "EOProvider",
    "FixtureProvider",
    "HttpSearchProvider",
    "QualityReport",
    "SceneAsset",
    "SceneCandidate",
    "SceneStore",
    "allowed_months",
    "assess_quality",
    "clamp_horizon",
    "compute_bbox",
    "fetch_scenes",
    "plan_acquisition",
]
