"""Pydantic models for the spatio-temporal extremes toolkit."""

from .bootstrap import BlockCounts, BootstrapConfig, BootstrapSummary, LabelInterval
from .cluster import ClusterIndex, LabeledWindows, PatternDistribution
from .detrend import RegressionConfig, SiteCoefficients
from .field import FieldSeries, OrdinalPattern, SpatialGrid, ThresholdSpec
from .report import AnalysisConfig, DetrendConfig, OracleRunConfig, Report, SimulateConfig
from .risk import LocationMeasure, RiskFunctional, SpatialRiskMeasure
from .simulation import OracleConfig, OracleEstimate, SimConfig, SpectralDraw, VariogramSpec

__all__ = [
    "AnalysisConfig",
    "BlockCounts",
    "BootstrapConfig",
    "BootstrapSummary",
    "ClusterIndex",
    "DetrendConfig",
    "FieldSeries",
    "LabelInterval",
    "LabeledWindows",
    "LocationMeasure",
    "OracleConfig",
    "OracleEstimate",
    "OracleRunConfig",
    "OrdinalPattern",
    "PatternDistribution",
    "RegressionConfig",
    "Report",
    "RiskFunctional",
    "SimConfig",
    "SimulateConfig",
    "SiteCoefficients",
    "SpatialGrid",
    "SpatialRiskMeasure",
    "SpectralDraw",
    "ThresholdSpec",
    "VariogramSpec",
]
