"""Run configuration and report models shared by the CLI and the report writer."""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator

from models.bootstrap import BootstrapConfig
from models.detrend import RegressionConfig
from models.risk import LocationKind, RiskFunctional
from models.simulation import VariogramSpec

FunctionalStat = Literal["area", "longitude", "latitude"]
# The oracle can also pattern the risk functional itself
OracleStat = Literal["area", "longitude", "latitude", "risk"]


class AnalysisConfig(BaseModel):
    """
    Options of one ``analyze`` run. Loaded from a JSON config file; command-line
    flags override individual keys.
    """

    input_path: Path
    input_format: Literal["binary", "csv"] = "binary"
    coord_system: Literal["lonlat", "planar_km"] = "planar_km"
    risks: List[str] = Field(default_factory=lambda: ["mean"])
    quantile_level: Optional[float] = Field(default=0.95, gt=0.0, lt=1.0)
    threshold: Optional[float] = None
    threshold_basis: Literal["risk_series", "pooled_field"] = "risk_series"
    lmax: int = Field(default=12, ge=1)
    pattern_lengths: List[int] = Field(default_factory=lambda: [2, 3])
    exact_size: bool = False
    stats: List[FunctionalStat] = Field(default_factory=list)
    location_measure: LocationKind = "exceedance_centroid"
    exposure_path: Optional[Path] = None
    bootstrap: BootstrapConfig = Field(default_factory=BootstrapConfig)
    run_bootstrap: bool = True
    output_path: Optional[Path] = None
    rng_seed: Optional[int] = Field(default=None, ge=0)

    @field_validator("risks")
    @classmethod
    def validate_risks(cls, v):
        if not v:
            raise ValueError("at least one risk functional is required")
        for text in v:
            RiskFunctional.parse(text)
        return v

    @field_validator("pattern_lengths")
    @classmethod
    def validate_lengths(cls, v):
        for length in v:
            if not 2 <= length <= 5:
                raise ValueError(f"pattern length {length} outside 2..5")
        return sorted(set(v))

    @property
    def risk_functionals(self) -> List[RiskFunctional]:
        return [RiskFunctional.parse(text) for text in self.risks]


class SimulateConfig(BaseModel):
    """Options of one ``simulate`` run on a regular grid."""

    nx: int = Field(default=7, ge=1)
    ny: int = Field(default=7, ge=1)
    spacing: float = Field(default=1.0, gt=0.0)
    n_times: int = Field(default=20_000, ge=1)
    subgrid_stride: int = Field(default=2, ge=1)
    temporal_truncation: int = Field(default=18, ge=1)
    variogram: VariogramSpec = Field(default_factory=VariogramSpec)
    output_path: Path = Path("simulation.stxf")
    output_format: Literal["binary", "csv"] = "binary"
    rng_seed: Optional[int] = Field(default=None, ge=0)


class DetrendConfig(BaseModel):
    """Options of one ``detrend`` run."""

    input_path: Path
    input_format: Literal["binary", "csv"] = "binary"
    coord_system: Literal["lonlat", "planar_km"] = "planar_km"
    regression: RegressionConfig = Field(default_factory=RegressionConfig)
    output_path: Path = Path("anomalies.stxf")
    output_format: Literal["binary", "csv"] = "binary"
    coefficients_path: Path = Path("coefficients.csv")


class OracleRunConfig(BaseModel):
    """Options of one ``oracle`` run on a regular grid."""

    nx: int = Field(default=7, ge=1)
    ny: int = Field(default=7, ge=1)
    spacing: float = Field(default=1.0, gt=0.0)
    variogram: VariogramSpec = Field(default_factory=VariogramSpec)
    risks: List[str] = Field(default_factory=lambda: ["mean"])
    lmax: int = Field(default=3, ge=1, le=16)
    pattern_lengths: List[int] = Field(default_factory=lambda: [2])
    stats: List[OracleStat] = Field(default_factory=list)
    location_measure: LocationKind = "exceedance_centroid"
    exact_size: bool = False
    anchor_site: Optional[int] = Field(default=None, ge=0)
    draws: int = Field(default=1_000_000, ge=10_000)
    quadrature_points: int = Field(default=200, ge=50)
    output_path: Optional[Path] = None
    rng_seed: Optional[int] = Field(default=None, ge=0)


class EstimateRow(BaseModel):
    """One label of one estimator family; numbers are 17-significant-digit strings."""

    family: str
    label: str
    prob: str
    count: Optional[int] = None
    ci_lo: Optional[str] = None
    ci_hi: Optional[str] = None
    se: Optional[str] = None
    raw: Optional[str] = None


class Diagnostics(BaseModel):
    n_clusters: int = 0
    n_ties: int = 0
    n_degenerate_replicates: int = 0
    runtime_ms: int = 0
    threshold: Optional[str] = None
    extra: Dict[str, Any] = Field(default_factory=dict)


class Report(BaseModel):
    """Top-level JSON report written by every subcommand."""

    command: Literal["simulate", "detrend", "analyze", "oracle"]
    config: Dict[str, Any]
    estimates: List[EstimateRow] = Field(default_factory=list)
    diagnostics: Diagnostics = Field(default_factory=Diagnostics)
