"""Request and response bodies for the HTTP service.

Every endpoint takes filesystem paths, not inline payloads: the
datasets and weight blobs involved are far too large to ship as JSON,
and keeping them on disk makes runs auditable after the fact.
"""

from __future__ import annotations

from pydantic import BaseModel, Field

from .features import FeatureKind
from .io import ReportRow


class HealthResponse(BaseModel):
    status: str
    version: str


class TrainRequest(BaseModel):
    data_dir: str
    out_dir: str
    arch: str = "784-128-64-32-10"
    epochs: int = Field(default=10, ge=0)
    learning_rate: float = Field(default=0.1, gt=0.0)
    batch_size: int = Field(default=64, ge=1)
    seed: int = 0
    train_limit: int = Field(default=0, ge=0)
    hidden_activation: str = "relu"


class TrainResponse(BaseModel):
    manifest_path: str
    test_accuracy: float


class SummariesRequest(BaseModel):
    manifest_path: str
    data_dir: str
    out_path: str
    layer: int = -1
    subset_size: int = Field(default=1000, ge=1)
    seed: int = 0
    train_limit: int = Field(default=0, ge=0)


class SummariesResponse(BaseModel):
    out_path: str
    layer_index: int
    class_count: int
    sample_counts: list[int]


class FeatureSpec(BaseModel):
    """Wire form of a feature choice; layer and norm only apply to magdiff."""

    kind: str = "magdiff"
    layer: int = -1
    norm: str = "frobenius"

    def to_kind(self) -> FeatureKind:
        if self.kind in ("confidence_vector", "cv"):
            return FeatureKind.confidence_vector()
        return FeatureKind(self.kind, layer=self.layer, norm=self.norm)


class DetectRequest(BaseModel):
    manifest_path: str
    summaries_path: str
    clean_path: str
    candidate_path: str
    feature: FeatureSpec = Field(default_factory=FeatureSpec)
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)


class DetectResponse(BaseModel):
    reject: bool
    alpha: float
    statistics: list[float]
    p_values: list[float]
    min_p_value: float


class PowerCellRequest(BaseModel):
    manifest_path: str
    summaries_path: str
    data_dir: str
    feature: FeatureSpec = Field(default_factory=FeatureSpec)
    shift: str = "gaussian_noise"
    level: str = "IV"
    delta: float = Field(default=0.5, ge=0.0, le=1.0)
    sample_size: int = Field(default=100, ge=1)
    mode: str = "power"
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    repetitions: int = Field(default=300, ge=1)
    seed: int = 0
    ladders: dict[str, dict[str, list[float]]] = Field(default_factory=dict)


class PowerCellResponse(BaseModel):
    feature: str
    layer: int | None
    norm: str | None
    shift: str
    intensity: str
    delta: float
    sample_size: int
    repetitions: int
    mode: str
    estimate: float
    ci_half_width: float
    seed: int

    @classmethod
    def from_row(cls, row: ReportRow) -> "PowerCellResponse":
        return cls(
            feature=row.feature,
            layer=row.layer,
            norm=row.norm,
            shift=row.shift,
            intensity=row.intensity,
            delta=row.delta,
            sample_size=row.sample_size,
            repetitions=row.repetitions,
            mode=row.mode,
            estimate=row.estimate,
            ci_half_width=row.ci_half_width,
            seed=row.seed,
        )

    def to_row(self) -> ReportRow:
        return ReportRow(
            feature=self.feature,
            layer=self.layer,
            norm=self.norm,
            shift=self.shift,
            intensity=self.intensity,
            delta=self.delta,
            sample_size=self.sample_size,
            repetitions=self.repetitions,
            mode=self.mode,
            estimate=self.estimate,
            ci_half_width=self.ci_half_width,
            seed=self.seed,
        )
