import math
from typing import List, Optional

from pydantic import BaseModel, Field, field_validator

from app.schemas.label_schemas import ClassGroup


def _nan_to_none(value):
    if value is not None and isinstance(value, float) and math.isnan(value):
        return None
    return value


class ClassScore(BaseModel):
    class_id: int = Field(..., ge=0, example=13)
    name: str = Field(..., example="car")
    category: str = Field(..., example="vehicle")
    iou: Optional[float] = Field(default=None, description="None when the class is absent from gt and predictions")
    iiou: Optional[float] = None
    category_iou: Optional[float] = None

    @field_validator("iou", "iiou", "category_iou", mode="before")
    @classmethod
    def nan_to_none(cls, value):
        return _nan_to_none(value)


class EvaluationSummary(BaseModel):
    """Machine-readable record written next to the per-class table."""
    dataset_id: str = Field(..., example="wilddash")
    strategy: str = Field(..., example="auto_void")
    negative_rule: bool = True
    eval_scale: float = 1.0
    num_images: int = Field(..., ge=0)
    num_negative: int = Field(default=0, ge=0)
    pixel_accuracy: Optional[float] = None
    miou: Optional[float] = None
    category_miou: Optional[float] = None
    category_iiou: Optional[float] = None
    classes: List[ClassScore] = Field(default_factory=list)

    @field_validator("pixel_accuracy", "miou", "category_miou", "category_iiou", mode="before")
    @classmethod
    def nan_to_none(cls, value):
        return _nan_to_none(value)


class IncidenceRow(BaseModel):
    dataset_id: str
    home_group: ClassGroup
    driving_pixels: int = Field(default=0, ge=0)
    indoor_pixels: int = Field(default=0, ge=0)

    @property
    def object_pixels(self) -> int:
        return self.driving_pixels + self.indoor_pixels

    @property
    def driving_fraction(self) -> float:
        return self.driving_pixels / self.object_pixels if self.object_pixels else 0.0

    @property
    def indoor_fraction(self) -> float:
        return self.indoor_pixels / self.object_pixels if self.object_pixels else 0.0

    @property
    def foreign_fraction(self) -> float:
        return self.indoor_fraction if self.home_group is ClassGroup.DRIVING else self.driving_fraction


class IncidenceReport(BaseModel):
    """Share of predicted object pixels per class group, one row per dataset."""
    rows: List[IncidenceRow] = Field(default_factory=list)

    @classmethod
    def merge(cls, *reports: "IncidenceReport") -> "IncidenceReport":
        return cls(rows=[row for report in reports for row in report.rows])

    def row(self, dataset_id: str) -> IncidenceRow:
        for row in self.rows:
            if row.dataset_id == dataset_id:
                return row
        raise KeyError(dataset_id)


class AblationRow(BaseModel):
    pyramid_weight: float
    seed: int
    miou: Optional[float] = None
    category_miou: Optional[float] = None
    checkpoint: str = ""

    @field_validator("miou", "category_miou", mode="before")
    @classmethod
    def nan_to_none(cls, value):
        return _nan_to_none(value)
