from pathlib import Path
from typing import List, Optional

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator


class Sample(BaseModel):
    """One materialized example.

    Attributes:
        image: H x W x 3 float32 in [0, 1].
        labels: H x W uint8 unified ids (object classes or ignore_id).
        instances: optional H x W instance ids, 0 = no instance.
        dataset_id: provenance.
        is_negative: WildDash-style negative image flag.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    image: np.ndarray
    labels: np.ndarray
    instances: Optional[np.ndarray] = None
    dataset_id: str
    is_negative: bool = False
    name: str = ""

    @model_validator(mode="after")
    def check_shapes(self) -> "Sample":
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValueError(f"image must be H x W x 3, got {self.image.shape}")
        if self.labels.shape != self.image.shape[:2]:
            raise ValueError(f"labels {self.labels.shape} do not match image {self.image.shape[:2]}")
        if self.instances is not None and self.instances.shape != self.labels.shape:
            raise ValueError(f"instances {self.instances.shape} do not match labels {self.labels.shape}")
        return self

    @property
    def size(self):
        return self.labels.shape


class SampleDescriptor(BaseModel):
    """Lazy handle on the files of one sample; labels are encoded when materialized."""
    model_config = ConfigDict(frozen=True)

    name: str
    dataset_id: str
    image_path: Path
    label_path: Path
    instance_path: Optional[Path] = None
    is_negative: bool = False
    height: int = Field(..., gt=0)
    width: int = Field(..., gt=0)


class SegBatch(BaseModel):
    """Collated mini-batch; items keep their dataset provenance."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    images: torch.Tensor  # B x 3 x H x W float32
    labels: torch.Tensor  # B x H x W int64
    dataset_ids: List[str]
    is_negative: torch.Tensor  # B bool
    names: List[str] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.dataset_ids)
