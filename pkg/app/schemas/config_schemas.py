from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.schemas.label_schemas import ClassGroup, RemapKind

# the encoder reaches 1/64 resolution
INPUT_DIVISOR = 64


class AugmentParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    scale_min: float = Field(default=0.5, gt=0, example=0.5)
    scale_max: float = Field(default=2.0, gt=0, example=2.0)
    crop: int = Field(default=768, gt=0, example=768)
    flip_prob: float = Field(default=0.5, ge=0.0, le=1.0, example=0.5)

    @model_validator(mode="after")
    def check_scale_range(self) -> "AugmentParams":
        if self.scale_min > self.scale_max:
            raise ValueError("scale_min must not exceed scale_max")
        return self


class SyntheticDatasetSpec(BaseModel):
    """Geometric-shape stand-in for one benchmark dataset."""
    model_config = ConfigDict(frozen=True)

    dataset_id: str = Field(..., example="cityscapes")
    split: str = Field(default="train", pattern=r"^[\w-]+$")
    height: int = Field(default=128, gt=0)
    width: int = Field(default=128, gt=0)
    classes: Tuple[int, ...] = Field(..., min_length=1, description="Unified ids drawn in the scenes", example=(0, 2, 8, 10, 13))
    count: int = Field(default=10, ge=0)
    negative_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    hood_rows: int = Field(default=0, ge=0, description="Bottom rows labelled ignore (car hood)")
    max_shapes: int = Field(default=4, ge=0)
    noise: float = Field(default=0.03, ge=0.0)

    @field_validator("classes", mode="before")
    @classmethod
    def split_classes(cls, value):
        if isinstance(value, str):
            return tuple(int(v) for v in value.split(",") if v.strip())
        return value


class ModelConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    encoder_stage_widths: Tuple[int, ...] = Field(default=(128, 256, 512, 832, 1024), description="Channels at /4, /8, /16, /32, /64")
    block_depths: Tuple[int, ...] = Field(default=(3, 4, 6, 6, 4), description="Dense layers per encoder stage")
    growth_rate: int = Field(default=32, gt=0)
    decoder_width: int = Field(default=256, gt=0)
    num_classes: int = Field(default=39, gt=0)
    spp_grid: Tuple[int, ...] = Field(default=(1, 2, 3, 6))
    spp_branch_width: Optional[int] = Field(default=None, gt=0, description="Channels per pooling branch; decoder_width // 4 when unset")
    encoder_weights: Optional[Path] = Field(default=None, description="External encoder weights; marks the encoder as pretrained")

    @field_validator("encoder_stage_widths", "block_depths", "spp_grid", mode="before")
    @classmethod
    def split_ints(cls, value):
        if isinstance(value, str):
            return tuple(int(v) for v in value.split(",") if v.strip())
        return value

    @field_validator("encoder_stage_widths", "block_depths")
    @classmethod
    def five_stages(cls, value):
        if len(value) != 5 or any(v <= 0 for v in value):
            raise ValueError("five positive values are required (/4, /8, /16, /32, /64)")
        return value

    @field_validator("spp_grid")
    @classmethod
    def positive_grid(cls, value):
        if not value or any(g <= 0 for g in value):
            raise ValueError("spp_grid needs at least one positive grid size")
        return value

    @property
    def branch_width(self) -> int:
        return self.spp_branch_width or max(1, self.decoder_width // 4)


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    base_lr: float = Field(default=4e-4, gt=0)
    pretrained_lr_divisor: float = Field(default=4.0, gt=0)
    batch_size: int = Field(default=8, ge=2)
    iterations: int = Field(default=200000, ge=0)
    pyramid_weight: float = Field(default=0.4, ge=0.0)
    seed: int = Field(default=0, ge=0)
    eval_every: int = Field(default=5000, gt=0)
    checkpoint_every: int = Field(default=10000, gt=0)
    log_every: int = Field(default=50, gt=0)
    eval_scale: float = Field(default=1.0, gt=0, description="Evaluation resolution factor (0.5 = half resolution)")
    grad_clip: Optional[float] = Field(default=None, gt=0)


class SamplerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    ratio: float = Field(default=2.0, ge=0.0, description="Driving:indoor examples per epoch")


class DatasetEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    dataset_id: str
    root: Path = Field(..., description="Parent of <dataset_id>/{images,labels,instances}")
    val_root: Optional[Path] = None
    group: Optional[ClassGroup] = None


class EvalOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    strategy: RemapKind = Field(default=RemapKind.AUTO_VOID)
    target: Optional[str] = Field(default=None, description="Class name for the to_class strategy")
    negative_rule: bool = Field(default=True)


class RunConfig(BaseModel):
    datasets: List[DatasetEntry] = Field(default_factory=list)
    synthetic: List[SyntheticDatasetSpec] = Field(default_factory=list)
    synthetic_root: Path = Field(default=Path("data"))
    generate_seed: int = Field(default=0, ge=0)
    augment: AugmentParams = Field(default_factory=AugmentParams)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalOptions = Field(default_factory=EvalOptions)
    output_dir: Path = Field(default=Path("runs/default"))

    @model_validator(mode="after")
    def check_crop(self) -> "RunConfig":
        if self.augment.crop % INPUT_DIVISOR:
            raise ValueError(f"augment.crop must be divisible by {INPUT_DIVISOR}")
        ids = [d.dataset_id for d in self.datasets]
        if len(set(ids)) != len(ids):
            raise ValueError("dataset ids must be unique")
        return self
