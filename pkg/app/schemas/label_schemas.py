from enum import Enum
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class ClassGroup(str, Enum):
    DRIVING = "driving"
    INDOOR = "indoor"


class Category(str, Enum):
    """Cityscapes categories; indoor classes all fall into INDOOR_OTHER."""
    FLAT = "flat"
    CONSTRUCTION = "construction"
    OBJECT = "object"
    NATURE = "nature"
    SKY = "sky"
    HUMAN = "human"
    VEHICLE = "vehicle"
    INDOOR_OTHER = "indoor_other"

    @property
    def index(self) -> int:
        return list(Category).index(self)


DEFAULT_IGNORE_ID = 255

DRIVING_CATEGORIES: Tuple[Category, ...] = tuple(c for c in Category if c is not Category.INDOOR_OTHER)


class LabelClass(BaseModel):
    model_config = ConfigDict(frozen=True)

    unified_id: int = Field(..., ge=0, example=13)
    name: str = Field(..., min_length=1, example="car")
    group: ClassGroup = Field(..., example="driving")
    category: Category = Field(..., example="vehicle")
    has_instances: bool = Field(default=False)
    color: Tuple[int, int, int] = Field(default=(0, 0, 0), example=(0, 0, 142))


class NegativeClass(BaseModel):
    """Dataset-specific negative class ("Void" for driving datasets, "Ignore" for ScanNet)."""
    model_config = ConfigDict(frozen=True)

    unified_id: int = Field(..., ge=0, example=39)
    name: str = Field(..., example="Void")
    native_id: int = Field(..., ge=0, le=255, example=0)


class RemapKind(str, Enum):
    IDENTITY = "identity"
    AUTO_VOID = "auto_void"
    TO_CLASS = "to_class"


class RemapStrategy(BaseModel):
    """How foreign-class predictions are rewritten when exporting to one benchmark.

    ``target`` is a unified id and is only meaningful for ``to_class``; its presence
    and membership are checked when the strategy is applied.
    """
    model_config = ConfigDict(frozen=True)

    kind: RemapKind = Field(default=RemapKind.AUTO_VOID)
    target: Optional[int] = Field(default=None, ge=0)

    @classmethod
    def identity(cls) -> "RemapStrategy":
        return cls(kind=RemapKind.IDENTITY)

    @classmethod
    def auto_void(cls) -> "RemapStrategy":
        return cls(kind=RemapKind.AUTO_VOID)

    @classmethod
    def to_class(cls, target: Optional[int]) -> "RemapStrategy":
        return cls(kind=RemapKind.TO_CLASS, target=target)


class LabelSpace(BaseModel):
    """Unified cross-dataset class universe.

    Object classes occupy unified ids ``0..num_classes-1``; negative classes follow
    them contiguously; ``ignore_id`` marks unsupervised pixels and lies outside both.
    Unified ids a dataset does not label are exported to it as ``foreign_base + id``,
    a native range no dataset may use.
    Immutable once built, so one instance can be shared by every loader worker.
    """
    model_config = ConfigDict(frozen=True)

    version: int = Field(default=1, ge=1)
    classes: Tuple[LabelClass, ...]
    negatives: Dict[str, NegativeClass]
    dataset_maps: Dict[str, Dict[int, int]]
    dataset_groups: Dict[str, ClassGroup]
    ignore_id: int = Field(default=DEFAULT_IGNORE_ID, ge=0, le=255)
    foreign_base: int = Field(default=100, ge=0, le=255, description="Native id of unified id 0 when exported to a dataset that does not label it")

    @model_validator(mode="after")
    def check_invariants(self) -> "LabelSpace":
        ids = [c.unified_id for c in self.classes]
        if ids != list(range(len(ids))):
            raise ValueError("unified object ids must be contiguous from 0 and ordered")
        negative_ids = sorted({n.unified_id for n in self.negatives.values()})
        if negative_ids != list(range(len(ids), len(ids) + len(negative_ids))):
            raise ValueError("negative ids must directly follow the object ids")
        if self.ignore_id < len(ids) + len(negative_ids):
            raise ValueError("ignore_id collides with an object or negative id")
        if self.foreign_base + len(ids) + len(negative_ids) > 255:
            raise ValueError("foreign native range runs into the native ignore code")
        for c in self.classes:
            if c.group is ClassGroup.DRIVING and c.category not in DRIVING_CATEGORIES:
                raise ValueError(f"driving class '{c.name}' needs a driving category")
        for dataset_id, mapping in self.dataset_maps.items():
            if dataset_id not in self.dataset_groups or dataset_id not in self.negatives:
                raise ValueError(f"dataset '{dataset_id}' lacks a group or negative class")
            if len(set(mapping.values())) != len(mapping):
                raise ValueError(f"dataset map of '{dataset_id}' is not injective")
            if any(u not in range(len(ids)) for u in mapping.values()):
                raise ValueError(f"dataset map of '{dataset_id}' references an unknown unified id")
            if self.negatives[dataset_id].native_id in mapping or self.ignore_id in mapping:
                raise ValueError(f"dataset '{dataset_id}' reuses a reserved native id")
            reserved = set(mapping) | {self.negatives[dataset_id].native_id, 255}
            if any(self.foreign_base <= n < self.foreign_base + len(ids) + len(negative_ids) for n in reserved):
                raise ValueError(f"foreign native range of '{dataset_id}' overlaps its own native ids")
        return self

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def num_labels(self) -> int:
        """Object classes plus negative classes: the confusion-matrix side length."""
        return self.num_classes + len(self.negative_ids)

    @cached_property
    def negative_ids(self) -> Tuple[int, ...]:
        return tuple(sorted({n.unified_id for n in self.negatives.values()}))

    @property
    def dataset_ids(self) -> List[str]:
        return list(self.dataset_maps)

    def ids_in_group(self, group: ClassGroup) -> Tuple[int, ...]:
        return tuple(c.unified_id for c in self.classes if c.group is ClassGroup(group))

    def dataset_class_ids(self, dataset_id: str) -> Tuple[int, ...]:
        return tuple(sorted(self.dataset_maps[dataset_id].values()))

    def group_of(self, unified_id: int) -> Optional[ClassGroup]:
        if 0 <= unified_id < self.num_classes:
            return self.classes[unified_id].group
        return None

    def category_names(self) -> Tuple[str, ...]:
        """Category names in index order; the confusion rows after them belong to the negatives."""
        return tuple(c.value for c in Category)

    def name_of(self, unified_id: int) -> str:
        if 0 <= unified_id < self.num_classes:
            return self.classes[unified_id].name
        for negative in self.negatives.values():
            if negative.unified_id == unified_id:
                return negative.name
        if unified_id == self.ignore_id:
            return "ignore"
        raise KeyError(unified_id)

    def class_id(self, name: str, dataset_id: str) -> int:
        """Resolve a class name within one dataset's own classes ("wall" differs per group)."""
        for unified_id in self.dataset_class_ids(dataset_id):
            if self.classes[unified_id].name.lower() == name.lower():
                return unified_id
        raise KeyError(f"class '{name}' is not labelled in dataset '{dataset_id}'")

    def instance_class_ids(self) -> Tuple[int, ...]:
        return tuple(c.unified_id for c in self.classes if c.has_instances)

    @cached_property
    def group_lut(self) -> np.ndarray:
        """Per unified id: 0 driving, 1 indoor, -1 negative/ignore/unused."""
        lut = np.full(256, -1, dtype=np.int16)
        for c in self.classes:
            lut[c.unified_id] = 0 if c.group is ClassGroup.DRIVING else 1
        return lut

    @cached_property
    def category_lut(self) -> np.ndarray:
        """Per unified id: category index; negatives and ignore_id map to themselves."""
        lut = np.arange(256, dtype=np.int16)
        for c in self.classes:
            lut[c.unified_id] = c.category.index
        return lut

    @cached_property
    def palette(self) -> np.ndarray:
        colors = np.zeros((256, 3), dtype=np.uint8)
        for c in self.classes:
            colors[c.unified_id] = c.color
        return colors
