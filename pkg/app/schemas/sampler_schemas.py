from typing import NamedTuple, Tuple

from pydantic import BaseModel, ConfigDict, Field, computed_field

from app.schemas.label_schemas import ClassGroup


class ScheduleEntry(NamedTuple):
    dataset_id: str
    sample_index: int
    group: ClassGroup
    # rng seed for this entry's augmentation: (run seed, epoch, position)
    seed: Tuple[int, ...] = ()


class EpochSchedule(BaseModel):
    """Ordered entries of one epoch, already assembled into mixed batch_size slices."""
    model_config = ConfigDict(frozen=True)

    entries: Tuple[ScheduleEntry, ...]
    ratio_target: float = Field(..., ge=0.0)
    batch_size: int = Field(..., ge=2)
    replication: int = Field(default=1, ge=1, description="Times each driving sample is repeated")

    @computed_field
    @property
    def driving_count(self) -> int:
        return sum(1 for e in self.entries if e.group is ClassGroup.DRIVING)

    @computed_field
    @property
    def indoor_count(self) -> int:
        return sum(1 for e in self.entries if e.group is ClassGroup.INDOOR)

    @property
    def realized_ratio(self) -> float:
        return self.driving_count / self.indoor_count if self.indoor_count else float("inf")

    @property
    def num_batches(self) -> int:
        return len(self.entries) // self.batch_size

    def __len__(self) -> int:
        return len(self.entries)
