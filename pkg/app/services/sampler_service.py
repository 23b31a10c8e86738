"""Epoch schedules that oversample driving data against indoor data and keep every batch mixed."""
import logging
import math
from fractions import Fraction
from typing import List, Mapping, Optional, Sequence

import numpy as np
from torch.utils.data import Sampler

from app.exceptions import EmptyGroup
from app.schemas.label_schemas import ClassGroup
from app.schemas.sampler_schemas import EpochSchedule, ScheduleEntry

logger = logging.getLogger(__name__)


def replication_factor(driving_total: int, indoor_total: int, ratio_target: float) -> int:
    """Smallest integer k >= 1 with k * driving_total >= ratio_target * indoor_total."""
    if ratio_target <= 0 or driving_total == 0 or indoor_total == 0:
        return 1
    needed = Fraction(ratio_target).limit_denominator(10 ** 6) * indoor_total
    return max(1, math.ceil(needed / driving_total))


def _assemble(driving: List[ScheduleEntry], indoor: List[ScheduleEntry], batch_size: int,
              rng: np.random.Generator) -> List[ScheduleEntry]:
    """Stratified assembly: each slice draws from both queues in proportion to what remains."""
    out: List[ScheduleEntry] = []
    d_pos = i_pos = 0
    while True:
        rem_d, rem_i = len(driving) - d_pos, len(indoor) - i_pos
        remaining = rem_d + rem_i
        if remaining == 0:
            return out
        size = min(batch_size, remaining)
        n_d = int(round(size * rem_d / remaining))
        if rem_d and rem_i and size >= 2:
            n_d = min(max(n_d, 1), size - 1)
        n_d = min(n_d, rem_d)
        n_i = min(size - n_d, rem_i)
        n_d = min(size - n_i, rem_d)
        chunk = driving[d_pos:d_pos + n_d] + indoor[i_pos:i_pos + n_i]
        d_pos += n_d
        i_pos += n_i
        out.extend(chunk[j] for j in rng.permutation(len(chunk)))


def build_schedule(dataset_sizes: Mapping[str, int], groups: Mapping[str, ClassGroup], ratio_target: float,
                   batch_size: int, rng: np.random.Generator) -> EpochSchedule:
    """Replicate every driving dataset by one common factor, shuffle per group, assemble mixed batches."""
    if batch_size < 2:
        raise ValueError("batch_size must be at least 2")
    by_group = {g: [d for d in dataset_sizes if ClassGroup(groups[d]) is g] for g in ClassGroup}
    if ratio_target > 0:
        for group in ClassGroup:
            if not by_group[group]:
                logger.error("Oversampling ratio %s needs a '%s' dataset", ratio_target, group.value)
                raise EmptyGroup(group.value)
    elif not dataset_sizes:
        raise EmptyGroup("any")

    driving_total = sum(dataset_sizes[d] for d in by_group[ClassGroup.DRIVING])
    indoor_total = sum(dataset_sizes[d] for d in by_group[ClassGroup.INDOOR])
    factor = replication_factor(driving_total, indoor_total, ratio_target)

    driving = [ScheduleEntry(d, i, ClassGroup.DRIVING)
               for d in by_group[ClassGroup.DRIVING] for _ in range(factor) for i in range(dataset_sizes[d])]
    indoor = [ScheduleEntry(d, i, ClassGroup.INDOOR)
              for d in by_group[ClassGroup.INDOOR] for i in range(dataset_sizes[d])]
    driving = [driving[j] for j in rng.permutation(len(driving))]
    indoor = [indoor[j] for j in rng.permutation(len(indoor))]

    entries = _assemble(driving, indoor, batch_size, rng)
    seeds = rng.integers(0, 2 ** 31 - 1, size=len(entries))
    entries = [entry._replace(seed=(int(s),)) for entry, s in zip(entries, seeds)]

    schedule = EpochSchedule(entries=tuple(entries), ratio_target=ratio_target, batch_size=batch_size, replication=factor)
    logger.debug("Schedule: %d driving x%d, %d indoor, %d batches",
                 driving_total, factor, indoor_total, schedule.num_batches)
    return schedule


def batches(schedule: EpochSchedule) -> List[List[ScheduleEntry]]:
    """Consecutive batch_size slices; the incomplete tail is dropped."""
    size = schedule.batch_size
    return [list(schedule.entries[start:start + size]) for start in range(0, schedule.num_batches * size, size)]


class ScheduleBatchSampler(Sampler):
    """``DataLoader(batch_sampler=...)`` adapter; the schedule of epoch e is rebuilt from (seed, e)."""

    def __init__(self, dataset_sizes: Mapping[str, int], groups: Mapping[str, ClassGroup], ratio_target: float,
                 batch_size: int, seed: int, skip_batches: int = 0):
        self.dataset_sizes = dict(dataset_sizes)
        self.groups = dict(groups)
        self.ratio_target = ratio_target
        self.batch_size = batch_size
        self.seed = seed
        self.epoch = 0
        self.skip_batches = skip_batches

    def set_epoch(self, epoch: int, skip_batches: int = 0) -> None:
        self.epoch = epoch
        self.skip_batches = skip_batches

    def schedule(self, epoch: Optional[int] = None) -> EpochSchedule:
        rng = np.random.default_rng([self.seed, self.epoch if epoch is None else epoch])
        return build_schedule(self.dataset_sizes, self.groups, self.ratio_target, self.batch_size, rng)

    def __iter__(self):
        for batch in batches(self.schedule())[self.skip_batches:]:
            yield batch

    def __len__(self) -> int:
        return max(0, self.schedule().num_batches - self.skip_batches)


def group_counts(batch: Sequence[ScheduleEntry]) -> Mapping[ClassGroup, int]:
    counts = {g: 0 for g in ClassGroup}
    for entry in batch:
        counts[entry.group] += 1
    return counts
