"""Errors raised by the segmentation toolkit.

Every error derives from ``LadderSegError`` so the command surface can map the whole
family to a runtime exit code; shape and value problems additionally derive from
``ValueError``.
"""
from pathlib import Path
from typing import Iterable, Optional, Tuple


class LadderSegError(Exception):
    """Base class of all toolkit errors."""


class ConfigError(LadderSegError, ValueError):
    """A run configuration field is missing or invalid."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class UnknownNativeId(LadderSegError, ValueError):
    def __init__(self, dataset_id: str, native_id: int):
        self.dataset_id = dataset_id
        self.native_id = int(native_id)
        super().__init__(f"native label id {self.native_id} is not declared for dataset '{dataset_id}'")


class UnknownDataset(LadderSegError, ValueError):
    def __init__(self, dataset_id: str):
        self.dataset_id = dataset_id
        super().__init__(f"dataset '{dataset_id}' is not declared in the label table")


class MissingTarget(LadderSegError, ValueError):
    def __init__(self, message: str = "strategy to_class requires a target class"):
        super().__init__(message)


class MissingLabel(LadderSegError):
    def __init__(self, path: Path):
        self.path = Path(path)
        super().__init__(f"no label file for {self.path}")


class ShapeMismatch(LadderSegError, ValueError):
    def __init__(self, what: str, expected: Tuple[int, ...], actual: Tuple[int, ...]):
        self.what = what
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        super().__init__(f"{what}: expected shape {self.expected}, got {self.actual}")


class BadShape(LadderSegError, ValueError):
    def __init__(self, shape: Iterable[int], divisor: int):
        self.shape = tuple(shape)
        self.divisor = divisor
        super().__init__(f"spatial size {self.shape} is not divisible by {divisor}")


class GridTooLarge(LadderSegError, ValueError):
    def __init__(self, grid: int, size: Tuple[int, int]):
        self.grid = grid
        self.size = tuple(size)
        super().__init__(f"pooling grid {grid} exceeds feature map {self.size}")


class EmptyGroup(LadderSegError, ValueError):
    def __init__(self, group: str):
        self.group = group
        super().__init__(f"no dataset in group '{group}'")


class EmptyDataset(LadderSegError):
    def __init__(self, where: str):
        self.where = where
        super().__init__(f"no samples found in {where}")


class MissingInstances(LadderSegError, ValueError):
    def __init__(self, class_id: int, count: int):
        self.class_id = class_id
        self.count = count
        super().__init__(f"{count} pixels of instance class {class_id} carry instance id 0")


class NonFiniteLoss(LadderSegError):
    def __init__(self, iteration: int, dump_path: Optional[Path] = None):
        self.iteration = iteration
        self.dump_path = dump_path
        super().__init__(f"non-finite loss at iteration {iteration}; state dumped to {dump_path}")


class CheckpointVersionError(LadderSegError):
    def __init__(self, path: Path, version: object):
        self.path = Path(path)
        self.version = version
        super().__init__(f"unsupported checkpoint version {version!r} in {self.path}")
