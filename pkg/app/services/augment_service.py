"""Random scale, crop and horizontal flip applied jointly to image, labels and instances."""
import logging
from typing import Tuple

import numpy as np
import torch
import torch.nn.functional as F

from app.schemas.config_schemas import AugmentParams
from app.schemas.dataset_schemas import Sample
from app.schemas.label_schemas import DEFAULT_IGNORE_ID

logger = logging.getLogger(__name__)


def _resize_image(image: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    tensor = torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1).unsqueeze(0)
    resized = F.interpolate(tensor, size=size, mode="bilinear", align_corners=False)
    return resized.squeeze(0).permute(1, 2, 0).numpy()


def _resize_nearest(array: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    tensor = torch.from_numpy(array.astype(np.float32))[None, None]
    resized = F.interpolate(tensor, size=size, mode="nearest")
    return resized[0, 0].numpy().astype(array.dtype)


def _pad(array: np.ndarray, height: int, width: int, value) -> np.ndarray:
    pad_h = max(0, height - array.shape[0])
    pad_w = max(0, width - array.shape[1])
    if not pad_h and not pad_w:
        return array
    padded = np.empty((array.shape[0] + pad_h, array.shape[1] + pad_w) + array.shape[2:], dtype=array.dtype)
    padded[...] = value
    padded[:array.shape[0], :array.shape[1]] = array
    return padded


def augment(sample: Sample, params: AugmentParams, rng: np.random.Generator,
            ignore_id: int = DEFAULT_IGNORE_ID) -> Sample:
    """Scale uniformly in [scale_min, scale_max], crop ``crop x crop``, flip with ``flip_prob``.

    The generator is always consumed in the same order (scale, crop row, crop column,
    flip) so a seed fixes the whole transform.
    """
    image, labels, instances = sample.image, sample.labels, sample.instances
    height, width = labels.shape

    scale = rng.uniform(params.scale_min, params.scale_max)
    new_size = (max(1, int(round(height * scale))), max(1, int(round(width * scale))))
    if new_size != (height, width):
        image = _resize_image(image, new_size)
        labels = _resize_nearest(labels, new_size)
        if instances is not None:
            instances = _resize_nearest(instances, new_size)

    crop = params.crop
    if new_size[0] < crop or new_size[1] < crop:
        mean = image.reshape(-1, 3).mean(axis=0)
        image = _pad(image, crop, crop, mean)
        labels = _pad(labels, crop, crop, ignore_id)
        if instances is not None:
            instances = _pad(instances, crop, crop, 0)

    top = int(rng.integers(0, labels.shape[0] - crop + 1))
    left = int(rng.integers(0, labels.shape[1] - crop + 1))
    window = (slice(top, top + crop), slice(left, left + crop))
    image, labels = image[window], labels[window]
    if instances is not None:
        instances = instances[window]

    if rng.random() < params.flip_prob:
        image, labels = image[:, ::-1], labels[:, ::-1]
        if instances is not None:
            instances = instances[:, ::-1]

    return Sample(
        image=np.ascontiguousarray(image, dtype=np.float32),
        labels=np.ascontiguousarray(labels),
        instances=None if instances is None else np.ascontiguousarray(instances),
        dataset_id=sample.dataset_id,
        is_negative=sample.is_negative,
        name=sample.name,
    )


def flip(sample: Sample) -> Sample:
    """Deterministic horizontal flip."""
    return Sample(
        image=np.ascontiguousarray(sample.image[:, ::-1]),
        labels=np.ascontiguousarray(sample.labels[:, ::-1]),
        instances=None if sample.instances is None else np.ascontiguousarray(sample.instances[:, ::-1]),
        dataset_id=sample.dataset_id,
        is_negative=sample.is_negative,
        name=sample.name,
    )
