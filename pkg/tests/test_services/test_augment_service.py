import numpy as np
import pytest

from app.schemas.config_schemas import AugmentParams
from app.schemas.dataset_schemas import Sample
from app.services.augment_service import augment, flip


@pytest.fixture
def sample():
    labels = np.zeros((40, 60), dtype=np.uint8)
    labels[:, 30:] = 2
    image = np.zeros((40, 60, 3), dtype=np.float32)
    image[:, 30:] = 0.5
    instances = np.zeros((40, 60), dtype=np.int32)
    return Sample(image=image, labels=labels, instances=instances, dataset_id="cityscapes", name="s")


# Test: the output always has the crop size, whatever the drawn scale
@pytest.mark.parametrize("seed", range(5))
def test_augment_output_size(sample, seed):
    params = AugmentParams(scale_min=0.5, scale_max=2.0, crop=64)
    out = augment(sample, params, np.random.default_rng(seed))
    assert out.image.shape == (64, 64, 3)
    assert out.labels.shape == (64, 64)
    assert out.instances.shape == (64, 64)


# Test: padding uses ignore for labels so padded pixels are unsupervised
def test_augment_pads_labels_with_ignore(sample):
    params = AugmentParams(scale_min=1.0, scale_max=1.0, crop=64, flip_prob=0.0)
    out = augment(sample, params, np.random.default_rng(0))
    assert (out.labels[40:] == 255).all()
    assert (out.labels[:, 60:] == 255).all()
    assert set(np.unique(out.labels[:40, :60])) == {0, 2}


# Test: nearest-neighbour label resizing never invents label values
def test_augment_keeps_label_values(sample):
    params = AugmentParams(scale_min=1.3, scale_max=1.7, crop=64)
    for seed in range(10):
        out = augment(sample, params, np.random.default_rng(seed))
        assert set(np.unique(out.labels)) <= {0, 2, 255}


# Test: the same generator seed reproduces the same crop
def test_augment_deterministic(sample):
    params = AugmentParams(crop=64)
    first = augment(sample, params, np.random.default_rng(3))
    second = augment(sample, params, np.random.default_rng(3))
    assert np.array_equal(first.image, second.image)
    assert np.array_equal(first.labels, second.labels)


def test_augment_keeps_provenance(sample):
    out = augment(sample, AugmentParams(crop=64), np.random.default_rng(0))
    assert out.dataset_id == "cityscapes"
    assert out.name == "s"


def test_flip_mirrors_columns(sample):
    flipped = flip(sample)
    assert (flipped.labels[:, :30] == 2).all()
    assert (flipped.labels[:, 30:] == 0).all()
    assert np.array_equal(flip(flipped).image, sample.image)


def _square_sample(size=48, seed=0):
    rng = np.random.default_rng(seed)
    return Sample(
        image=rng.random((size, size, 3)).astype(np.float32),
        labels=rng.integers(0, 19, size=(size, size)).astype(np.uint8),
        instances=rng.integers(0, 5, size=(size, size)).astype(np.int32),
        dataset_id="cityscapes",
        name="square",
    )


def _scripted_rng(mocker, scale, top, left, flip_draw):
    rng = mocker.Mock(spec=np.random.Generator)
    rng.uniform.return_value = scale
    rng.integers.side_effect = [top, left]
    rng.random.return_value = flip_draw
    return rng


# Test: unit scale, a full-size crop and no flip return the input unchanged
@pytest.mark.parametrize("seed", range(3))
def test_augment_identity_params(seed):
    sample = _square_sample()
    params = AugmentParams(scale_min=1.0, scale_max=1.0, crop=48, flip_prob=0.0)
    out = augment(sample, params, np.random.default_rng(seed))
    assert np.array_equal(out.image, sample.image)
    assert np.array_equal(out.labels, sample.labels)
    assert np.array_equal(out.instances, sample.instances)


# Test: a certain flip applied twice gives back the input
def test_augment_double_flip_is_identity():
    sample = _square_sample()
    params = AugmentParams(scale_min=1.0, scale_max=1.0, crop=48, flip_prob=1.0)
    once = augment(sample, params, np.random.default_rng(0))
    assert not np.array_equal(once.labels, sample.labels)
    twice = augment(once, params, np.random.default_rng(1))
    assert np.array_equal(twice.image, sample.image)
    assert np.array_equal(twice.labels, sample.labels)
    assert np.array_equal(twice.instances, sample.instances)


# Test: scale 2, crop at (3, 4) and a flip produce this exact 4 x 4 label block
def test_augment_golden_output(mocker):
    labels = (4 * np.arange(4)[:, None] + np.arange(4)[None, :]).astype(np.uint8)
    sample = Sample(image=np.zeros((4, 4, 3), dtype=np.float32), labels=labels,
                    instances=labels.astype(np.int32), dataset_id="cityscapes")
    rng = _scripted_rng(mocker, scale=2.0, top=3, left=4, flip_draw=0.0)
    out = augment(sample, AugmentParams(scale_min=0.5, scale_max=2.0, crop=4, flip_prob=0.5), rng)
    expected = [[7, 7, 6, 6],
                [11, 11, 10, 10],
                [11, 11, 10, 10],
                [15, 15, 14, 14]]
    assert out.labels.tolist() == expected
    assert out.instances.tolist() == expected
    rng.uniform.assert_called_once_with(0.5, 2.0)
    assert rng.integers.call_args_list == [mocker.call(0, 5), mocker.call(0, 5)]


# Test: flipping then cropping the mirrored window equals cropping then flipping
@pytest.mark.parametrize("top,left", [(0, 0), (5, 11), (16, 3)])
def test_flip_and_crop_commute(mocker, top, left):
    sample = _square_sample()
    crop = 32
    crop_then_flip = augment(sample, AugmentParams(scale_min=1.0, scale_max=1.0, crop=crop, flip_prob=1.0),
                             _scripted_rng(mocker, 1.0, top, left, 0.0))
    mirrored_left = sample.labels.shape[1] - crop - left
    flip_then_crop = augment(flip(sample), AugmentParams(scale_min=1.0, scale_max=1.0, crop=crop, flip_prob=0.0),
                             _scripted_rng(mocker, 1.0, top, mirrored_left, 0.0))
    assert np.array_equal(crop_then_flip.image, flip_then_crop.image)
    assert np.array_equal(crop_then_flip.labels, flip_then_crop.labels)
    assert np.array_equal(crop_then_flip.instances, flip_then_crop.instances)
