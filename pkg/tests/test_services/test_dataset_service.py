import numpy as np
import pytest

from app.exceptions import MissingLabel, ShapeMismatch
from app.schemas.config_schemas import AugmentParams, SyntheticDatasetSpec
from app.schemas.label_schemas import ClassGroup
from app.schemas.sampler_schemas import ScheduleEntry
from app.services.dataset_service import AugmentedDataset, DatasetIndex, collate_samples, generate_synthetic, load_dataset
from app.utils.png_io import read_png, write_png


# Test: generated datasets follow the images/labels/instances + manifest layout
def test_generate_layout(tmp_path, space, driving_spec):
    index = generate_synthetic(driving_spec, 0, tmp_path, space)
    base = tmp_path / "cityscapes"
    assert (base / "manifest.tsv").exists()
    assert len(index) == driving_spec.count
    for sub in ("images", "labels", "instances"):
        assert len(list((base / sub).glob("*.png"))) == driving_spec.count
    assert index.group is ClassGroup.DRIVING


# Test: the same seed writes identical manifests and pixels
def test_generate_deterministic(tmp_path, space, driving_spec):
    generate_synthetic(driving_spec, 7, tmp_path / "a", space)
    generate_synthetic(driving_spec, 7, tmp_path / "b", space)
    manifest_a = (tmp_path / "a" / "cityscapes" / "manifest.tsv").read_bytes()
    manifest_b = (tmp_path / "b" / "cityscapes" / "manifest.tsv").read_bytes()
    assert manifest_a == manifest_b
    first = "train_00000.png"
    for sub in ("images", "labels", "instances"):
        assert np.array_equal(read_png(tmp_path / "a" / "cityscapes" / sub / first),
                              read_png(tmp_path / "b" / "cityscapes" / sub / first))


# Test: regenerating with a smaller count leaves no orphaned scene files
def test_regenerate_smaller_count_removes_orphans(tmp_path, space, driving_spec):
    generate_synthetic(driving_spec, 0, tmp_path, space)
    smaller = driving_spec.model_copy(update={"count": 2})
    index = generate_synthetic(smaller, 0, tmp_path, space)
    assert len(index) == 2
    for sub in ("images", "labels", "instances"):
        names = sorted(p.name for p in (tmp_path / "cityscapes" / sub).glob("*.png"))
        assert names == ["train_00000.png", "train_00001.png"]
    assert len(load_dataset(tmp_path, "cityscapes", space)) == 2


# Test: labels are written in native ids and materialize back into the requested unified classes
def test_materialize_encodes_labels(driving_corpus, driving_spec):
    native = read_png(driving_corpus[0].label_path)
    assert set(np.unique(native)) <= {7, 8, 11, 12, 13, 17}
    sample = driving_corpus.materialize(0)
    assert sample.image.shape == (64, 64, 3)
    assert sample.image.dtype == np.float32
    assert 0.0 <= sample.image.min() and sample.image.max() <= 1.0
    assert set(np.unique(sample.labels)) <= set(driving_spec.classes)
    assert sample.dataset_id == "cityscapes"


# Test: a hood band becomes ignore rows in the unified labels
def test_hood_rows_are_ignored(tmp_path, space):
    spec = SyntheticDatasetSpec(dataset_id="cityscapes", height=64, width=64, classes=(0, 2), count=1, hood_rows=8)
    sample = generate_synthetic(spec, 0, tmp_path, space).materialize(0)
    assert (sample.labels[-8:] == space.ignore_id).all()
    assert (sample.labels[:-8] != space.ignore_id).all()


# Test: instance ids are present exactly on instance-class pixels
def test_instances_cover_instance_classes(tmp_path, space):
    spec = SyntheticDatasetSpec(dataset_id="cityscapes", height=64, width=64, classes=(0, 11, 13), count=4, max_shapes=4)
    index = generate_synthetic(spec, 3, tmp_path, space)
    for sample in index.samples():
        instance_pixels = np.isin(sample.labels, space.instance_class_ids())
        assert (sample.instances[instance_pixels] > 0).all()
        assert (sample.instances[~instance_pixels] == 0).all()


# Test: negative_fraction 1 flags every image as negative
def test_negative_images_flagged(tmp_path, space):
    spec = SyntheticDatasetSpec(dataset_id="wilddash", height=64, width=64, classes=(0, 2, 10), count=3, negative_fraction=1.0)
    index = generate_synthetic(spec, 0, tmp_path, space)
    assert all(d.is_negative for d in index)


# Test: classes outside the dataset are refused before anything is written
def test_generate_rejects_foreign_classes(tmp_path, space):
    spec = SyntheticDatasetSpec(dataset_id="cityscapes", classes=(0, 21), count=1)
    with pytest.raises(ValueError):
        generate_synthetic(spec, 0, tmp_path, space)
    assert not (tmp_path / "cityscapes" / "manifest.tsv").exists()


# Test: a missing label file is reported with its image path
def test_load_missing_label(driving_corpus, tmp_path, space):
    driving_corpus[0].label_path.unlink()
    with pytest.raises(MissingLabel):
        load_dataset(tmp_path / "data" / "train", "cityscapes", space)


# Test: label and image sizes are checked from the PNG headers at load time
def test_load_shape_mismatch(driving_corpus, tmp_path, space):
    write_png(driving_corpus[1].label_path, np.full((32, 64), 7, dtype=np.uint8))
    with pytest.raises(ShapeMismatch):
        load_dataset(tmp_path / "data" / "train", "cityscapes", space)


# Test: a missing dataset directory gives an empty index
def test_load_missing_directory(tmp_path, space):
    assert len(load_dataset(tmp_path / "nowhere", "kitti", space)) == 0


# Test: without a manifest the images directory is enumerated
def test_load_without_manifest(driving_corpus, tmp_path, space):
    (tmp_path / "data" / "train" / "cityscapes" / "manifest.tsv").unlink()
    index = load_dataset(tmp_path / "data" / "train", "cityscapes", space)
    assert [d.name for d in index] == sorted(d.name for d in driving_corpus)


def test_collate_samples(driving_corpus):
    batch = collate_samples([driving_corpus.materialize(i) for i in range(3)])
    assert tuple(batch.images.shape) == (3, 3, 64, 64)
    assert tuple(batch.labels.shape) == (3, 64, 64)
    assert str(batch.labels.dtype) == "torch.int64"
    assert batch.dataset_ids == ["cityscapes"] * 3
    assert len(batch) == 3


# Test: the entry seed alone fixes the augmented crop
def test_augmented_dataset_is_seeded_per_entry(driving_corpus):
    dataset = AugmentedDataset({"cityscapes": driving_corpus}, AugmentParams(crop=64, scale_min=0.5, scale_max=1.5))
    entry = ScheduleEntry("cityscapes", 2, ClassGroup.DRIVING, (11,))
    first, second = dataset[entry], dataset[entry]
    assert np.array_equal(first.image, second.image)
    assert np.array_equal(first.labels, second.labels)
    assert first.labels.shape == (64, 64)


# Test: padding takes the ignore id of the dataset's label space
def test_augmented_dataset_pads_with_space_ignore_id(driving_corpus, space):
    custom = space.model_copy(update={"ignore_id": 200})
    index = DatasetIndex("cityscapes", driving_corpus.descriptors, custom)
    params = AugmentParams(crop=96, scale_min=1.0, scale_max=1.0, flip_prob=0.0)
    sample = AugmentedDataset({"cityscapes": index}, params)[ScheduleEntry("cityscapes", 0, ClassGroup.DRIVING, (1,))]
    assert sample.labels.shape == (96, 96)
    assert (sample.labels[64:] == 200).all()
    assert (sample.labels[:, 64:] == 200).all()
    assert 255 not in sample.labels


def test_augmented_dataset_without_params_returns_raw(driving_corpus):
    dataset = AugmentedDataset({"cityscapes": driving_corpus}, None)
    sample = dataset[ScheduleEntry("cityscapes", 0, ClassGroup.DRIVING)]
    assert np.array_equal(sample.labels, driving_corpus.materialize(0).labels)
