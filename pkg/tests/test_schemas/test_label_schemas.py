import pytest
from pydantic import ValidationError

from app.schemas.label_schemas import Category, ClassGroup, LabelClass, LabelSpace, NegativeClass, RemapKind, RemapStrategy


def _space(**overrides):
    data = dict(
        classes=(
            LabelClass(unified_id=0, name="road", group=ClassGroup.DRIVING, category=Category.FLAT),
            LabelClass(unified_id=1, name="bed", group=ClassGroup.INDOOR, category=Category.INDOOR_OTHER),
        ),
        negatives={"cityscapes": NegativeClass(unified_id=2, name="Void", native_id=0),
                   "scannet": NegativeClass(unified_id=3, name="Ignore", native_id=0)},
        dataset_maps={"cityscapes": {7: 0}, "scannet": {4: 1}},
        dataset_groups={"cityscapes": ClassGroup.DRIVING, "scannet": ClassGroup.INDOOR},
    )
    data.update(overrides)
    return LabelSpace(**data)


def test_small_space_layout():
    space = _space()
    assert space.num_classes == 2
    assert space.num_labels == 4
    assert space.negative_ids == (2, 3)
    assert space.name_of(3) == "Ignore"
    assert space.name_of(255) == "ignore"
    assert space.category_names()[Category.HUMAN.index] == "human"
    assert space.class_id("ROAD", "cityscapes") == 0
    with pytest.raises(KeyError):
        space.class_id("bed", "cityscapes")


def test_category_index_order():
    assert Category.FLAT.index == 0
    assert Category.VEHICLE.index == 6
    assert Category.INDOOR_OTHER.index == 7


# Test: a dataset map hitting two native ids on one unified id is rejected
def test_non_injective_map_rejected():
    with pytest.raises(ValidationError) as exc:
        _space(dataset_maps={"cityscapes": {7: 0, 8: 0}, "scannet": {4: 1}})
    assert "not injective" in str(exc.value)


def test_reserved_native_id_rejected():
    with pytest.raises(ValidationError):
        _space(dataset_maps={"cityscapes": {0: 0}, "scannet": {4: 1}})


def test_ignore_id_collision_rejected():
    with pytest.raises(ValidationError):
        _space(ignore_id=3)


def test_driving_class_needs_driving_category():
    classes = (
        LabelClass(unified_id=0, name="road", group=ClassGroup.DRIVING, category=Category.INDOOR_OTHER),
        LabelClass(unified_id=1, name="bed", group=ClassGroup.INDOOR, category=Category.INDOOR_OTHER),
    )
    with pytest.raises(ValidationError):
        _space(classes=classes)


def test_remap_strategy_constructors():
    assert RemapStrategy().kind is RemapKind.AUTO_VOID
    assert RemapStrategy.identity().kind is RemapKind.IDENTITY
    assert RemapStrategy.to_class(3).target == 3
    with pytest.raises(ValidationError):
        RemapStrategy.to_class(-1)


# Test: the reserved foreign export range may not cover a dataset's native ids
def test_foreign_range_overlap_rejected():
    with pytest.raises(ValidationError) as exc:
        _space(foreign_base=5)
    assert "overlaps" in str(exc.value)
    with pytest.raises(ValidationError):
        _space(foreign_base=253)
    assert _space(foreign_base=8).foreign_base == 8
