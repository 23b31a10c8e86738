import numpy as np
import pytest
import torch

from app.exceptions import BadShape, ShapeMismatch
from app.models.dense_encoder import DenseEncoder
from app.models.ladder_model import AUX_LEVELS, BlendUnit, LadderDenseNet, upsample_logits
from app.services.loss_service import total_loss


@pytest.fixture
def model(toy_model_config):
    return LadderDenseNet(toy_model_config)


def test_encoder_feature_strides(toy_model_config):
    features = DenseEncoder(toy_model_config)(torch.rand(1, 3, 128, 192))
    assert [tuple(f.shape[-2:]) for f in features] == [(32, 48), (16, 24), (8, 12), (4, 6), (2, 3)]
    assert [f.shape[1] for f in features] == list(toy_model_config.encoder_stage_widths)


# Test: for 20 random sizes divisible by 64 every output has the expected stride
def test_output_shapes_random_sizes(model, toy_model_config):
    rng = np.random.default_rng(7)
    model.eval()
    for _ in range(20):
        height, width = (int(v) * 64 for v in rng.integers(1, 5, size=2))
        outputs = model(torch.rand(1, 3, height, width))
        assert outputs.logits_q.shape == (1, toy_model_config.num_classes, height // 4, width // 4)
        assert sorted(outputs.aux) == sorted(AUX_LEVELS)
        for level, logits in outputs.aux.items():
            assert logits.shape == (1, toy_model_config.num_classes, height // level, width // level)


def test_forward_rejects_indivisible_input(model):
    with pytest.raises(BadShape) as exc:
        model(torch.rand(1, 3, 96, 128))
    assert exc.value.divisor == 64


# Test: in eval mode two forward passes give identical logits
def test_eval_forward_deterministic(model):
    model.eval()
    images = torch.rand(2, 3, 64, 128)
    with torch.no_grad():
        first = model(images).logits_q
        second = model(images).logits_q
    assert torch.equal(first, second)


# Test: with a zeroed projection the blend sum passes the upsampled input through
def test_blend_sum_with_zero_projection():
    unit = BlendUnit(skip_channels=6, width=4)
    torch.nn.init.zeros_(unit.project.weight)
    up = torch.randn(1, 4, 8, 8)
    assert torch.equal(unit.blend_sum(torch.randn(1, 6, 8, 8), up), up)
    assert unit(torch.randn(1, 6, 8, 8), up).shape == (1, 4, 8, 8)


def test_blend_size_mismatch():
    unit = BlendUnit(skip_channels=6, width=4)
    with pytest.raises(ShapeMismatch):
        unit(torch.randn(1, 6, 8, 8), torch.randn(1, 4, 4, 4))


# Test: an impulse upsampled 4x follows the bilinear half-pixel stencil
def test_upsample_logits_stencil():
    logits = torch.tensor([0.0, 1.0, 0.0]).view(1, 1, 1, 3)
    out = upsample_logits(logits, 4, 12)
    expected = [0, 0, 0.125, 0.375, 0.625, 0.875, 0.875, 0.625, 0.375, 0.125, 0, 0]
    for row in out[0, 0]:
        assert row.tolist() == pytest.approx(expected)


def test_upsample_logits_requires_factor_four():
    with pytest.raises(ShapeMismatch):
        upsample_logits(torch.zeros(1, 2, 4, 4), 15, 16)


# Test: arbitrary input sizes are padded internally and cropped back
def test_predict_odd_sizes(model, toy_model_config):
    model.eval()
    pred = model.predict(torch.rand(2, 3, 50, 97))
    assert pred.shape == (2, 50, 97)
    assert int(pred.max()) < toy_model_config.num_classes
    aux = model.aux_predictions(torch.rand(1, 3, 64, 64))
    assert aux[8].shape == (1, 8, 8)


def test_parameter_groups_without_pretrained_encoder(model):
    pretrained, fresh = model.parameter_groups()
    assert pretrained == []
    assert len(fresh) == len(list(model.parameters()))


def test_parameter_groups_with_encoder_weights(tmp_path, toy_model_config):
    path = tmp_path / "encoder.pt"
    torch.save({"encoder": DenseEncoder(toy_model_config).state_dict()}, path)
    model = LadderDenseNet(toy_model_config.model_copy(update={"encoder_weights": path}))
    pretrained, fresh = model.parameter_groups()
    assert model.encoder_pretrained
    assert len(pretrained) == len(list(model.encoder.parameters()))
    assert len(pretrained) + len(fresh) == len(list(model.parameters()))


# Test: with every weight zeroed all classes get the same logit at every level
def test_zero_weights_give_equal_logits(model):
    model.eval()
    with torch.no_grad():
        for param in model.parameters():
            param.zero_()
        outputs = model(torch.rand(1, 3, 64, 128))
    for logits in [outputs.logits_q, *outputs.aux.values()]:
        assert torch.equal(logits, logits[:, :1].expand_as(logits))


# Test: a batch holding the same image twice yields the same output twice
def test_duplicated_batch_gives_duplicated_outputs(model):
    model.eval()
    image = torch.rand(1, 3, 64, 64)
    with torch.no_grad():
        outputs = model(torch.cat([image, image]))
        single = model(image)
    assert torch.equal(outputs.logits_q[0], outputs.logits_q[1])
    for logits in outputs.aux.values():
        assert torch.equal(logits[0], logits[1])
    assert torch.allclose(outputs.logits_q[:1], single.logits_q, atol=1e-6)


# Test: every upsampled value lies between the min and max of its 2 x 2 source neighbourhood
def test_upsample_logits_stays_in_local_hull():
    generator = torch.Generator().manual_seed(3)
    logits = torch.randn(1, 1, 5, 7, dtype=torch.float64, generator=generator)
    out = upsample_logits(logits, 20, 28)[0, 0].numpy()
    source = logits[0, 0].numpy()

    def neighbours(size):
        coord = np.clip((np.arange(4 * size) + 0.5) / 4 - 0.5, 0, size - 1)
        low = np.floor(coord).astype(int)
        return low, np.minimum(low + 1, size - 1)

    (top, bottom), (left, right) = neighbours(5), neighbours(7)
    corners = np.stack([source[np.ix_(top, left)], source[np.ix_(top, right)],
                        source[np.ix_(bottom, left)], source[np.ix_(bottom, right)]])
    assert (out >= corners.min(0) - 1e-12).all()
    assert (out <= corners.max(0) + 1e-12).all()
    assert source.min() - 1e-12 <= out.min() and out.max() <= source.max() + 1e-12


# Test: parameter gradients of the total loss match central finite differences
def test_model_gradients_match_finite_differences(toy_model_config):
    config = toy_model_config.model_copy(update={"num_classes": 4})
    model = LadderDenseNet(config).double().eval()
    generator = torch.Generator().manual_seed(5)
    images = torch.rand(1, 3, 64, 64, dtype=torch.float64, generator=generator)
    labels = torch.randint(0, 4, (1, 64, 64), generator=generator)

    def loss() -> torch.Tensor:
        return total_loss(model(images), labels, 0.4).total

    model.zero_grad()
    loss().backward()
    named = list(model.named_parameters())
    rng = np.random.default_rng(0)
    picked = sorted({0, len(named) - 1, *rng.choice(len(named), size=6, replace=False).tolist()})
    eps = 1e-6
    for position in picked:
        name, param = named[position]
        flat = param.data.view(-1)
        for index in rng.choice(flat.numel(), size=min(3, flat.numel()), replace=False).tolist():
            original = flat[index].item()
            with torch.no_grad():
                flat[index] = original + eps
                plus = loss().item()
                flat[index] = original - eps
                minus = loss().item()
                flat[index] = original
            numeric = (plus - minus) / (2 * eps)
            analytic = param.grad.view(-1)[index].item()
            assert analytic == pytest.approx(numeric, rel=1e-3, abs=1e-7), (name, index)
