import copy

import pytest
import torch

from app.exceptions import GridTooLarge
from app.models.context_block import SpatialPyramidPooling


# Test: a single global branch on a constant map yields a spatially constant output
def test_global_pooling_constant_input():
    spp = SpatialPyramidPooling(4, 5, grid=(1,), branch_channels=3).eval()
    features = torch.ones(1, 4, 6, 6) * torch.arange(4.0).view(1, 4, 1, 1)
    with torch.no_grad():
        out = spp(features)
    assert out.shape == (1, 5, 6, 6)
    assert torch.allclose(out, out[..., :1, :1].expand_as(out))


def test_strict_grid_too_large():
    spp = SpatialPyramidPooling(4, 5, grid=(1, 2, 3, 6), branch_channels=2, strict=True)
    with pytest.raises(GridTooLarge) as exc:
        spp(torch.rand(1, 4, 4, 4))
    assert exc.value.grid == 6


# Test: without strict mode grids are clamped to the feature map
def test_non_strict_clamps_grid():
    spp = SpatialPyramidPooling(4, 5, grid=(1, 2, 3, 6), branch_channels=2, strict=False).eval()
    with torch.no_grad():
        assert spp(torch.rand(2, 4, 1, 1)).shape == (2, 5, 1, 1)
        assert spp(torch.rand(2, 4, 2, 3)).shape == (2, 5, 2, 3)


# Test: permuting input channels together with the matching 1x1 weights leaves the output unchanged
def test_channel_permutation_equivariance():
    spp = SpatialPyramidPooling(4, 5, grid=(1, 2, 3), branch_channels=3).eval()
    permuted = copy.deepcopy(spp)
    perm = torch.tensor([2, 0, 3, 1])
    with torch.no_grad():
        for branch in permuted.branches:
            branch[0].weight.copy_(branch[0].weight[:, perm])
        fuse = permuted.fuse[0]
        fuse.weight[:, :4] = fuse.weight[:, :4][:, perm]
        features = torch.rand(2, 4, 6, 6)
        assert torch.allclose(spp(features), permuted(features[:, perm]), atol=1e-6)
