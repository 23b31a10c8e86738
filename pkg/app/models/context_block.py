from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from app.exceptions import GridTooLarge
from app.models.dense_encoder import ConvBnRelu


class SpatialPyramidPooling(nn.Module):
    """Context block at the end of the encoder.

    Each branch average-pools to a g x g grid, applies a 1x1 convolution and is
    bilinearly upsampled back; branches are concatenated with the input and fused
    by one 1x1 convolution to ``out_channels``.

    With ``strict=True`` a grid larger than the feature map raises GridTooLarge;
    otherwise such a branch pools to the largest grid the map allows, which keeps
    small inputs (64 x 64 images give 1 x 1 maps at /64) usable.
    """

    def __init__(self, in_channels: int, out_channels: int, grid: Sequence[int] = (1, 2, 3, 6),
                 branch_channels: int = 64, strict: bool = True):
        super().__init__()
        self.grid = tuple(grid)
        self.strict = strict
        self.branches = nn.ModuleList(
            nn.Sequential(nn.Conv2d(in_channels, branch_channels, kernel_size=1), nn.ReLU(inplace=True))
            for _ in self.grid
        )
        self.fuse = ConvBnRelu(in_channels + len(self.grid) * branch_channels, out_channels, 1)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        height, width = features.shape[-2:]
        if self.strict and min(height, width) < max(self.grid):
            raise GridTooLarge(max(self.grid), (height, width))
        outputs = [features]
        for g, branch in zip(self.grid, self.branches):
            pooled = F.adaptive_avg_pool2d(features, (min(g, height), min(g, width)))
            outputs.append(F.interpolate(branch(pooled), size=(height, width), mode="bilinear", align_corners=False))
        return self.fuse(torch.cat(outputs, 1))
