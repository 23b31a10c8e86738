"""Mini dense encoder: stem to 1/4, then dense stages down to 1/64.

Each stage returns its features after a 1x1 transition, giving the five ladder
levels /4, /8, /16, /32 and /64 with ``encoder_stage_widths`` channels.
"""
from typing import List

import torch
import torch.nn as nn

from app.schemas.config_schemas import ModelConfig


class ConvBnRelu(nn.Sequential):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, stride: int = 1):
        super().__init__(
            nn.Conv2d(in_channels, out_channels, kernel_size, stride=stride, padding=kernel_size // 2, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True),
        )


class DenseLayer(nn.Module):
    """BN -> ReLU -> Conv1x1 (4k) -> BN -> ReLU -> Conv3x3 (k); output concatenated to the input."""

    def __init__(self, in_channels: int, growth_rate: int):
        super().__init__()
        inter_channels = 4 * growth_rate
        self.bn1 = nn.BatchNorm2d(in_channels)
        self.conv1 = nn.Conv2d(in_channels, inter_channels, kernel_size=1, bias=False)
        self.bn2 = nn.BatchNorm2d(inter_channels)
        self.conv2 = nn.Conv2d(inter_channels, growth_rate, kernel_size=3, padding=1, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.conv1(torch.relu(self.bn1(x)))
        out = self.conv2(torch.relu(self.bn2(out)))
        return torch.cat([x, out], 1)


class DenseBlock(nn.Sequential):
    def __init__(self, in_channels: int, num_layers: int, growth_rate: int):
        super().__init__(*[DenseLayer(in_channels + i * growth_rate, growth_rate) for i in range(num_layers)])
        self.out_channels = in_channels + num_layers * growth_rate


class DenseStage(nn.Module):
    """Optional 2x average pooling, dense block, 1x1 transition to the stage width."""

    def __init__(self, in_channels: int, out_channels: int, num_layers: int, growth_rate: int, downsample: bool):
        super().__init__()
        self.pool = nn.AvgPool2d(2, 2) if downsample else nn.Identity()
        self.block = DenseBlock(in_channels, num_layers, growth_rate)
        self.transition = ConvBnRelu(self.block.out_channels, out_channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.transition(self.block(self.pool(x)))


class DenseEncoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        widths = config.encoder_stage_widths
        stem_width = max(8, widths[0] // 2)
        self.stem = nn.Sequential(
            ConvBnRelu(3, stem_width, 3, stride=2),
            ConvBnRelu(stem_width, stem_width, 3, stride=2),
        )
        in_channels = [stem_width] + list(widths[:-1])
        self.stages = nn.ModuleList(
            DenseStage(in_channels[i], widths[i], config.block_depths[i], config.growth_rate, downsample=i > 0)
            for i in range(len(widths))
        )
        self.out_channels = tuple(widths)

    def forward(self, images: torch.Tensor) -> List[torch.Tensor]:
        """Features at /4, /8, /16, /32, /64."""
        x = self.stem(images)
        features = []
        for stage in self.stages:
            x = stage(x)
            features.append(x)
        return features
