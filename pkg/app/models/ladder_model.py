"""Ladder-style segmentation network with summation blending and pyramid auxiliary heads."""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from app.exceptions import BadShape, ShapeMismatch
from app.models.context_block import SpatialPyramidPooling
from app.models.dense_encoder import ConvBnRelu, DenseEncoder
from app.schemas.config_schemas import INPUT_DIVISOR, ModelConfig

logger = logging.getLogger(__name__)

AUX_LEVELS = (64, 32, 16, 8)
LOGITS_STRIDE = 4


@dataclass
class ModelOutputs:
    logits_q: torch.Tensor  # B x C x H/4 x W/4
    aux: Dict[int, torch.Tensor] = field(default_factory=dict)  # N -> B x C x H/N x W/N


class BlendUnit(nn.Module):
    """project(skip) + up, then the stage's single 3x3 convolution (conv -> BN -> ReLU)."""

    def __init__(self, skip_channels: int, width: int):
        super().__init__()
        self.project = nn.Conv2d(skip_channels, width, kernel_size=1, bias=False)
        self.fuse = ConvBnRelu(width, width, 3)

    def blend_sum(self, skip: torch.Tensor, up: torch.Tensor) -> torch.Tensor:
        if skip.shape[-2:] != up.shape[-2:]:
            raise ShapeMismatch("blend inputs", tuple(up.shape[-2:]), tuple(skip.shape[-2:]))
        return self.project(skip) + up

    def forward(self, skip: torch.Tensor, up: torch.Tensor) -> torch.Tensor:
        return self.fuse(self.blend_sum(skip, up))


def upsample_logits(logits_q: torch.Tensor, height: int, width: int) -> torch.Tensor:
    """Bilinear upsampling of quarter-resolution logits to H x W."""
    h, w = logits_q.shape[-2:]
    if (height, width) != (LOGITS_STRIDE * h, LOGITS_STRIDE * w):
        raise ShapeMismatch("upsampled logits", (LOGITS_STRIDE * h, LOGITS_STRIDE * w), (height, width))
    return F.interpolate(logits_q, size=(height, width), mode="bilinear", align_corners=False)


class LadderDenseNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        width = config.decoder_width
        self.encoder = DenseEncoder(config)
        skips = self.encoder.out_channels
        self.spp = SpatialPyramidPooling(skips[-1], width, config.spp_grid, config.branch_width, strict=False)
        # /32, /16, /8, /4
        self.blends = nn.ModuleList(BlendUnit(channels, width) for channels in reversed(skips[:-1]))
        self.aux_heads = nn.ModuleDict({str(n): nn.Conv2d(width, config.num_classes, 1) for n in AUX_LEVELS})
        self.head = nn.Conv2d(width, config.num_classes, 1)
        self.encoder_pretrained = False
        if config.encoder_weights is not None:
            self.load_encoder_weights(config.encoder_weights)

    def load_encoder_weights(self, path: Path) -> None:
        state = torch.load(path, map_location="cpu")
        self.encoder.load_state_dict(state.get("encoder", state))
        self.encoder_pretrained = True
        logger.info("Loaded encoder weights from %s", path)

    def parameter_groups(self) -> Tuple[List[nn.Parameter], List[nn.Parameter]]:
        """(pretrained, fresh) parameters; the pretrained group is empty without external encoder weights."""
        encoder = list(self.encoder.parameters())
        encoder_ids = {id(p) for p in encoder}
        fresh = [p for p in self.parameters() if id(p) not in encoder_ids]
        if self.encoder_pretrained:
            return encoder, fresh
        return [], encoder + fresh

    def aux_head_parameters(self) -> List[nn.Parameter]:
        return list(self.aux_heads.parameters())

    def forward(self, images: torch.Tensor) -> ModelOutputs:
        height, width = images.shape[-2:]
        if height % INPUT_DIVISOR or width % INPUT_DIVISOR:
            raise BadShape((height, width), INPUT_DIVISOR)
        skips = self.encoder(images)
        x = self.spp(skips[-1])
        aux = {64: self.aux_heads["64"](x)}
        for blend, skip, level in zip(self.blends, reversed(skips[:-1]), (32, 16, 8, 4)):
            up = F.interpolate(x, size=skip.shape[-2:], mode="bilinear", align_corners=False)
            x = blend(skip, up)
            if level in AUX_LEVELS:
                aux[level] = self.aux_heads[str(level)](x)
        return ModelOutputs(logits_q=self.head(x), aux=aux)

    @torch.no_grad()
    def predict_logits(self, images: torch.Tensor) -> torch.Tensor:
        """Full-resolution logits for arbitrary H x W: zero-pad to a multiple of 64, run, crop."""
        height, width = images.shape[-2:]
        pad_h = -height % INPUT_DIVISOR
        pad_w = -width % INPUT_DIVISOR
        padded = F.pad(images, (0, pad_w, 0, pad_h))
        outputs = self(padded)
        logits = upsample_logits(outputs.logits_q, height + pad_h, width + pad_w)
        return logits[..., :height, :width]

    @torch.no_grad()
    def predict(self, images: torch.Tensor) -> torch.Tensor:
        """B x H x W argmax prediction in unified ids."""
        return self.predict_logits(images).argmax(1)

    @torch.no_grad()
    def aux_predictions(self, images: torch.Tensor) -> Dict[int, torch.Tensor]:
        """Argmax maps of every auxiliary head, to inspect accuracy along the upsampling path."""
        outputs = self(images)
        return {n: logits.argmax(1) for n, logits in outputs.aux.items()}
