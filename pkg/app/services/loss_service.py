"""Main cross-entropy at input resolution and the pyramid loss over box-pooled label distributions."""
import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import torch
import torch.nn.functional as F

from app.exceptions import BadShape, ShapeMismatch
from app.models.ladder_model import ModelOutputs, upsample_logits
from app.schemas.label_schemas import DEFAULT_IGNORE_ID

logger = logging.getLogger(__name__)
PYRAMID_WEIGHT = 0.4


@dataclass
class LossBreakdown:
    total: torch.Tensor
    main: torch.Tensor
    pyramid: torch.Tensor
    levels: Dict[int, torch.Tensor] = field(default_factory=dict)

    def as_floats(self) -> Dict[str, float]:
        values = {"total": float(self.total), "main": float(self.main), "pyramid": float(self.pyramid)}
        values.update({f"pyramid_{n}": float(v) for n, v in sorted(self.levels.items())})
        return values


def _zero_like(logits: torch.Tensor) -> torch.Tensor:
    # keeps the graph so backward() on an all-ignore batch yields zero gradients
    return logits.sum() * 0.0


def box_label_distribution(labels: torch.Tensor, box: int, num_classes: int,
                           ignore_id: int = DEFAULT_IGNORE_ID) -> Tuple[torch.Tensor, torch.Tensor]:
    """Normalized histogram of non-ignore labels in every ``box x box`` cell.

    ``labels`` is B x H x W (or H x W); returns ``dist`` as B x C x H/box x W/box
    (channel-first like logits) and ``valid`` as B x H/box x W/box. Cells holding only
    ignore pixels are invalid and carry an all-zero distribution.
    """
    squeeze = labels.dim() == 2
    if squeeze:
        labels = labels.unsqueeze(0)
    batch, height, width = labels.shape
    if height % box or width % box:
        raise BadShape((height, width), box)
    rows, cols = height // box, width // box

    labels = labels.long()
    keep = labels != ignore_id
    if keep.any() and int(labels[keep].max()) >= num_classes:
        raise ValueError(f"label {int(labels[keep].max())} outside {num_classes} classes")
    b = torch.arange(batch, device=labels.device).view(batch, 1, 1)
    y = (torch.arange(height, device=labels.device) // box).view(1, height, 1)
    x = (torch.arange(width, device=labels.device) // box).view(1, 1, width)
    cell = (b * rows + y) * cols + x
    flat = (cell * num_classes + labels.clamp(max=num_classes - 1))[keep]
    counts = torch.bincount(flat, minlength=batch * rows * cols * num_classes).to(torch.float64)
    counts = counts.view(batch, rows, cols, num_classes)

    totals = counts.sum(-1, keepdim=True)
    valid = totals.squeeze(-1) > 0
    dist = torch.where(totals > 0, counts / totals.clamp(min=1.0), torch.zeros_like(counts))
    dist = dist.permute(0, 3, 1, 2).contiguous()
    if squeeze:
        return dist[0], valid[0]
    return dist, valid


def level_cross_entropy(logits: torch.Tensor, dist: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
    """-sum_c q_c log softmax(logits)_c averaged over valid cells; 0 without valid cells."""
    if logits.shape != dist.shape:
        raise ShapeMismatch("auxiliary logits", tuple(dist.shape), tuple(logits.shape))
    if not valid.any():
        return _zero_like(logits)
    cross_entropy = -(dist.to(logits.dtype) * F.log_softmax(logits, dim=1)).sum(1)
    return cross_entropy[valid].mean()


def pyramid_loss_terms(aux_logits: Mapping[int, torch.Tensor], labels: torch.Tensor,
                       ignore_id: int = DEFAULT_IGNORE_ID) -> Dict[int, torch.Tensor]:
    """Per-level cross-entropy against the label distribution of the matching N x N boxes.

    Predictions stay at their native resolution; the labels are pooled down to them.
    """
    terms = {}
    height, width = labels.shape[-2:]
    for box, logits in sorted(aux_logits.items()):
        expected = (height // box, width // box)
        if tuple(logits.shape[-2:]) != expected:
            raise ShapeMismatch(f"auxiliary logits at /{box}", expected, tuple(logits.shape[-2:]))
        dist, valid = box_label_distribution(labels, box, logits.shape[1], ignore_id)
        if logits.dim() == 3:
            logits = logits.unsqueeze(0)
            dist, valid = dist.unsqueeze(0), valid.unsqueeze(0)
        terms[box] = level_cross_entropy(logits, dist, valid)
    return terms


def pyramid_loss(aux_logits: Mapping[int, torch.Tensor], labels: torch.Tensor,
                 weight_per_level: Optional[Mapping[int, float]] = None,
                 ignore_id: int = DEFAULT_IGNORE_ID) -> torch.Tensor:
    """Weighted sum of the level terms; uniform 1/|levels| weights by default."""
    terms = pyramid_loss_terms(aux_logits, labels, ignore_id)
    if not terms:
        raise ValueError("pyramid_loss needs at least one auxiliary level")
    if weight_per_level is None:
        weight_per_level = {box: 1.0 / len(terms) for box in terms}
    return sum(weight_per_level[box] * term for box, term in terms.items())


def main_loss(logits_q: torch.Tensor, labels: torch.Tensor, ignore_id: int = DEFAULT_IGNORE_ID) -> torch.Tensor:
    """Softmax cross-entropy of bilinearly upsampled logits, averaged over non-ignore pixels."""
    height, width = labels.shape[-2:]
    logits = upsample_logits(logits_q, height, width)
    if labels.dim() == 2:
        labels = labels.unsqueeze(0)
    labels = labels.long()
    count = int((labels != ignore_id).sum())
    if count == 0:
        return _zero_like(logits_q)
    total = F.cross_entropy(logits, labels, ignore_index=ignore_id, reduction="sum")
    return total / count


def total_loss(outputs: ModelOutputs, labels: torch.Tensor, pyramid_weight: float = PYRAMID_WEIGHT,
               ignore_id: int = DEFAULT_IGNORE_ID) -> LossBreakdown:
    """main + pyramid_weight * pyramid; with weight 0 the pyramid term is not computed and logs as 0."""
    main = main_loss(outputs.logits_q, labels, ignore_id)
    if pyramid_weight == 0 or not outputs.aux:
        zero = torch.zeros((), dtype=main.dtype, device=main.device)
        return LossBreakdown(total=main, main=main, pyramid=zero)
    levels = pyramid_loss_terms(outputs.aux, labels, ignore_id)
    pyramid = sum(levels.values()) / len(levels)
    return LossBreakdown(total=main + pyramid_weight * pyramid, main=main, pyramid=pyramid, levels=levels)
