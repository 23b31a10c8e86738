"""Optimization loop: Adam with grouped learning rates over mixed driving/indoor batches.

Checkpoints, loss history and periodic validation all land in ``run_config.output_dir``::

    run.ini                 resolved configuration
    history.tsv             iteration, main, pyramid, total, lr
    eval_history.tsv        iteration, dataset, mIoU, category mIoU, pixel accuracy
    checkpoints/iter_XXXXXXX.pt, checkpoints/last.pt
    eval/<dataset>_classes.tsv, eval/<dataset>_summary.json
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch
from torch.utils.data import DataLoader

from app.exceptions import EmptyDataset, NonFiniteLoss
from app.models.ladder_model import LadderDenseNet
from app.schemas.config_schemas import RunConfig, TrainConfig
from app.schemas.dataset_schemas import SegBatch
from app.schemas.label_schemas import ClassGroup, LabelSpace
from app.schemas.report_schemas import AblationRow, EvaluationSummary
from app.services import label_service
from app.services.checkpoint_service import read_checkpoint, save_checkpoint
from app.services.dataset_service import AugmentedDataset, DatasetIndex, collate_samples, load_dataset
from app.services.evaluation_service import evaluate_model
from app.services.loss_service import LossBreakdown, total_loss
from app.services.metrics_service import write_evaluation_report
from app.services.sampler_service import ScheduleBatchSampler
from app.utils.config_file import write_run_config
from settings.config import settings

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ("iteration", "main", "pyramid", "total", "lr")
EVAL_COLUMNS = ("iteration", "dataset", "miou", "category_miou", "pixel_accuracy")


@dataclass
class TrainResult:
    checkpoint: Path
    iteration: int
    history: List[Dict[str, float]] = field(default_factory=list)
    evaluations: Dict[str, EvaluationSummary] = field(default_factory=dict)


def configure_optimizer(params: Tuple[Sequence[torch.nn.Parameter], Sequence[torch.nn.Parameter]],
                        config: TrainConfig) -> torch.optim.Adam:
    """Adam over (pretrained, fresh) parameters; the pretrained group runs at base_lr / divisor."""
    pretrained, fresh = params
    groups = []
    if fresh:
        groups.append({"params": list(fresh), "lr": config.base_lr, "name": "fresh"})
    if pretrained:
        groups.append({"params": list(pretrained), "lr": config.base_lr / config.pretrained_lr_divisor,
                       "name": "pretrained"})
    return torch.optim.Adam(groups, lr=config.base_lr)


def seed_everything(seed: int, deterministic: bool = True) -> None:
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)
        torch.backends.cudnn.benchmark = False


def _append_tsv(path: Path, columns: Sequence[str], row: Sequence) -> None:
    new = not path.exists()
    with open(path, "a", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        if new:
            writer.writerow(columns)
        writer.writerow(row)


def _fmt(value) -> str:
    if value is None:
        return "nan"
    return f"{value:.6g}" if isinstance(value, float) else str(value)


class Trainer:
    def __init__(self, run_config: RunConfig, space: LabelSpace, train_sets: Mapping[str, DatasetIndex],
                 val_sets: Optional[Mapping[str, DatasetIndex]] = None,
                 groups: Optional[Mapping[str, ClassGroup]] = None, device: Optional[str] = None):
        self.config = run_config
        self.space = space
        self.device = device or settings.device
        self.output_dir = Path(run_config.output_dir)
        self.train_sets = {d: index for d, index in train_sets.items() if len(index)}
        if not self.train_sets:
            raise EmptyDataset("training datasets")
        self.val_sets = dict(val_sets or {})
        groups = dict(groups or {})
        self.groups = {d: groups.get(d) or space.dataset_groups[d] for d in self.train_sets}

        seed_everything(run_config.train.seed, settings.deterministic)
        self.model = LadderDenseNet(run_config.model).to(self.device)
        self.optimizer = configure_optimizer(self.model.parameter_groups(), run_config.train)
        self.iteration = 0
        self.history: List[Dict[str, float]] = []
        self.evaluations: Dict[str, EvaluationSummary] = {}

        self.sampler = ScheduleBatchSampler(
            {d: len(index) for d, index in self.train_sets.items()}, self.groups,
            run_config.sampler.ratio, run_config.train.batch_size, run_config.train.seed,
        )
        self.dataset = AugmentedDataset(self.train_sets, run_config.augment)

    @property
    def checkpoint_dir(self) -> Path:
        return self.output_dir / "checkpoints"

    def resume(self, checkpoint: Path) -> None:
        state = read_checkpoint(checkpoint, self.device)
        self.model.load_state_dict(state["model"])
        if state.get("optimizer") is not None:
            self.optimizer.load_state_dict(state["optimizer"])
        self.iteration = int(state["iteration"])
        logger.info("Resumed from %s at iteration %d", checkpoint, self.iteration)

    def save(self) -> Path:
        path = self.checkpoint_dir / f"iter_{self.iteration:07d}.pt"
        save_checkpoint(path, self.model, self.config, self.iteration, self.optimizer)
        return save_checkpoint(self.checkpoint_dir / "last.pt", self.model, self.config, self.iteration, self.optimizer)

    def _dump_state(self, batch: SegBatch) -> Path:
        path = self.output_dir / f"nonfinite_{self.iteration:07d}.pt"
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save({
            "iteration": self.iteration,
            "images": batch.images.cpu(),
            "labels": batch.labels.cpu(),
            "names": batch.names,
            "dataset_ids": batch.dataset_ids,
            "model": self.model.state_dict(),
        }, path)
        return path

    def step(self, batch: SegBatch) -> LossBreakdown:
        self.model.train()
        images = batch.images.to(self.device)
        labels = batch.labels.to(self.device)
        outputs = self.model(images)
        losses = total_loss(outputs, labels, self.config.train.pyramid_weight, self.space.ignore_id)
        if not torch.isfinite(losses.total):
            path = self._dump_state(batch)
            logger.error("Non-finite loss at iteration %d (%s)", self.iteration, losses.as_floats())
            raise NonFiniteLoss(self.iteration, path)
        self.optimizer.zero_grad(set_to_none=True)
        losses.total.backward()
        if self.config.train.grad_clip is not None:
            torch.nn.utils.clip_grad_norm_(self.model.parameters(), self.config.train.grad_clip)
        self.optimizer.step()
        return losses

    def _record(self, losses: LossBreakdown) -> None:
        values = losses.as_floats()
        lr = self.optimizer.param_groups[0]["lr"]
        row = {"iteration": self.iteration, "main": values["main"], "pyramid": values["pyramid"],
               "total": values["total"], "lr": lr}
        self.history.append(row)
        _append_tsv(self.output_dir / "history.tsv", HISTORY_COLUMNS, [_fmt(row[c]) for c in HISTORY_COLUMNS])
        if self.iteration % self.config.train.log_every == 0:
            logger.info("iter %d: main %.4f pyramid %.4f total %.4f lr %s", self.iteration, values["main"],
                        values["pyramid"], values["total"], [g["lr"] for g in self.optimizer.param_groups])
            logger.debug("iter %d pyramid levels: %s", self.iteration,
                         {k: v for k, v in values.items() if k.startswith("pyramid_")})

    def evaluate(self, write_reports: bool = False) -> Dict[str, EvaluationSummary]:
        summaries = {}
        for dataset_id, index in self.val_sets.items():
            if not len(index):
                continue
            summary = evaluate_model(self.model, self.space, index, self.config.eval,
                                     self.config.train.eval_scale, self.device)
            summaries[dataset_id] = summary
            _append_tsv(self.output_dir / "eval_history.tsv", EVAL_COLUMNS,
                        [str(self.iteration), dataset_id, _fmt(summary.miou), _fmt(summary.category_miou),
                         _fmt(summary.pixel_accuracy)])
            if write_reports:
                write_evaluation_report(summary, self.output_dir / "eval")
        self.model.train()
        self.evaluations = summaries
        return summaries

    def train(self) -> TrainResult:
        """Run until ``train.iterations``; each epoch's batches come from the (seed, epoch) schedule."""
        train_config = self.config.train
        self.output_dir.mkdir(parents=True, exist_ok=True)
        write_run_config(self.config, self.output_dir / "run.ini")
        checkpoint = self.checkpoint_dir / "last.pt"
        if self.iteration == 0:
            checkpoint = self.save()

        batches_per_epoch = self.sampler.schedule(0).num_batches
        if batches_per_epoch == 0 and self.iteration < train_config.iterations:
            raise EmptyDataset("training schedule (fewer samples than one batch)")

        while self.iteration < train_config.iterations:
            epoch, skip = divmod(self.iteration, batches_per_epoch)
            self.sampler.set_epoch(epoch, skip)
            loader = DataLoader(self.dataset, batch_sampler=self.sampler, collate_fn=collate_samples,
                                num_workers=settings.num_workers)
            for batch in loader:
                losses = self.step(batch)
                self.iteration += 1
                self._record(losses)
                if self.iteration % train_config.checkpoint_every == 0:
                    checkpoint = self.save()
                if self.iteration % train_config.eval_every == 0 and self.iteration < train_config.iterations:
                    self.evaluate()
                if self.iteration >= train_config.iterations:
                    break

        if self.iteration % train_config.checkpoint_every and self.iteration:
            checkpoint = self.save()
        if self.val_sets:
            self.evaluate(write_reports=True)
        logger.info("Training finished at iteration %d", self.iteration)
        return TrainResult(checkpoint=checkpoint, iteration=self.iteration,
                           history=list(self.history), evaluations=dict(self.evaluations))


def load_training_sets(run_config: RunConfig, space: LabelSpace):
    """(train sets, val sets, group overrides) from the ``[dataset.<id>]`` entries."""
    train_sets: Dict[str, DatasetIndex] = {}
    val_sets: Dict[str, DatasetIndex] = {}
    groups: Dict[str, ClassGroup] = {}
    for entry in run_config.datasets:
        train_sets[entry.dataset_id] = load_dataset(entry.root, entry.dataset_id, space)
        if entry.val_root is not None:
            val_sets[entry.dataset_id] = load_dataset(entry.val_root, entry.dataset_id, space)
        if entry.group is not None:
            groups[entry.dataset_id] = entry.group
    return train_sets, val_sets, groups


def train(run_config: RunConfig, space: Optional[LabelSpace] = None, resume: Optional[Path] = None,
          device: Optional[str] = None) -> TrainResult:
    space = space or label_service.build_default_space()
    train_sets, val_sets, groups = load_training_sets(run_config, space)
    trainer = Trainer(run_config, space, train_sets, val_sets, groups, device)
    if resume is not None:
        trainer.resume(resume)
    return trainer.train()


def _mean(values: List[Optional[float]]) -> Optional[float]:
    values = [v for v in values if v is not None and not math.isnan(v)]
    return float(np.mean(values)) if values else None


def run_pyramid_ablation(run_config: RunConfig, weights: Sequence[float] = (0.0, 0.4),
                         seeds: Sequence[int] = (0, 1, 2), space: Optional[LabelSpace] = None) -> List[AblationRow]:
    """One training run per (pyramid weight, seed); scores are averaged over the validation sets."""
    if not any(entry.val_root for entry in run_config.datasets):
        raise EmptyDataset("validation sets of the ablation")
    space = space or label_service.build_default_space()
    root = Path(run_config.output_dir)
    rows = []
    for weight in weights:
        for seed in seeds:
            train_config = run_config.train.model_copy(update={"pyramid_weight": float(weight), "seed": int(seed)})
            config = run_config.model_copy(update={"train": train_config,
                                                   "output_dir": root / f"pyramid_{weight:g}_seed_{seed}"})
            result = train(config, space)
            rows.append(AblationRow(
                pyramid_weight=float(weight),
                seed=int(seed),
                miou=_mean([s.miou for s in result.evaluations.values()]),
                category_miou=_mean([s.category_miou for s in result.evaluations.values()]),
                checkpoint=str(result.checkpoint),
            ))
            logger.info("Ablation weight %g seed %d: mIoU %s", weight, seed, rows[-1].miou)

    root.mkdir(parents=True, exist_ok=True)
    with open(root / "ablation.tsv", "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        writer.writerow(("pyramid_weight", "seed", "miou", "category_miou"))
        for row in rows:
            writer.writerow((f"{row.pyramid_weight:g}", row.seed, _fmt(row.miou), _fmt(row.category_miou)))
    return rows
