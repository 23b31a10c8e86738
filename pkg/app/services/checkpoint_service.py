"""Versioned training checkpoints: config echo, model and optimizer state, iteration."""
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import torch

from app.exceptions import CheckpointVersionError
from app.models.ladder_model import LadderDenseNet
from app.schemas.config_schemas import RunConfig

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


def save_checkpoint(path: Path, model: LadderDenseNet, run_config: RunConfig, iteration: int,
                    optimizer: Optional[torch.optim.Optimizer] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = {
        "version": CHECKPOINT_VERSION,
        "config": run_config.model_dump(mode="json"),
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "iteration": iteration,
        "encoder_pretrained": model.encoder_pretrained,
    }
    tmp = path.with_name(path.name + ".part")
    torch.save(state, tmp)
    os.replace(tmp, path)
    logger.info("Checkpoint at iteration %d written to %s", iteration, path)
    return path


def read_checkpoint(path: Path, device: str = "cpu") -> Dict[str, Any]:
    path = Path(path)
    state = torch.load(path, map_location=device)
    version = state.get("version") if isinstance(state, dict) else None
    if version != CHECKPOINT_VERSION:
        logger.error("Checkpoint %s has version %r", path, version)
        raise CheckpointVersionError(path, version)
    return state


def load_model(path: Path, device: str = "cpu") -> Tuple[LadderDenseNet, RunConfig, int]:
    """Rebuild the network from the config echoed in the checkpoint; returns it in eval mode."""
    state = read_checkpoint(path, device)
    run_config = RunConfig.model_validate(state["config"])
    # encoder weights are already part of the saved state
    model_config = run_config.model.model_copy(update={"encoder_weights": None})
    model = LadderDenseNet(model_config)
    model.load_state_dict(state["model"])
    model.encoder_pretrained = bool(state.get("encoder_pretrained", False))
    model.to(device).eval()
    return model, run_config, int(state["iteration"])
