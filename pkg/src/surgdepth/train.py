"""Training / evaluation loops and the two ablation harnesses."""

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .checkpoint import save_model
from .data import augment
from .errors import NumericError
from .losses import cross_entropy_loss
from .metrics import ConfusionAccumulator
from .model import build_model, param_count
from .optim import AdamW
from .rng import make_rng

# Reference results reported on SAR-RARP50; displayed for context only,
# never asserted against toy-scale runs.
DECODER_DEPTH_REFERENCE = {1: 0.843, 2: 0.851, 4: 0.862, 8: 0.856}
DECODER_INPUT_REFERENCE = {"rgb_only": 0.862, "rgb_and_depth": 0.823}
REFERENCE_NOTE = "reported on SAR-RARP50 (not reproduced here)"


@dataclass
class TrainResult:
    loss_history: list = field(default_factory=list)   # (step, loss)
    val_history: list = field(default_factory=list)    # (epoch, miou)
    best_val_miou: float = 0.0
    steps: int = 0
    wall_seconds: float = 0.0


def evaluate(model, samples, baseline_rgb_only=False):
    acc = ConfusionAccumulator(model.cfg.num_classes)
    for s in samples:
        logits = model(s.rgb, s.depth, baseline_rgb_only=baseline_rgb_only)
        pred = logits.data.argmax(axis=0).astype(np.int32)
        acc.add(pred, s.label)
    return acc.report()


def train(model, train_samples, val_samples, cfg, *, max_steps=None,
          use_augment=True, baseline_rgb_only=False, metrics_path=None,
          ckpt_path=None, log=None):
    """Seeded minibatch training; returns a TrainResult.

    Best checkpoint (by validation mIoU) is written to ckpt_path when
    given; metrics stream to metrics_path as line-delimited JSON.
    """
    if not train_samples:
        raise ValueError("empty training set")
    rng = make_rng(cfg.seed)
    opt = AdamW(list(model.named_parameters()), lr=cfg.lr,
                weight_decay=cfg.weight_decay)
    result = TrainResult()
    t0 = time.monotonic()
    metrics_fh = open(metrics_path, "w") if metrics_path else None
    best_state = None
    try:
        step = 0
        done = False
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(train_samples))
            for start in range(0, len(order), cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                opt.zero_grad()
                losses = []
                for i in batch:
                    s = train_samples[i]
                    if use_augment:
                        s = augment(s, rng)
                    logits = model(s.rgb, s.depth, baseline_rgb_only=baseline_rgb_only)
                    losses.append(cross_entropy_loss(logits, s.label))
                loss = T.mul(losses[0], 1.0) if len(losses) == 1 else losses[0]
                for extra in losses[1:]:
                    loss = T.add(loss, extra)
                loss = T.mul(loss, 1.0 / len(losses))
                loss_val = loss.item()
                if not np.isfinite(loss_val):
                    raise NumericError(
                        f"NaN/Inf loss at step {step} (lr={cfg.lr}, "
                        f"grad_norm={opt.grad_norm():.3e})")
                T.backward(loss)
                opt.step()
                step += 1
                result.loss_history.append((step, loss_val))
                if metrics_fh:
                    metrics_fh.write(json.dumps({"step": step, "loss": loss_val}) + "\n")
                if log:
                    log(f"step {step} loss {loss_val:.4f}")
                if max_steps is not None and step >= max_steps:
                    done = True
                    break
            report = evaluate(model, val_samples if val_samples else train_samples,
                              baseline_rgb_only=baseline_rgb_only)
            result.val_history.append((epoch, report.mean_iou))
            if metrics_fh:
                metrics_fh.write(json.dumps(
                    {"epoch": epoch, "miou": report.mean_iou,
                     "per_class": [i for _, i in report.per_class_iou]}) + "\n")
            if log:
                log(f"epoch {epoch} val mIoU {report.mean_iou:.4f}")
            if report.mean_iou >= result.best_val_miou or best_state is None:
                result.best_val_miou = report.mean_iou
                best_state = model.state_dict()
            if done:
                break
        result.steps = step
        result.wall_seconds = time.monotonic() - t0
        if ckpt_path and best_state is not None:
            current = model.state_dict()
            model.load_state_dict(best_state)
            save_model(ckpt_path, model)
            model.load_state_dict(current)
        return result
    finally:
        if metrics_fh:
            metrics_fh.close()


def ablate_decoder_depth(cfg, train_samples, val_samples, blocks_list=(1, 2, 4, 8),
                         max_steps=None, use_augment=False, log=None):
    """One row per block count: (blocks, toy mIoU, params, reported reference)."""
    rows = []
    for blocks in blocks_list:
        sub = replace(cfg, decoder_blocks=blocks)
        model = build_model(sub)
        train(model, train_samples, val_samples, sub, max_steps=max_steps,
              use_augment=use_augment, log=log)
        report = evaluate(model, val_samples if val_samples else train_samples)
        rows.append({
            "blocks": blocks,
            "miou": report.mean_iou,
            "params": param_count(model),
            "reference_iou": DECODER_DEPTH_REFERENCE.get(blocks),
        })
    return rows


def ablate_decoder_input(cfg, train_samples, val_samples, max_steps=None,
                         use_augment=False, log=None):
    """Two rows: rgb_only vs rgb_and_depth decoder input."""
    rows = []
    for variant in ("rgb_only", "rgb_and_depth"):
        sub = replace(cfg, decoder_input=variant)
        model = build_model(sub)
        train(model, train_samples, val_samples, sub, max_steps=max_steps,
              use_augment=use_augment, log=log)
        report = evaluate(model, val_samples if val_samples else train_samples)
        rows.append({
            "decoder_input": variant,
            "miou": report.mean_iou,
            "params": param_count(model),
            "reference_iou": DECODER_INPUT_REFERENCE[variant],
        })
    return rows
