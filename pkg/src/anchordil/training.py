"""Per-domain optimization: AdamW with decoupled decay and cosine decay.

Each domain's bundle (prompt, visual anchors, prototype anchors,
classifier) is freshly initialized from a seed derived by hashing
(global seed, domain index), optimized only on that domain's training
split, and frozen afterwards. Training is single-threaded and fully
deterministic.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from .aggregation import (DomainClassifier, DomainModelState, ModelState,
                          PrototypeAnchorSet, forward_train)
from .alignment import LossConfig, VisualAnchorSet
from .autodiff import ConfigurationError, ContractViolation, NumericFailure, Tape
from .backbone import Backbone
from .datagen import DomainDataset


@dataclass
class OptimizerConfig:
    lr0: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    epochs: int = 20
    batch_size: int = 32
    n_prompt: int = 16

    def __post_init__(self):
        for name in ("lr0", "beta1", "beta2"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be >= 0")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")


def derive_seed(global_seed: int, t: int) -> int:
    """Stable per-domain seed: sha256 of "global_seed:t"."""
    digest = hashlib.sha256(f"{global_seed}:{t}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    if not 0 <= step <= total_steps:
        raise ContractViolation(f"step {step} outside [0,{total_steps}]")
    return lr0 * 0.5 * (1.0 + np.cos(np.pi * step / total_steps))


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               opt_state: dict, step: int, lr: float,
               cfg: OptimizerConfig) -> None:
    """In-place bias-corrected moment update with decoupled weight decay."""
    b1, b2, eps = cfg.beta1, cfg.beta2, 1e-8
    for name, p in params.items():
        g = grads[name]
        if g is None:
            # Parameter did not participate in this loss configuration
            # (e.g. anchors when the structural term and aggregation are off).
            continue
        if g.shape != p.shape:
            raise ContractViolation(f"gradient shape mismatch for {name}")
        st = opt_state.setdefault(name, {"m": np.zeros_like(p),
                                         "v": np.zeros_like(p)})
        st["m"] = b1 * st["m"] + (1 - b1) * g
        st["v"] = b2 * st["v"] + (1 - b2) * g * g
        m_hat = st["m"] / (1 - b1**step)
        v_hat = st["v"] / (1 - b2**step)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p -= lr * cfg.weight_decay * p


def init_domain_state(t: int, n_classes: int, backbone: Backbone,
                      global_seed: int, opt_cfg: OptimizerConfig,
                      share_mode: bool) -> DomainModelState:
    seed = derive_seed(global_seed, t)
    rng = np.random.default_rng(seed)
    d = backbone.cfg.hidden_dim
    prompt = rng.standard_normal((opt_cfg.n_prompt, d)) / np.sqrt(d)
    anchors = VisualAnchorSet.init(n_classes, d, t, rng)
    protos = None if share_mode else PrototypeAnchorSet.init(n_classes, d, t, rng)
    clf = DomainClassifier.init(n_classes, d, t, rng)
    return DomainModelState(prompt=prompt, visual_anchors=anchors,
                            prototypes=protos, classifier=clf,
                            domain=t, seed=seed)


@dataclass
class EpochLog:
    epoch: int
    ce: float
    l_struct: float
    train_accuracy: float


def train_domain(t: int, data: DomainDataset, state: ModelState,
                 backbone: Backbone, opt_cfg: OptimizerConfig,
                 loss_cfg: LossConfig, global_seed: int,
                 use_aggregation: bool = True) -> list[EpochLog]:
    """Optimize domain-t parameters on this domain's training split only."""
    if not data.train:
        raise ContractViolation(f"empty training set for domain {t}")
    cur = state.state_for(t)
    if cur.frozen:
        raise ContractViolation(f"domain {t} is already frozen")

    params = {
        "prompt": cur.prompt,
        "visual_anchors": cur.visual_anchors.values,
        "classifier_w": cur.classifier.weight,
        "classifier_b": cur.classifier.bias,
    }
    if cur.prototypes is not None:
        params["prototypes"] = cur.prototypes.values

    opt_state: dict = {}
    step = 0
    n = len(data.train)
    batches_per_epoch = (n + opt_cfg.batch_size - 1) // opt_cfg.batch_size
    total_steps = opt_cfg.epochs * batches_per_epoch
    shuffle_rng = np.random.default_rng([derive_seed(global_seed, t), 104729])
    logs = []

    for epoch in range(opt_cfg.epochs):
        order = shuffle_rng.permutation(n)
        ce_sum = struct_sum = 0.0
        correct = 0
        for b0 in range(0, n, opt_cfg.batch_size):
            batch = [data.train[i] for i in order[b0:b0 + opt_cfg.batch_size]]
            tape = Tape()
            leaves = {name: tape.leaf(p) for name, p in params.items()}
            losses = []
            for sample in batch:
                seq = backbone.build_prompted_sequence(
                    tape, sample.tokens, leaves["prompt"])
                g = backbone.encode(tape, seq)
                res = forward_train(tape, g, t, state, loss_cfg, sample.label,
                                    leaves, use_aggregation=use_aggregation)
                losses.append(res)
                ce_sum += float(res.ce.value)
                struct_sum += float(res.l_struct.value)
                correct += int(np.argmax(res.logits.value) == sample.label)
            total = losses[0].loss
            for r in losses[1:]:
                total = tape.add(total, r.loss)
            total = tape.scale(total, 1.0 / len(batch))
            if not np.isfinite(float(total.value)):
                raise NumericFailure(
                    f"non-finite loss at domain {t}, epoch {epoch}, step {step}")
            tape.backward(total)
            grads = {name: leaves[name].grad for name in params}
            lr = cosine_lr(step, total_steps, opt_cfg.lr0)
            step += 1
            adamw_step(params, grads, opt_state, step, lr, opt_cfg)
        logs.append(EpochLog(epoch=epoch, ce=ce_sum / n,
                             l_struct=struct_sum / n,
                             train_accuracy=correct / n))
    return logs


def freeze_domain(t: int, state: ModelState) -> None:
    """Mark domain t immutable; idempotent with a warning on repeats."""
    cur = state.state_for(t)
    if cur.frozen:
        warnings.warn(f"domain {t} already frozen", UserWarning)
        return
    cur.frozen = True
    cur.visual_anchors.frozen = True
    cur.classifier.frozen = True
    if cur.prototypes is not None:
        cur.prototypes.frozen = True
    cur.prompt.setflags(write=False)
    cur.visual_anchors.values.setflags(write=False)
    cur.classifier.weight.setflags(write=False)
    cur.classifier.bias.setflags(write=False)
    if cur.prototypes is not None:
        cur.prototypes.values.setflags(write=False)
