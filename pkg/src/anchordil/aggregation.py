"""Cross-domain feature aggregation via attention over class-level anchors.

Keys are the row-concatenation of all visual anchor sets seen so far,
values the concatenation of the prototype anchor sets (or the keys
themselves in share mode). Attention weights are a temperature softmax
over the query's relative encoding against the keys; the fused feature
adds a residual. Only the current domain's block receives gradients;
earlier blocks enter as constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alignment import LossConfig, VisualAnchorSet, structural_loss
from .anchors import TextAnchorSet
from .autodiff import ContractViolation, Tape, Var


@dataclass
class PrototypeAnchorSet:
    """Learnable per-class semantic centers for one domain."""

    values: np.ndarray
    domain: int
    frozen: bool = False

    @staticmethod
    def init(n_classes: int, dim: int, domain: int,
             rng: np.random.Generator) -> "PrototypeAnchorSet":
        vals = rng.standard_normal((n_classes, dim)) / np.sqrt(dim)
        return PrototypeAnchorSet(values=vals, domain=domain)


@dataclass
class DomainClassifier:
    """Single linear layer (weights + bias) mapping features to class logits."""

    weight: np.ndarray  # (n_classes, dim)
    bias: np.ndarray  # (n_classes,)
    domain: int
    frozen: bool = False

    @staticmethod
    def init(n_classes: int, dim: int, domain: int,
             rng: np.random.Generator) -> "DomainClassifier":
        w = rng.standard_normal((n_classes, dim)) / np.sqrt(dim)
        return DomainClassifier(weight=w, bias=np.zeros(n_classes), domain=domain)


@dataclass
class DomainModelState:
    """The learnable bundle for one domain."""

    prompt: np.ndarray
    visual_anchors: VisualAnchorSet
    prototypes: PrototypeAnchorSet | None
    classifier: DomainClassifier
    domain: int
    seed: int
    frozen: bool = False

    def trainable_parameter_count(self) -> int:
        n = self.prompt.size + self.visual_anchors.values.size
        n += self.classifier.weight.size + self.classifier.bias.size
        if self.prototypes is not None:
            n += self.prototypes.values.size
        return n


@dataclass
class ModelState:
    """Everything learned so far: one DomainModelState per seen domain."""

    text_anchors: TextAnchorSet
    share_mode: bool = False
    domains: list[DomainModelState] = field(default_factory=list)

    def state_for(self, t: int) -> DomainModelState:
        for d in self.domains:
            if d.domain == t:
                return d
        raise ContractViolation(f"no state for domain {t}")

    def trainable_parameter_count(self) -> int:
        return sum(d.trainable_parameter_count() for d in self.domains)


def global_attention(tape: Tape, g: Var, keys: Var, tau: float) -> Var:
    """Softmax over the query's cosine similarities to every key row."""
    if keys.value.shape[0] == 0:
        raise ContractViolation("empty key set")
    rel = tape.cosine_rows(g, keys)
    return tape.softmax_rows(rel, tau)


def aggregate(tape: Tape, alpha: Var, values: Var, g: Var) -> Var:
    """Attention-weighted sum of value rows plus a residual."""
    if alpha.value.shape[0] != values.value.shape[0]:
        raise ContractViolation(
            f"alpha length {alpha.value.shape[0]} vs {values.value.shape[0]} rows"
        )
    return tape.add(tape.matmul(alpha, values), g)


def cross_entropy(tape: Tape, logits: Var, label: int) -> Var:
    """-log softmax(logits)[label]."""
    n = logits.value.shape[0]
    if not 0 <= label < n:
        raise ContractViolation(f"label {label} out of range [0,{n})")
    onehot = np.zeros(n)
    onehot[label] = 1.0
    logp = tape.log(tape.softmax_rows(logits, 1.0))
    return tape.scale(tape.sum(tape.scale(logp, onehot)), -1.0)


def combined_loss(tape: Tape, logits: Var, label: int, l_struct: Var,
                  lam: float) -> Var:
    if lam < 0:
        raise ContractViolation(f"lambda must be >= 0, got {lam}")
    ce = cross_entropy(tape, logits, label)
    if lam == 0.0:
        return ce
    return tape.add(ce, tape.scale(l_struct, lam))


@dataclass
class ForwardResult:
    logits: Var
    loss: Var
    ce: Var
    l_struct: Var


def forward_train(tape: Tape, g: Var, t: int, state: ModelState,
                  cfg: LossConfig, label: int,
                  leaves: dict[str, Var],
                  use_aggregation: bool = True) -> ForwardResult:
    """Compose the full per-sample objective for the current domain.

    `leaves` must carry the tape leaves for the domain-t parameters
    ("visual_anchors", "prototypes", "classifier_w", "classifier_b");
    prior domains enter as constants and never accumulate gradients.
    """
    cur = state.state_for(t)
    for tau_idx in range(1, t):
        if not state.state_for(tau_idx).frozen:
            raise ContractViolation(f"domain {tau_idx} must be frozen before {t}")

    anchors_var = leaves["visual_anchors"]
    r_g = tape.cosine_rows(g, anchors_var)
    r_y = state.text_anchors.gram()[label]
    l_struct = structural_loss(tape, r_g, r_y, cfg)

    if use_aggregation:
        key_parts: list[Var] = []
        val_parts: list[Var] = []
        for d in state.domains:
            if d.domain > t:
                continue
            if d.domain == t:
                key_parts.append(anchors_var)
                val_parts.append(anchors_var if state.share_mode
                                 else leaves["prototypes"])
            else:
                frozen_keys = tape.const(d.visual_anchors.values)
                key_parts.append(frozen_keys)
                val_parts.append(frozen_keys if state.share_mode
                                 else tape.const(d.prototypes.values))
        keys = key_parts[0] if len(key_parts) == 1 else tape.concat(key_parts, 0)
        vals = val_parts[0] if len(val_parts) == 1 else tape.concat(val_parts, 0)
        alpha = global_attention(tape, g, keys, cfg.tau)
        f = aggregate(tape, alpha, vals, g)
    else:
        f = g

    w = leaves["classifier_w"]
    b = leaves["classifier_b"]
    logits = tape.add(tape.matmul(w, f), b)
    ce = cross_entropy(tape, logits, label)
    loss = tape.add(ce, tape.scale(l_struct, cfg.lam)) if cfg.lam > 0 else ce
    return ForwardResult(logits=logits, loss=loss, ce=ce, l_struct=l_struct)


def forward_infer(backbone, x_emb: np.ndarray, s: int, state: ModelState,
                  tau: float, use_aggregation: bool = True) -> np.ndarray:
    """Inference logits for a sample routed to domain s (components up to s)."""
    cur = state.state_for(s)
    tape = Tape()
    seq = backbone.build_prompted_sequence(tape, x_emb, cur.prompt)
    g = backbone.encode(tape, seq)
    if use_aggregation:
        blocks = [d for d in state.domains if d.domain <= s]
        keys = tape.const(np.concatenate(
            [d.visual_anchors.values for d in blocks], axis=0))
        if state.share_mode:
            vals = keys
        else:
            vals = tape.const(np.concatenate(
                [d.prototypes.values for d in blocks], axis=0))
        alpha = global_attention(tape, g, keys, tau)
        f = aggregate(tape, alpha, vals, g)
    else:
        f = g
    logits = tape.add(tape.matmul(tape.const(cur.classifier.weight), f),
                      tape.const(cur.classifier.bias))
    return logits.value.copy()
