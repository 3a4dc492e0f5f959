"""A small frozen pre-norm transformer encoder with prompt insertion.

Sequences are ordered [class token, prompt tokens, patch tokens]; the
patch tokens receive sinusoidal positional encodings, prompts and the
class token are position-free. All backbone weights are plain numpy
arrays initialized deterministically from the config seed and never
touched by any optimizer: gradients flow only into the prompt tokens
(and whatever the loss closes over), via the tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ConfigurationError, ContractViolation, NumericFailure, Tape, Var


@dataclass
class BackboneConfig:
    depth: int = 6
    hidden_dim: int = 64
    heads: int = 4
    mlp_ratio: int = 4
    patch_count: int = 16
    token_dim: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim % self.heads != 0:
            raise ConfigurationError("hidden_dim must be divisible by heads")
        if self.depth < 2:
            raise ConfigurationError("depth must be >= 2 (layer search needs taps)")


@dataclass
class PromptTokens:
    """Per-domain learnable tokens, (n_prompt x hidden_dim)."""

    values: np.ndarray
    domain: int
    frozen: bool = False


def sinusoidal_positions(n: int, dim: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    enc = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return enc


class Backbone:
    """Frozen encoder f over prompt-extended token sequences."""

    def __init__(self, cfg: BackboneConfig):
        self.cfg = cfg
        d, dh = cfg.hidden_dim, cfg.hidden_dim // cfg.heads
        rng = np.random.default_rng(cfg.seed)
        sd = 1.0 / np.sqrt(d)
        self.w_embed = rng.standard_normal((cfg.token_dim, d)) / np.sqrt(cfg.token_dim)
        self.cls_token = rng.standard_normal(d) * sd
        self.pos = sinusoidal_positions(cfg.patch_count, d)
        self.blocks = []
        for _ in range(cfg.depth):
            blk = {
                "wq": [rng.standard_normal((d, dh)) * sd for _ in range(cfg.heads)],
                "wk": [rng.standard_normal((d, dh)) * sd for _ in range(cfg.heads)],
                "wv": [rng.standard_normal((d, dh)) * sd for _ in range(cfg.heads)],
                "wo": rng.standard_normal((d, d)) * sd,
                "w1": rng.standard_normal((d, d * cfg.mlp_ratio)) * sd,
                "b1": np.zeros(d * cfg.mlp_ratio),
                "w2": rng.standard_normal((d * cfg.mlp_ratio, d))
                / np.sqrt(d * cfg.mlp_ratio),
                "b2": np.zeros(d),
            }
            self.blocks.append(blk)

    # -- weight bytes, for the frozen-backbone invariance check -------------

    def weight_bytes(self) -> bytes:
        chunks = [self.w_embed.tobytes(), self.cls_token.tobytes()]
        for blk in self.blocks:
            for h in range(self.cfg.heads):
                chunks += [blk["wq"][h].tobytes(), blk["wk"][h].tobytes(),
                           blk["wv"][h].tobytes()]
            chunks += [blk["wo"].tobytes(), blk["w1"].tobytes(),
                       blk["b1"].tobytes(), blk["w2"].tobytes(),
                       blk["b2"].tobytes()]
        return b"".join(chunks)

    # -- forward -------------------------------------------------------------

    def embed_patches(self, x_emb: np.ndarray) -> np.ndarray:
        """Project raw patch tokens into the hidden space and add positions."""
        x_emb = np.asarray(x_emb, dtype=np.float64)
        if x_emb.ndim != 2 or x_emb.shape[1] != self.cfg.token_dim:
            raise ContractViolation(
                f"patch tokens must be (n, {self.cfg.token_dim}), got {x_emb.shape}"
            )
        h = x_emb @ self.w_embed
        return h + self.pos[: h.shape[0]]

    def build_prompted_sequence(self, tape: Tape, x_emb: np.ndarray,
                                prompt: Var | np.ndarray | None) -> Var:
        """[cls, prompt, patches] as a tape node; prompt may be trainable."""
        patches = tape.const(self.embed_patches(x_emb))
        cls = tape.const(self.cls_token[None, :])
        parts = [cls]
        if prompt is not None:
            pv = prompt if isinstance(prompt, Var) else tape.const(prompt)
            if pv.value.ndim != 2 or pv.value.shape[1] != self.cfg.hidden_dim:
                raise ContractViolation(
                    f"prompt must be (n_p, {self.cfg.hidden_dim})"
                )
            if pv.value.shape[0] > 0:
                parts.append(pv)
        parts.append(patches)
        return tape.concat(parts, axis=0)

    def _block(self, tape: Tape, x: Var, blk: dict) -> Var:
        d = self.cfg.hidden_dim
        dh = d // self.cfg.heads
        h = tape.layer_norm(x)
        outs = []
        for i in range(self.cfg.heads):
            q = tape.matmul(h, tape.const(blk["wq"][i]))
            k = tape.matmul(h, tape.const(blk["wk"][i]))
            v = tape.matmul(h, tape.const(blk["wv"][i]))
            scores = tape.scale(tape.matmul(q, _transpose(tape, k)),
                                1.0 / np.sqrt(dh))
            attn = tape.softmax_rows(scores, 1.0)
            outs.append(tape.matmul(attn, v))
        o = tape.concat(outs, axis=1)
        o = tape.matmul(o, tape.const(blk["wo"]))
        x = tape.add(x, o)
        h2 = tape.layer_norm(x)
        m = tape.add(tape.matmul(h2, tape.const(blk["w1"])), tape.const(blk["b1"]))
        m = tape.gelu(m)
        m = tape.add(tape.matmul(m, tape.const(blk["w2"])), tape.const(blk["b2"]))
        return tape.add(x, m)

    def encode_with_taps(self, tape: Tape, x_p: Var, layers) -> list[Var]:
        """Class-token state after each requested layer, ascending order."""
        layers = sorted(set(int(l) for l in layers))
        if not layers:
            raise ConfigurationError("empty layer set")
        if layers[0] < 1 or layers[-1] > self.cfg.depth:
            raise ConfigurationError(
                f"layer indices {layers} outside [1,{self.cfg.depth}]"
            )
        taps = []
        x = x_p
        for li, blk in enumerate(self.blocks, start=1):
            x = self._block(tape, x, blk)
            if not np.all(np.isfinite(x.value)):
                raise NumericFailure(f"non-finite activation at layer {li}")
            if li in layers:
                taps.append(tape.take_row(x, 0))
        return taps

    def encode(self, tape: Tape, x_p: Var) -> Var:
        """Final-layer class-token feature g."""
        return self.encode_with_taps(tape, x_p, [self.cfg.depth])[-1]

    def encode_array(self, x_emb: np.ndarray,
                     prompt: np.ndarray | None = None) -> np.ndarray:
        """Plain-array convenience forward (no gradients kept)."""
        tape = Tape()
        seq = self.build_prompted_sequence(tape, x_emb, prompt)
        return self.encode(tape, seq).value.copy()

    def taps_array(self, x_emb: np.ndarray, layers,
                   prompt: np.ndarray | None = None) -> list[np.ndarray]:
        tape = Tape()
        seq = self.build_prompted_sequence(tape, x_emb, prompt)
        return [t.value.copy() for t in self.encode_with_taps(tape, seq, layers)]


def _transpose(tape: Tape, a: Var) -> Var:
    val = a.value.T

    def back(g):
        a._accumulate(g.T)

    return tape._push(Var(val, backward=back))


def patch_shuffle(x_emb: np.ndarray, seed: int) -> np.ndarray:
    """Seeded row permutation of the raw patch tokens."""
    x_emb = np.asarray(x_emb)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(x_emb.shape[0])
    return x_emb[perm].copy()
