"""Synthetic multi-domain benchmark generator.

Each domain's class token-statistics are an orthogonal transform of a
set of base class means (geometry knob 1 shares the base means exactly,
preserving all pairwise cosines; knob 0 draws independent means per
domain), plus a per-domain offset and Gaussian patch noise. Anchors with
the same Gram matrix as the base means are emitted alongside, so the
reference geometry genuinely describes the data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .anchors import TextAnchorSet, anchors_from_gram
from .autodiff import ContractViolation


class GenerationError(ValueError):
    pass


@dataclass
class Sample:
    tokens: np.ndarray  # (patch_count, token_dim)
    label: int


@dataclass
class DomainDataset:
    domain: int
    train: list[Sample]
    test: list[Sample]
    n_classes: int
    token_dim: int
    class_means: np.ndarray | None = None  # (n_classes, token_dim), pre-offset


@dataclass
class BenchmarkConfig:
    n_domains: int = 4
    n_classes: int = 8
    train_per_class: int = 8
    test_per_class: int = 8
    patch_count: int = 16
    token_dim: int = 64
    rotation_angle: float = 0.3
    translation_scale: float = 0.5
    noise_sigma: float = 0.3
    geometry_knob: float = 1.0
    complementary_cues: bool = False
    mean_cue_scale: float = 1.2
    var_cue_scale: float = 3.0
    var_cue_dims: int = 4
    intra_sim: float = 0.6
    inter_sim: float = 0.1
    n_groups: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_domains < 1:
            raise GenerationError("need at least 1 domain")
        if self.n_classes < 2:
            raise GenerationError("need at least 2 classes")
        if self.noise_sigma < 0:
            raise GenerationError("noise sigma must be >= 0")
        if not 0.0 <= self.geometry_knob <= 1.0:
            raise GenerationError("geometry knob must be in [0,1]")
        if self.token_dim < self.n_classes:
            raise GenerationError(
                f"token_dim {self.token_dim} < n_classes {self.n_classes}: "
                "cannot realize the class-mean geometry"
            )


def _unit_rows(m: np.ndarray) -> np.ndarray:
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def _base_means(cfg: BenchmarkConfig, rng: np.random.Generator) -> np.ndarray:
    """Unit class means realizing the configured group Gram structure."""
    group = np.array([c * cfg.n_groups // cfg.n_classes
                      for c in range(cfg.n_classes)])
    gram = np.where(group[:, None] == group[None, :], cfg.intra_sim, cfg.inter_sim)
    np.fill_diagonal(gram, 1.0)
    if np.linalg.eigvalsh(gram).min() < -1e-9:
        raise GenerationError("group similarity targets give a non-PSD Gram")
    anchors = anchors_from_gram(gram, cfg.token_dim,
                                [f"class_{c}" for c in range(cfg.n_classes)], rng)
    return np.asarray(anchors.matrix)


def _rotation(dim: int, angle: float, rng: np.random.Generator) -> np.ndarray:
    s = rng.standard_normal((dim, dim))
    skew = (s - s.T) / 2.0
    skew /= max(np.linalg.norm(skew, 2), 1e-12)
    return expm(angle * skew)


def generate_benchmark(cfg: BenchmarkConfig) -> tuple[list[DomainDataset],
                                                      TextAnchorSet]:
    """Deterministic multi-domain benchmark plus matched reference anchors."""
    rng = np.random.default_rng(cfg.seed)
    base = _base_means(cfg, rng)
    gram = base @ base.T
    text = anchors_from_gram(gram, cfg.token_dim,
                             [f"class_{c}" for c in range(cfg.n_classes)],
                             np.random.default_rng(cfg.seed + 1))
    datasets = []
    for t in range(1, cfg.n_domains + 1):
        drng = np.random.default_rng([cfg.seed, 7919, t])
        if cfg.geometry_knob >= 1.0:
            means0 = base
        else:
            indep = _unit_rows(drng.standard_normal((cfg.n_classes, cfg.token_dim)))
            means0 = _unit_rows(cfg.geometry_knob * base
                                + (1.0 - cfg.geometry_knob) * indep)
        rot = _rotation(cfg.token_dim, cfg.rotation_angle * (t - 1), drng)
        means = means0 @ rot.T
        offset = (cfg.translation_scale * (t - 1) / max(cfg.n_domains - 1, 1)
                  * _unit_rows(drng.standard_normal((1, cfg.token_dim)))[0])
        cue = _domain_cue(cfg, t) if cfg.complementary_cues else None
        train = _draw_split(cfg, cfg.train_per_class, means, offset, cue, drng)
        test = _draw_split(cfg, cfg.test_per_class, means, offset, cue, drng)
        datasets.append(DomainDataset(domain=t, train=train, test=test,
                                      n_classes=cfg.n_classes,
                                      token_dim=cfg.token_dim,
                                      class_means=means))
    return datasets, text


def _domain_cue(cfg: BenchmarkConfig, t: int):
    """Complementary domain cues surfacing at different backbone depths.

    Odd/even domains within a pair share the cue direction and differ only
    by it: the first pair by a constant mean shift with opposite signs
    (crisp in shallow class-token states), the second pair by the variance
    of zero-mean patch noise in a shared random subspace, which only
    surfaces after nonlinear mixing in deeper layers.
    """
    pair = (t + 1) // 2
    prng = np.random.default_rng([cfg.seed, 104729, pair])
    u = _unit_rows(prng.standard_normal((1, cfg.token_dim)))[0]
    sub = _unit_rows(prng.standard_normal((cfg.var_cue_dims, cfg.token_dim)))
    kind = "mean" if t <= 2 else "variance"
    sign = 1.0 if t % 2 == 1 else -1.0
    return {"kind": kind, "u": u, "sub": sub, "sign": sign, "domain": t,
            "mean_scale": cfg.mean_cue_scale, "var_scale": cfg.var_cue_scale}


def _draw_split(cfg: BenchmarkConfig, per_class: int, means: np.ndarray,
                offset: np.ndarray, cue,
                rng: np.random.Generator) -> list[Sample]:
    samples = []
    for c in range(cfg.n_classes):
        for _ in range(per_class):
            noise = cfg.noise_sigma * rng.standard_normal(
                (cfg.patch_count, cfg.token_dim))
            tokens = means[c][None, :] + offset[None, :] + noise
            if cue is not None:
                tokens = _apply_cue(tokens, cue, rng)
            samples.append(Sample(tokens=tokens, label=c))
    return samples


def _apply_cue(tokens: np.ndarray, cue, rng: np.random.Generator) -> np.ndarray:
    if cue["kind"] == "mean":
        return tokens + cue["mean_scale"] * cue["sign"] * cue["u"][None, :]
    scale = cue["var_scale"] if cue["sign"] > 0 else 0.0
    z = rng.standard_normal((tokens.shape[0], cue["sub"].shape[0]))
    return tokens + scale * (z @ cue["sub"])


def permute_domain_order(datasets: list[DomainDataset],
                         order: list[int]) -> list[DomainDataset]:
    """Reorder the training stream; the datasets themselves are untouched."""
    names = sorted(d.domain for d in datasets)
    if sorted(order) != names:
        raise ContractViolation(f"{order} is not a permutation of {names}")
    by_id = {d.domain: d for d in datasets}
    return [by_id[i] for i in order]


def save_feature_dataset(path, dataset: DomainDataset) -> None:
    """Write the single-token feature JSONL format."""
    samples = dataset.train + dataset.test
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"dim": dataset.token_dim, "count": len(samples),
                             "domain": dataset.domain}) + "\n")
        for s in samples:
            feat = s.tokens.mean(axis=0) if s.tokens.shape[0] > 1 else s.tokens[0]
            fh.write(json.dumps({"label": int(s.label),
                                 "feature": list(feat)}) + "\n")


def load_feature_dataset(path, n_classes: int | None = None,
                         test_fraction: float = 0.5) -> DomainDataset:
    """Load feature JSONL as single-token samples (no patch stem applied)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ContractViolation("empty feature file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise GenerationError(f"line 1: {e}") from e
    for key in ("dim", "count"):
        if key not in header:
            raise GenerationError(f"header missing '{key}'")
    dim, count = int(header["dim"]), int(header["count"])
    domain = int(header.get("domain", 1))
    if len(lines) - 1 != count:
        raise GenerationError(f"header count {count} but {len(lines) - 1} lines")
    samples = []
    max_label = -1
    for i, ln in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError as e:
            raise GenerationError(f"line {i}: {e}") from e
        feat = np.asarray(rec["feature"], dtype=np.float64)
        if feat.shape != (dim,):
            raise GenerationError(
                f"line {i}: feature length {feat.size} != header dim {dim}")
        label = int(rec["label"])
        if label < 0 or (n_classes is not None and label >= n_classes):
            raise GenerationError(f"line {i}: label {label} out of range")
        max_label = max(max_label, label)
        samples.append(Sample(tokens=feat[None, :], label=label))
    split = max(1, int(round(len(samples) * (1.0 - test_fraction))))
    return DomainDataset(domain=domain, train=samples[:split],
                         test=samples[split:],
                         n_classes=n_classes or (max_label + 1),
                         token_dim=dim)
