"""Inference-time domain identification.

Multi-level features are per-layer class-token states of the unprompted
backbone pass, concatenated in ascending layer order; a domain's
prototype is their label-agnostic mean over its training samples. A test
sample is routed to the prototype with the highest cosine similarity,
ties broken toward the lowest domain index. K-means and patch-shuffle
baselines build alternative prototype banks consumed by the same
matcher, and an accuracy-guided greedy search picks the layer set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .autodiff import ConfigurationError, ContractViolation
from .backbone import Backbone, patch_shuffle
from .datagen import DomainDataset
from .metrics import StateError


class ClusteringError(ValueError):
    pass


@dataclass
class DomainPrototype:
    domain: int
    vectors: np.ndarray  # (k, feat_dim); k == 1 except for the k-means bank
    n_samples: int


@dataclass
class PrototypeBank:
    strategy: str
    layers: list[int]
    prototypes: list[DomainPrototype]

    def domains(self) -> list[int]:
        return sorted(p.domain for p in self.prototypes)


def multi_level_feature(backbone: Backbone, tokens: np.ndarray,
                        layers) -> np.ndarray:
    """Concatenated class-token states over the layer set, unprompted."""
    layers = sorted(set(int(l) for l in layers))
    if not layers:
        raise ConfigurationError("empty layer set")
    taps = backbone.taps_array(tokens, layers, prompt=None)
    return np.concatenate(taps)


def build_prototype(t: int, samples, backbone: Backbone,
                    layers) -> DomainPrototype:
    """Label-agnostic mean of multi-level features over a training set."""
    if not samples:
        raise ContractViolation(f"empty sample set for domain {t}")
    feats = [multi_level_feature(backbone, s.tokens, layers) for s in samples]
    mu = np.mean(feats, axis=0)
    return DomainPrototype(domain=t, vectors=mu[None, :], n_samples=len(feats))


def identify(feature: np.ndarray, bank: PrototypeBank) -> int:
    """Route to the domain whose best prototype has the highest cosine."""
    if not bank.prototypes:
        raise StateError("empty prototype bank")
    best_domain = None
    best_score = -np.inf
    for proto in sorted(bank.prototypes, key=lambda p: p.domain):
        norms = np.maximum(np.linalg.norm(proto.vectors, axis=1), 1e-12)
        fnorm = max(np.linalg.norm(feature), 1e-12)
        score = float(np.max((proto.vectors @ feature) / (norms * fnorm)))
        if score > best_score:
            best_score = score
            best_domain = proto.domain
    return best_domain


def identify_sample(backbone: Backbone, tokens: np.ndarray,
                    bank: PrototypeBank) -> int:
    return identify(multi_level_feature(backbone, tokens, bank.layers), bank)


# -- comparison strategies ---------------------------------------------------


def nmc_bank(datasets: list[DomainDataset], backbone: Backbone) -> PrototypeBank:
    """Single mean of final-layer features per domain."""
    layers = [backbone.cfg.depth]
    protos = [build_prototype(d.domain, d.train, backbone, layers)
              for d in datasets]
    return PrototypeBank(strategy="NMC", layers=layers, prototypes=protos)


def mlfi_bank(datasets: list[DomainDataset], backbone: Backbone,
              layers) -> PrototypeBank:
    protos = [build_prototype(d.domain, d.train, backbone, layers)
              for d in datasets]
    return PrototypeBank(strategy="MLFI", layers=sorted(set(layers)),
                         prototypes=protos)


def _kmeans(feats: np.ndarray, k: int, rng: np.random.Generator,
            iters: int = 50) -> np.ndarray:
    n = feats.shape[0]
    if k > n:
        raise ClusteringError(f"k={k} exceeds {n} samples")
    centroids = feats[rng.choice(n, size=k, replace=False)].copy()
    for _ in range(iters):
        d2 = ((feats[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2, axis=1)
        new = centroids.copy()
        for c in range(k):
            members = feats[assign == c]
            if len(members):
                new[c] = members.mean(axis=0)
        if np.allclose(new, centroids):
            break
        centroids = new
    return centroids


def knn_bank(datasets: list[DomainDataset], backbone: Backbone, k: int = 5,
             seed: int = 0) -> PrototypeBank:
    """K-means centroids of final-layer features per domain (k=1 == NMC)."""
    if k < 1:
        raise ClusteringError("k must be >= 1")
    layers = [backbone.cfg.depth]
    protos = []
    for d in datasets:
        feats = np.stack([multi_level_feature(backbone, s.tokens, layers)
                          for s in d.train])
        rng = np.random.default_rng([seed, 31337, d.domain])
        cents = feats.mean(axis=0, keepdims=True) if k == 1 else _kmeans(
            feats, k, rng)
        protos.append(DomainPrototype(domain=d.domain, vectors=cents,
                                      n_samples=len(d.train)))
    return PrototypeBank(strategy="KNN", layers=layers, prototypes=protos)


def pss_bank(datasets: list[DomainDataset], backbone: Backbone,
             seed: int = 0) -> PrototypeBank:
    """Mean of final-layer features of patch-shuffled training samples.

    Only training samples are shuffled; test samples are matched unshuffled.
    """
    layers = [backbone.cfg.depth]
    protos = []
    for d in datasets:
        feats = []
        for i, s in enumerate(d.train):
            shuffled = patch_shuffle(s.tokens, seed=hash((seed, d.domain, i))
                                     & 0x7FFFFFFF)
            feats.append(multi_level_feature(backbone, shuffled, layers))
        mu = np.mean(feats, axis=0)
        protos.append(DomainPrototype(domain=d.domain, vectors=mu[None, :],
                                      n_samples=len(feats)))
    return PrototypeBank(strategy="PSS", layers=layers, prototypes=protos)


def make_bank(strategy: str, datasets: list[DomainDataset], backbone: Backbone,
              layers=None, k: int = 5, seed: int = 0) -> PrototypeBank:
    if strategy == "MLFI":
        return mlfi_bank(datasets, backbone, layers or [backbone.cfg.depth])
    if strategy == "NMC":
        return nmc_bank(datasets, backbone)
    if strategy == "KNN":
        return knn_bank(datasets, backbone, k=k, seed=seed)
    if strategy == "PSS":
        return pss_bank(datasets, backbone, seed=seed)
    raise ConfigurationError(f"unknown identification strategy {strategy!r}")


# -- layer search --------------------------------------------------------------


def id_accuracy(datasets: list[DomainDataset], backbone: Backbone,
                bank: PrototypeBank, split: str = "test") -> Fraction:
    """Fraction of samples routed to their true domain."""
    correct = total = 0
    for d in datasets:
        for s in getattr(d, split):
            total += 1
            correct += int(identify_sample(backbone, s.tokens, bank) == d.domain)
    if total == 0:
        raise ContractViolation("no samples to identify")
    return Fraction(correct, total)


@dataclass
class LayerSearchResult:
    best_layers: list[int]
    best_accuracy: Fraction
    single_layer_accuracy: dict[int, Fraction]
    trace: list[tuple[tuple[int, ...], Fraction]] = field(default_factory=list)


def greedy_layer_search(datasets: list[DomainDataset], backbone: Backbone,
                        max_size: int = 3, top_k: int = 5,
                        split: str = "test") -> LayerSearchResult:
    """Accuracy-guided greedy growth from the top single layers.

    Candidates are the top-k single layers; a layer is added only when it
    strictly improves validation domain-ID accuracy, so the returned set
    is never worse than the best single layer.
    """
    if not datasets or not any(getattr(d, split) for d in datasets):
        raise ConfigurationError("no validation data for layer search")
    depth = backbone.cfg.depth
    single: dict[int, Fraction] = {}
    trace = []
    for l in range(1, depth + 1):
        bank = mlfi_bank(datasets, backbone, [l])
        single[l] = id_accuracy(datasets, backbone, bank, split)
        trace.append(((l,), single[l]))
    ranked = sorted(single, key=lambda l: (-single[l], l))[:top_k]
    best_set = [ranked[0]]
    best_acc = single[ranked[0]]
    improved = True
    while improved and len(best_set) < max_size:
        improved = False
        for cand in ranked:
            if cand in best_set:
                continue
            trial = sorted(best_set + [cand])
            bank = mlfi_bank(datasets, backbone, trial)
            acc = id_accuracy(datasets, backbone, bank, split)
            trace.append((tuple(trial), acc))
            if acc > best_acc:
                best_acc = acc
                best_set = trial
                improved = True
                break
    return LayerSearchResult(best_layers=sorted(best_set), best_accuracy=best_acc,
                             single_layer_accuracy=single, trace=trace)
