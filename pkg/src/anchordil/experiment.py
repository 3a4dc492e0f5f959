"""End-to-end experiment driver: sequential training, then inference.

Training runs domains in stream order, freezing each bundle on
completion and building its identification prototype offline. The
inference loop routes each test sample to a domain (MLFI/NMC/KNN/PSS or
the oracle), activates that domain's components, and classifies with the
pools up to the routed domain. The accuracy matrix is filled after every
stage so all continual-learning metrics are recomputable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .aggregation import ModelState, forward_infer
from .backbone import Backbone
from .config import ExperimentConfig
from .datagen import DomainDataset, generate_benchmark, permute_domain_order
from .identification import (LayerSearchResult, PrototypeBank, build_prototype,
                             greedy_layer_search, identify_sample, make_bank)
from .metrics import AccuracyMatrix, MetricsReport
from .training import freeze_domain, init_domain_state, train_domain


@dataclass
class RunResult:
    state: ModelState
    backbone: Backbone
    stream: list[DomainDataset]
    bank: PrototypeBank | None
    matrix: AccuracyMatrix
    report: MetricsReport
    layer_search: LayerSearchResult | None
    epoch_logs: dict[int, list] = field(default_factory=dict)


def prepare_data(cfg: ExperimentConfig):
    datasets, text = generate_benchmark(cfg.benchmark)
    if cfg.domain_order:
        datasets = permute_domain_order(datasets, list(cfg.domain_order))
    return datasets, text


def resolve_layers(cfg: ExperimentConfig, stream: list[DomainDataset],
                   backbone: Backbone):
    if cfg.mlfi_layers == "search":
        res = greedy_layer_search(stream, backbone)
        return res.best_layers, res
    return sorted(set(int(l) for l in cfg.mlfi_layers)), None


def _route(cfg: ExperimentConfig, backbone: Backbone, tokens: np.ndarray,
           bank: PrototypeBank | None, true_stage: int, n_stages: int) -> int:
    if cfg.id_strategy == "oracle":
        return true_stage
    restricted = PrototypeBank(
        strategy=bank.strategy, layers=bank.layers,
        prototypes=[p for p in bank.prototypes if p.domain <= n_stages])
    return identify_sample(backbone, tokens, restricted)


def evaluate_stage(cfg: ExperimentConfig, state: ModelState, backbone: Backbone,
                   stream: list[DomainDataset], bank: PrototypeBank | None,
                   stage: int, matrix: AccuracyMatrix) -> None:
    """Fill accuracy-matrix row `stage` over test sets of stages 1..stage."""
    for i in range(1, stage + 1):
        ds = stream[i - 1]
        correct = 0
        for sample in ds.test:
            s = _route(cfg, backbone, sample.tokens, bank, i, stage)
            logits = forward_infer(backbone, sample.tokens, s, state,
                                   cfg.loss.tau,
                                   use_aggregation=cfg.use_aggregation)
            correct += int(np.argmax(logits) == sample.label)
        matrix.record(stage, i, correct, len(ds.test))


def domain_id_accuracy(cfg: ExperimentConfig, backbone: Backbone,
                       stream: list[DomainDataset],
                       bank: PrototypeBank | None) -> Fraction | None:
    if cfg.id_strategy == "oracle":
        return None
    correct = total = 0
    for i, ds in enumerate(stream, start=1):
        for sample in ds.test:
            total += 1
            correct += int(_route(cfg, backbone, sample.tokens, bank, i,
                                  len(stream)) == i)
    return Fraction(correct, total)


def run_experiment(cfg: ExperimentConfig,
                   stream: list[DomainDataset] | None = None,
                   text=None) -> RunResult:
    if stream is None:
        stream, text = prepare_data(cfg)
    backbone = Backbone(cfg.backbone)
    layers, search_res = resolve_layers(cfg, stream, backbone)

    state = ModelState(text_anchors=text, share_mode=cfg.share_mode)
    matrix = AccuracyMatrix(n_domains=len(stream))
    bank = PrototypeBank(strategy=cfg.id_strategy if cfg.id_strategy != "oracle"
                         else "MLFI", layers=layers, prototypes=[])
    epoch_logs: dict[int, list] = {}

    for stage, ds in enumerate(stream, start=1):
        state.domains.append(init_domain_state(
            stage, cfg.benchmark.n_classes, backbone, cfg.seed, cfg.optimizer,
            cfg.share_mode))
        epoch_logs[stage] = train_domain(
            stage, ds, state, backbone, cfg.optimizer, cfg.loss, cfg.seed,
            use_aggregation=cfg.use_aggregation)
        freeze_domain(stage, state)
        if cfg.id_strategy in ("MLFI", "oracle"):
            bank.prototypes.append(
                build_prototype(stage, ds.train, backbone, layers))
        if cfg.id_strategy in ("NMC", "KNN", "PSS"):
            bank = make_bank(cfg.id_strategy,
                             [DomainDataset(domain=j + 1, train=s.train,
                                            test=s.test, n_classes=s.n_classes,
                                            token_dim=s.token_dim)
                              for j, s in enumerate(stream[:stage])],
                             backbone, layers=layers, k=cfg.knn_k, seed=cfg.seed)
        evaluate_stage(cfg, state, backbone, stream, bank, stage, matrix)

    a_cls = domain_id_accuracy(cfg, backbone, stream, bank)
    report = MetricsReport.from_matrix(matrix, a_cls=a_cls)
    return RunResult(state=state, backbone=backbone, stream=stream, bank=bank,
                     matrix=matrix, report=report, layer_search=search_res,
                     epoch_logs=epoch_logs)
