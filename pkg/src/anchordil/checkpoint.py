"""Versioned JSON checkpoint container.

Layout (version 1, stable across patch versions):
  {
    "version": 1,
    "backbone": {<BackboneConfig fields>},
    "class_names": [...],
    "text_anchors": [[...], ...],
    "share_mode": bool,
    "domains": [
      {"domain": int, "seed": int, "frozen": bool,
       "prompt": [[...]], "visual_anchors": [[...]],
       "prototypes": [[...]] | null,
       "classifier_w": [[...]], "classifier_b": [...]},
      ...
    ],
    "prototype_bank": {"strategy": str, "layers": [...],
                       "prototypes": [{"domain", "n_samples", "vectors"}]} | null
  }

Floats are serialized by json's repr round-trip, so identical states
produce byte-identical files.
"""

from __future__ import annotations

import json

import numpy as np

from .aggregation import (DomainClassifier, DomainModelState, ModelState,
                          PrototypeAnchorSet)
from .alignment import VisualAnchorSet
from .anchors import TextAnchorSet
from .backbone import Backbone, BackboneConfig
from .identification import DomainPrototype, PrototypeBank

VERSION = 1


class CheckpointError(ValueError):
    pass


def _arr(a: np.ndarray):
    return [list(row) for row in a] if a.ndim == 2 else list(a)


def dump_checkpoint(path, state: ModelState, backbone: Backbone,
                    bank: PrototypeBank | None = None) -> None:
    doc = {
        "version": VERSION,
        "backbone": vars(backbone.cfg).copy(),
        "class_names": list(state.text_anchors.class_names),
        "text_anchors": _arr(np.asarray(state.text_anchors.matrix)),
        "share_mode": state.share_mode,
        "domains": [
            {
                "domain": d.domain,
                "seed": d.seed,
                "frozen": d.frozen,
                "prompt": _arr(d.prompt),
                "visual_anchors": _arr(d.visual_anchors.values),
                "prototypes": None if d.prototypes is None
                else _arr(d.prototypes.values),
                "classifier_w": _arr(d.classifier.weight),
                "classifier_b": _arr(d.classifier.bias),
            }
            for d in state.domains
        ],
        "prototype_bank": None if bank is None else {
            "strategy": bank.strategy,
            "layers": list(bank.layers),
            "prototypes": [
                {"domain": p.domain, "n_samples": p.n_samples,
                 "vectors": _arr(p.vectors)}
                for p in bank.prototypes
            ],
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path) -> tuple[ModelState, Backbone, PrototypeBank | None]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    backbone = Backbone(BackboneConfig(**doc["backbone"]))
    text = TextAnchorSet(matrix=np.asarray(doc["text_anchors"], dtype=np.float64),
                         class_names=list(doc["class_names"]), source="checkpoint")
    state = ModelState(text_anchors=text, share_mode=bool(doc["share_mode"]))
    for d in doc["domains"]:
        dm = DomainModelState(
            prompt=np.asarray(d["prompt"], dtype=np.float64),
            visual_anchors=VisualAnchorSet(
                values=np.asarray(d["visual_anchors"], dtype=np.float64),
                domain=d["domain"], frozen=d["frozen"]),
            prototypes=None if d["prototypes"] is None else PrototypeAnchorSet(
                values=np.asarray(d["prototypes"], dtype=np.float64),
                domain=d["domain"], frozen=d["frozen"]),
            classifier=DomainClassifier(
                weight=np.asarray(d["classifier_w"], dtype=np.float64),
                bias=np.asarray(d["classifier_b"], dtype=np.float64),
                domain=d["domain"], frozen=d["frozen"]),
            domain=d["domain"], seed=d["seed"], frozen=d["frozen"])
        state.domains.append(dm)
    bank = None
    if doc.get("prototype_bank") is not None:
        b = doc["prototype_bank"]
        bank = PrototypeBank(
            strategy=b["strategy"], layers=list(b["layers"]),
            prototypes=[
                DomainPrototype(domain=p["domain"], n_samples=p["n_samples"],
                                vectors=np.asarray(p["vectors"], dtype=np.float64))
                for p in b["prototypes"]
            ])
    return state, backbone, bank
