"""Frozen text reference anchors and relative encodings.

An anchor set is an (n_classes x dim) matrix of L2-normalized class
vectors. The relative encoding of a vector is its cosine similarity
against every anchor row, in class-index order. Reference encodings
(rows of the anchor Gram matrix) are cached since the anchors never
change after construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ContractViolation, cosine_similarity


class AnchorFormatError(ValueError):
    """Anchor file violates the documented JSONL format."""


@dataclass
class RelativeEncoding:
    values: np.ndarray
    anchor_tag: str


@dataclass
class TextAnchorSet:
    """Immutable per-class reference matrix; rows L2-normalized."""

    matrix: np.ndarray
    class_names: list[str]
    source: str = "synthetic"
    _gram: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        norms = np.linalg.norm(m, axis=1, keepdims=True)
        if np.any(norms <= 0):
            raise AnchorFormatError("zero-norm anchor row")
        self.matrix = m / norms
        self.matrix.setflags(write=False)
        if len(self.class_names) != self.matrix.shape[0]:
            raise AnchorFormatError("class name count does not match rows")

    @property
    def n_classes(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def gram(self) -> np.ndarray:
        if self._gram is None:
            g = np.stack(
                [relative_encoding(row, self.matrix).values for row in self.matrix]
            )
            g.setflags(write=False)
            object.__setattr__(self, "_gram", g)
        return self._gram


def relative_encoding(v, anchors, tag: str = "text") -> RelativeEncoding:
    """Cosine similarities of v against every anchor row, in row order."""
    mat = anchors.matrix if isinstance(anchors, TextAnchorSet) else np.asarray(anchors)
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or mat.shape[1] != v.shape[0]:
        raise ContractViolation(f"relative_encoding shapes {v.shape} vs {mat.shape}")
    vals = np.array([cosine_similarity(v, row) for row in mat])
    return RelativeEncoding(values=vals, anchor_tag=tag)


def reference_encoding(label: int, anchors: TextAnchorSet) -> RelativeEncoding:
    """Row `label` of the (cached) anchor Gram matrix."""
    if not 0 <= label < anchors.n_classes:
        raise ContractViolation(f"label {label} out of range [0,{anchors.n_classes})")
    return RelativeEncoding(values=anchors.gram()[label], anchor_tag="text-ref")


def load_text_anchors(path) -> TextAnchorSet:
    """Load the JSONL anchor format: header line, then one line per class."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise AnchorFormatError("empty anchor file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise AnchorFormatError(f"line 1: {e}") from e
    for key in ("dim", "count"):
        if key not in header:
            raise AnchorFormatError(f"header missing '{key}'")
    dim, count = int(header["dim"]), int(header["count"])
    if len(lines) - 1 != count:
        raise AnchorFormatError(
            f"header count {count} but {len(lines) - 1} data lines"
        )
    names: list[str] = []
    rows = np.empty((count, dim), dtype=np.float64)
    for i, ln in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError as e:
            raise AnchorFormatError(f"line {i}: {e}") from e
        if "class" not in rec or "embedding" not in rec:
            raise AnchorFormatError(f"line {i}: missing 'class' or 'embedding'")
        emb = np.asarray(rec["embedding"], dtype=np.float64)
        if emb.shape != (dim,):
            raise AnchorFormatError(
                f"line {i}: embedding length {emb.size} != header dim {dim}"
            )
        name = str(rec["class"])
        if name in names:
            raise AnchorFormatError(f"line {i}: duplicate class name {name!r}")
        names.append(name)
        rows[i - 2] = emb
    return TextAnchorSet(matrix=rows, class_names=names, source="file")


def save_text_anchors(path, anchors: TextAnchorSet, encoder: str = "synthetic") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps({"dim": anchors.dim, "count": anchors.n_classes,
                        "encoder": encoder})
            + "\n"
        )
        for name, row in zip(anchors.class_names, anchors.matrix):
            fh.write(json.dumps({"class": name, "embedding": list(row)}) + "\n")


def anchors_from_gram(gram: np.ndarray, dim: int, class_names: list[str],
                      rng: np.random.Generator) -> TextAnchorSet:
    """Unit vectors in R^dim realizing a target PSD Gram matrix exactly."""
    n = gram.shape[0]
    if dim < n:
        raise AnchorFormatError(f"dim {dim} < {n} classes; Gram not realizable")
    w, v = np.linalg.eigh(gram)
    w = np.clip(w, 0.0, None)
    factor = v * np.sqrt(w)  # rows have Gram `gram`
    basis = np.linalg.qr(rng.standard_normal((dim, dim)))[0][:, :n]
    rows = factor @ basis.T
    return TextAnchorSet(matrix=rows, class_names=class_names, source="synthetic")


def synth_text_anchors(n_classes: int, dim: int, n_groups: int = 1,
                       intra_sim: float = 0.0, inter_sim: float = 0.0,
                       seed: int = 0) -> TextAnchorSet:
    """Synthetic anchors with block-structured pairwise cosines.

    Classes are split into `n_groups` groups; within-group pairs target
    `intra_sim`, across-group pairs target `inter_sim` (each within 0.05).
    """
    if not (0.0 <= intra_sim < 1.0) or not (-1.0 < inter_sim < 1.0):
        raise AnchorFormatError("similarity targets out of range")
    group = np.array([c * n_groups // n_classes for c in range(n_classes)])
    gram = np.where(group[:, None] == group[None, :], intra_sim, inter_sim)
    np.fill_diagonal(gram, 1.0)
    w = np.linalg.eigvalsh(gram)
    if w.min() < -1e-9:
        raise AnchorFormatError(
            f"similarity targets give a non-PSD Gram (min eig {w.min():.3g})"
        )
    rng = np.random.default_rng(seed)
    names = [f"class_{c}" for c in range(n_classes)]
    return anchors_from_gram(gram, dim, names, rng)
