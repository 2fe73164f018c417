"""Vertex-space evaluation metrics and the adjacent-frame heatmap statistics.

All six metrics operate on (T, V, 3) vertex sequences in mm, computed in
float64.  Deterministic accuracy metrics (mve, lve, fdd) score a single
prediction; mee, ce, and diversity aggregate over n stochastic samples.
The lip metric is the mean over frames of the worst lip vertex; the
upper-face dynamics metric compares per-vertex temporal standard deviations
of displacement from the template (population std, signed per item, absolute
in summaries by default).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ShapeError
from .flame import RegionMask


def _as_vertices(seq) -> np.ndarray:
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"vertex sequence must be (T, V, 3), got {arr.shape}")
    return arr


def _check_same_shape(gt: np.ndarray, pred: np.ndarray) -> None:
    if gt.shape != pred.shape:
        raise ShapeError(f"shape mismatch: gt {gt.shape} vs pred {pred.shape}")


def mve(gt, pred) -> float:
    """Mean over frames and vertices of the per-vertex L2 error (mm)."""
    gt, pred = _as_vertices(gt), _as_vertices(pred)
    _check_same_shape(gt, pred)
    return float(np.linalg.norm(pred - gt, axis=2).mean())


def lve(gt, pred, lip_mask: RegionMask) -> float:
    """Mean over frames of the max per-vertex L2 error inside the lip region (mm)."""
    gt, pred = _as_vertices(gt), _as_vertices(pred)
    _check_same_shape(gt, pred)
    idx = lip_mask.vertex_indices
    if idx.size == 0:
        raise InputError("lip mask is empty")
    errors = np.linalg.norm(pred[:, idx, :] - gt[:, idx, :], axis=2)
    return float(errors.max(axis=1).mean())


def _dyn(seq: np.ndarray, idx: np.ndarray, template: np.ndarray) -> np.ndarray:
    """Per-vertex population std over time of distance from the template."""
    disp = np.linalg.norm(seq[:, idx, :] - template[None, idx, :], axis=2)
    return disp.std(axis=0)


def fdd(gt, pred, upper_mask: RegionMask, template) -> float:
    """Upper-face dynamics deviation: mean over the region of
    (pred per-vertex temporal std - gt per-vertex temporal std), signed, mm."""
    gt, pred = _as_vertices(gt), _as_vertices(pred)
    _check_same_shape(gt, pred)
    if gt.shape[0] < 2:
        raise InputError(f"fdd needs at least 2 frames, got {gt.shape[0]}")
    template = np.asarray(template, dtype=np.float64)
    idx = upper_mask.vertex_indices
    if idx.size == 0:
        raise InputError("upper-face mask is empty")
    return float((_dyn(pred, idx, template) - _dyn(gt, idx, template)).mean())


def mee(gt, preds, lip_mask: RegionMask) -> float:
    """Mean over samples of the lip error."""
    if len(preds) == 0:
        raise InputError("mee needs at least one sample")
    return float(np.mean([lve(gt, p, lip_mask) for p in preds]))


def ce(gt, preds, lip_mask: RegionMask) -> float:
    """Best-sample (minimum) lip error over the sample set."""
    if len(preds) == 0:
        raise InputError("ce needs at least one sample")
    return float(np.min([lve(gt, p, lip_mask) for p in preds]))


def diversity(preds) -> float:
    """Mean pairwise vertex distance across samples; defined 0 for n = 1."""
    n = len(preds)
    if n == 0:
        raise InputError("diversity needs at least one sample")
    if n == 1:
        return 0.0
    arrs = [_as_vertices(p) for p in preds]
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            _check_same_shape(arrs[i], arrs[j])
            total += float(np.linalg.norm(arrs[i] - arrs[j], axis=2).mean())
    return 2.0 * total / (n * (n - 1))


def heatmap_stats(seq) -> np.ndarray:
    """Per-vertex (mean, std) of adjacent-frame displacement, shape (V, 2).

    d[t, v] = ||seq[t+1, v] - seq[t, v]||; std is the population form.
    """
    arr = _as_vertices(seq)
    if arr.shape[0] < 2:
        raise InputError(f"heatmap needs at least 2 frames, got {arr.shape[0]}")
    d = np.linalg.norm(arr[1:] - arr[:-1], axis=2)
    return np.stack([d.mean(axis=0), d.std(axis=0)], axis=1)


def heatmap_csv(seq) -> str:
    stats = heatmap_stats(seq)
    lines = ["vertex_index,mean_mm,std_mm"]
    for v in range(stats.shape[0]):
        lines.append(f"{v},{float(stats[v, 0])!r},{float(stats[v, 1])!r}")
    return "\n".join(lines) + "\n"


@dataclass
class EvalItem:
    """Ground truth plus n predicted samples for one sequence.

    Deterministic metrics read preds[0]; the sample-set metrics use all."""

    gt: np.ndarray
    preds: list[np.ndarray]
    lip_mask: RegionMask
    upper_mask: RegionMask
    template: np.ndarray
    name: str = ""

    def validate(self) -> None:
        gt = _as_vertices(self.gt)
        if not self.preds:
            raise InputError("EvalItem needs at least one prediction sample")
        for p in self.preds:
            _check_same_shape(gt, _as_vertices(p))


@dataclass
class MetricReport:
    mve: float
    lve: float
    fdd: float
    mee: float
    ce: float
    diversity: float
    fdd_mode: str
    fdd_signed: float
    per_item: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mve": self.mve,
            "lve": self.lve,
            "fdd": self.fdd,
            "mee": self.mee,
            "ce": self.ce,
            "diversity": self.diversity,
            "fdd_mode": self.fdd_mode,
            "fdd_signed": self.fdd_signed,
            "per_item": self.per_item,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def evaluate_item(item: EvalItem) -> dict:
    item.validate()
    signed = fdd(item.gt, item.preds[0], item.upper_mask, item.template)
    return {
        "item": item.name,
        "n_samples": len(item.preds),
        "mve": mve(item.gt, item.preds[0]),
        "lve": lve(item.gt, item.preds[0], item.lip_mask),
        "fdd_signed": signed,
        "fdd_abs": abs(signed),
        "mee": mee(item.gt, item.preds, item.lip_mask),
        "ce": ce(item.gt, item.preds, item.lip_mask),
        "diversity": diversity(item.preds),
    }


def evaluate_corpus(items: list[EvalItem], fdd_mode: str = "abs") -> MetricReport:
    """Unweighted per-item means; fdd_mode selects abs or signed summary."""
    if not items:
        raise InputError("evaluate_corpus needs at least one item")
    if fdd_mode not in ("abs", "signed"):
        raise InputError(f"fdd_mode must be 'abs' or 'signed', got {fdd_mode!r}")
    rows = [evaluate_item(it) for it in items]
    mean = lambda key: float(np.mean([r[key] for r in rows]))
    return MetricReport(
        mve=mean("mve"),
        lve=mean("lve"),
        fdd=mean("fdd_abs") if fdd_mode == "abs" else mean("fdd_signed"),
        mee=mean("mee"),
        ce=mean("ce"),
        diversity=mean("diversity"),
        fdd_mode=fdd_mode,
        fdd_signed=mean("fdd_signed"),
        per_item=rows,
    )
