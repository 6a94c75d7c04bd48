"""Diagnostic curves: held-out matching loss by segment, soft-label spread."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..distill.synthetic import SyntheticSet
from ..distill.tune import segment_losses
from ..experts.train import ExpertTrajectory
from ..numkit.errors import ShapeError
from ..numkit.ops import softmax


@dataclass
class DiagnosticCurve:
    x: np.ndarray
    y: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.size != self.y.size:
            raise ShapeError("curve x/y lengths differ")
        if not np.all(np.isfinite(self.y)):
            raise ShapeError("curve values must be finite")

    def to_csv(self) -> str:
        lines = ["x,y"]
        lines += [f"{x:.9g},{y:.9g}" for x, y in zip(self.x, self.y)]
        return "\n".join(lines) + "\n"


def heldout_matching_curve(
    synset: SyntheticSet,
    heldout: ExpertTrajectory,
    span: int,
    steps: int,
    grid,
) -> DiagnosticCurve:
    """Matching loss of the synthetic set over held-out (t, t+span) segments.

    Degenerate segments carry the marker value -1 instead of a loss.
    """
    grid = list(grid)
    for t in grid:
        if t + span > heldout.horizon:
            raise ShapeError(f"grid point {t} + span {span} exceeds horizon")
    losses = segment_losses(synset, heldout, grid, span, steps)
    return DiagnosticCurve(
        x=np.asarray(grid, dtype=np.float64),
        y=losses,
        metadata={"span": span, "steps": steps, "expert_seed": heldout.seed},
    )


def label_std_stat(synset: SyntheticSet) -> float:
    """Mean over images of the per-image (population) std of the soft labels."""
    soft = softmax(synset.logits.array.astype(np.float64))
    return float(np.std(soft, axis=1).mean())


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    def ranks(v):
        order = np.argsort(v, kind="mergesort")
        r = np.empty(v.size, dtype=np.float64)
        r[order] = np.arange(1, v.size + 1)
        # average the ranks inside tied groups
        sv = v[order]
        i = 0
        while i < v.size:
            j = i
            while j + 1 < v.size and sv[j + 1] == sv[i]:
                j += 1
            if j > i:
                r[order[i : j + 1]] = (i + j) / 2.0 + 1.0
            i = j + 1
        return r

    rx, ry = ranks(x), ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx**2).sum() * (ry**2).sum())
    return float((rx * ry).sum() / denom) if denom > 0 else 0.0
