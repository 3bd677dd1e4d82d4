"""Binary classification metrics (macro precision / recall / F1, accuracy)."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    macro_f1: float
    accuracy: float
    confusion: tuple[tuple[int, int], tuple[int, int]]  # confusion[gold][pred]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["confusion"] = [list(r) for r in self.confusion]
        return d


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def compute(preds, golds) -> Metrics:
    """Macro-averaged metrics over classes {0, 1}.

    Reported precision and recall are means of the per-class values; macro
    F1 is the mean of per-class F1 (not the F1 of macro P/R).  Any ratio
    with a zero denominator counts as 0.
    """
    preds = np.asarray(preds, dtype=np.int64).reshape(-1)
    golds = np.asarray(golds, dtype=np.int64).reshape(-1)
    if preds.shape != golds.shape:
        raise ValueError(f"length mismatch: {preds.size} predictions, {golds.size} golds")
    if preds.size == 0:
        raise ValueError("cannot compute metrics on empty input")
    if not (np.isin(preds, (0, 1)).all() and np.isin(golds, (0, 1)).all()):
        raise ValueError("labels must be 0 or 1")
    conf = np.zeros((2, 2), dtype=np.int64)
    np.add.at(conf, (golds, preds), 1)
    ps, rs, fs = [], [], []
    for c in (0, 1):
        tp = int(conf[c, c])
        p = _ratio(tp, int(conf[:, c].sum()))
        r = _ratio(tp, int(conf[c, :].sum()))
        ps.append(p)
        rs.append(r)
        fs.append(2 * p * r / (p + r) if p + r else 0.0)
    return Metrics(
        precision=(ps[0] + ps[1]) / 2,
        recall=(rs[0] + rs[1]) / 2,
        macro_f1=(fs[0] + fs[1]) / 2,
        accuracy=int(np.trace(conf)) / preds.size,
        confusion=((int(conf[0, 0]), int(conf[0, 1])), (int(conf[1, 0]), int(conf[1, 1]))),
    )
