"""Denoising and detection metrics.

The positive class is a real point that is kept:

    TP = real kept      FN = real removed
    TN = virtual removed  FP = virtual kept

so ODR = TN/(FP+TN), IDR = TP/(TP+FN), FPR = FN/(TP+FN), FNR = FP/(FP+TN),
accuracy = (TP+TN)/all and SNR = 10 lg((TP+FN)/(FP+FN)). A rate whose
denominator is zero is reported as ``None`` rather than 0 or 1.
"""
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import GtLabel, PredLabel


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    @property
    def n_real(self):
        return self.tp + self.fn

    @property
    def n_virtual(self):
        return self.fp + self.tn


def confusion(gt_labels, pred_labels):
    """Tally labelled points; unknown ground truth is skipped, unscored counts as kept."""
    gt = np.asarray(gt_labels)
    pred = np.asarray(pred_labels)
    if gt.shape != pred.shape:
        raise ValueError(f"label arrays differ in length: {gt.shape} vs {pred.shape}")
    real = gt == GtLabel.REAL
    virt = gt == GtLabel.VIRTUAL
    removed = pred == PredLabel.VIRTUAL
    return ConfusionCounts(
        tp=int(np.count_nonzero(real & ~removed)),
        fp=int(np.count_nonzero(virt & ~removed)),
        tn=int(np.count_nonzero(virt & removed)),
        fn=int(np.count_nonzero(real & removed)),
    )


def _ratio(num, den):
    return num / den if den > 0 else None


def rates(c):
    return {
        "odr": _ratio(c.tn, c.fp + c.tn),
        "idr": _ratio(c.tp, c.tp + c.fn),
        "fpr": _ratio(c.fn, c.tp + c.fn),
        "fnr": _ratio(c.fp, c.fp + c.tn),
        "accuracy": _ratio(c.tp + c.tn, c.total),
    }


def snr(c):
    """``10 lg((TP+FN)/(FP+FN))`` in dB; ``math.inf`` when nothing is wrong."""
    wrong = c.fp + c.fn
    if wrong == 0:
        return math.inf
    real = c.tp + c.fn
    if real == 0:
        return -math.inf
    return 10.0 * math.log10(real / wrong)


def original_snr(n_real, n_virtual):
    """SNR of a cloud before any removal, i.e. everything kept."""
    return snr(ConfusionCounts(tp=n_real, fp=n_virtual, tn=0, fn=0))


def accuracy_from_rates(n_real, n_virtual, odr, idr):
    return (idr * n_real + odr * n_virtual) / (n_real + n_virtual)


def detection_prf(gt_ids, pred_ids):
    """Precision, recall and F-measure of a predicted id set against the truth."""
    gt = set(np.asarray(gt_ids).ravel().tolist())
    pred = set(np.asarray(pred_ids).ravel().tolist())
    hit = len(gt & pred)
    p = _ratio(hit, len(pred))
    r = _ratio(hit, len(gt))
    f = None
    if p is not None and r is not None:
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return {"precision": p, "recall": r, "f_measure": f}


def _json_number(v):
    if v is None:
        return None
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def metrics_report(gt_labels, pred_labels):
    """Full report: counts, rates, SNR before/after and the SNR gain."""
    c = confusion(gt_labels, pred_labels)
    r = rates(c)
    before = original_snr(c.n_real, c.n_virtual) if c.total else None
    after = snr(c) if c.total else None
    gain = None
    if before is not None and math.isfinite(before) and after is not None:
        gain = after - before
    undefined = sorted(k for k, v in r.items() if v is None)
    return {
        "counts": asdict(c),
        "n_real": c.n_real,
        "n_virtual": c.n_virtual,
        **r,
        "snr_original_db": before,
        "snr_db": after,
        "delta_snr_db": gain,
        "undefined": undefined,
    }


def report_to_json(report):
    clean = {k: _json_number(v) for k, v in report.items()}
    return json.dumps(clean, indent=2, sort_keys=True)


def _pct(v):
    return "n/a" if v is None else f"{100 * v:.2f}"


def _db(v):
    if v is None:
        return "n/a"
    if isinstance(v, str):
        return v
    return f"{v:.2f}" if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def format_table(rows):
    """Aligned text table; ``rows`` maps a name to a report dict."""
    cols = ["name", "real", "virtual", "ODR%", "IDR%", "FPR%", "FNR%", "Acc%",
            "SNR0 dB", "SNR dB", "dSNR dB"]
    body = []
    for name, rep in rows.items():
        body.append([str(name), str(rep["n_real"]), str(rep["n_virtual"]), _pct(rep["odr"]),
                     _pct(rep["idr"]), _pct(rep["fpr"]), _pct(rep["fnr"]), _pct(rep["accuracy"]),
                     _db(rep["snr_original_db"]), _db(rep["snr_db"]), _db(rep["delta_snr_db"])])
    widths = [max(len(cols[i]), *(len(r[i]) for r in body)) if body else len(cols[i])
              for i in range(len(cols))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in body]
    return "\n".join(lines) + "\n"
