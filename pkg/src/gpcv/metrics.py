"""Hard-decision evaluation metrics.

These are the non-smooth counterparts of the optimization criteria: confusion
counts at a probability threshold, the true F-measure, misclassification
rate, precision/recall, indicator-based TP/FP/WER/AUC estimates, and test
NLP. Metrics that need an absent class are reported as None rather than 0.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError

PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class ConfusionCounts:
    a: int  # actual +, predicted +
    b: int  # actual +, predicted -
    c: int  # actual -, predicted +
    d: int  # actual -, predicted -

    @property
    def n_pos(self):
        return self.a + self.b

    @property
    def n_neg(self):
        return self.c + self.d

    @property
    def n(self):
        return self.a + self.b + self.c + self.d


def confusion(pred_prob_pos, y, threshold=0.5):
    """Count the confusion matrix; prob >= threshold predicts positive."""
    if not 0.0 < threshold < 1.0:
        raise InputError("threshold must lie in (0, 1)")
    p = np.asarray(pred_prob_pos, dtype=float)
    y = np.asarray(y)
    pred_pos = p >= threshold
    actual_pos = y > 0
    a = int(np.count_nonzero(pred_pos & actual_pos))
    b = int(np.count_nonzero(~pred_pos & actual_pos))
    c = int(np.count_nonzero(pred_pos & ~actual_pos))
    d = int(np.count_nonzero(~pred_pos & ~actual_pos))
    return ConfusionCounts(a, b, c, d)


def true_fmeasure(cc, zeta=0.5):
    """F = a / (a + zeta*b + (1-zeta)*c); a = 0 gives 0 by convention."""
    if cc.a == 0:
        return 0.0
    return cc.a / (cc.a + zeta * cc.b + (1.0 - zeta) * cc.c)


def test_nlp(pred_prob_pos, y):
    """Mean negative log probability of the observed labels."""
    p = np.asarray(pred_prob_pos, dtype=float)
    y = np.asarray(y)
    p_label = np.where(y > 0, p, 1.0 - p)
    return float(-np.mean(np.log(np.maximum(p_label, PROB_FLOOR))))


def metric_suite(pred_prob_pos, y, zeta=0.5, tau=1.0, threshold=0.5):
    """All point metrics for one set of predictions.

    Returns a dict; class-conditional entries are None when the class is
    absent so missing data never masquerades as a zero rate.
    """
    cc = confusion(pred_prob_pos, y, threshold)
    out = {
        "a": cc.a,
        "b": cc.b,
        "c": cc.c,
        "d": cc.d,
        "mcr": (cc.b + cc.c) / cc.n,
        "nlp": test_nlp(pred_prob_pos, y),
    }
    out["precision"] = cc.a / (cc.a + cc.c) if (cc.a + cc.c) > 0 else None
    if cc.n_pos > 0:
        out["recall"] = cc.a / cc.n_pos
        out["tp"] = cc.a / cc.n_pos
        out["fmeasure"] = true_fmeasure(cc, zeta)
    else:
        out["recall"] = out["tp"] = out["fmeasure"] = None
    out["fp"] = cc.c / cc.n_neg if cc.n_neg > 0 else None
    if out["tp"] is not None and out["fp"] is not None:
        out["auc"] = 0.5 * (1.0 + out["tp"] - out["fp"])
        out["wer"] = (cc.n_pos * (1.0 - out["tp"]) + tau * cc.n_neg * out["fp"]) / (
            cc.n_pos + tau * cc.n_neg
        )
    else:
        out["auc"] = out["wer"] = None
    return out
