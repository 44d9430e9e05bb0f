"""Brute-force reference implementations used by the tests."""
from fractions import Fraction

import numpy as np


def best_split(X, y, n_classes):
    """Exhaustive (feature, threshold) minimising weighted child Gini.

    Exact rational arithmetic; ties go to the lowest feature, then the lowest
    threshold.  Returns None when no feature has two distinct values.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n = len(y)
    best = None
    for f in range(X.shape[1]):
        vals = sorted(set(X[:, f].tolist()))
        for lo, hi in zip(vals, vals[1:]):
            thr = (lo + hi) / 2
            left = y[X[:, f] <= lo]
            right = y[X[:, f] > lo]
            imp = Fraction(0)
            for part in (left, right):
                m = len(part)
                counts = np.bincount(part, minlength=n_classes)
                g = 1 - sum(Fraction(int(c), m) ** 2 for c in counts)
                imp += Fraction(m, n) * g
            if best is None or imp < best[0]:
                best = (imp, f, thr)
    return None if best is None else (best[1], best[2])


def f1_binary(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom


def f1_macro(cm):
    cm = np.asarray(cm)
    scores = []
    for c in range(cm.shape[0]):
        tp = int(cm[c, c])
        fp = int(cm[:, c].sum()) - tp
        fn = int(cm[c, :].sum()) - tp
        if tp == 0:
            scores.append(0.0)
        else:
            p = tp / (tp + fp)
            r = tp / (tp + fn)
            scores.append(2 * p * r / (p + r))
    return sum(scores) / len(scores)
