"""Independent reference implementations the tests compare against.

These are deliberately naive (brute force, direct counting) and share no
code with the package.
"""

from __future__ import annotations

from collections import Counter
from fractions import Fraction

import numpy as np


def mann_whitney_auc(scores, positives) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), by counting every pair."""
    pos = [s for s, p in zip(scores, positives) if p]
    neg = [s for s, p in zip(scores, positives) if not p]
    total = Fraction(0)
    for a in pos:
        for b in neg:
            if a > b:
                total += 1
            elif a == b:
                total += Fraction(1, 2)
    return float(total / (len(pos) * len(neg)))


def grid_covers(height: int, width: int, rects) -> bool:
    """Every pixel lies inside at least one (x, y, w, h) rect, all rects inside the image."""
    hit = np.zeros((height, width), dtype=bool)
    for x, y, w, h in rects:
        if x < 0 or y < 0 or x + w > width or y + h > height:
            return False
        hit[y : y + h, x : x + w] = True
    return bool(hit.all())


def recount_vote(rows, codes, master):
    """Reference vote over (scores_by_code, top_code, is_wound) rows.

    Returns (winner, fallback_used). Exact rational arithmetic for averages.
    """
    wound = [r for r in rows if r[2]]
    if wound:
        votes = Counter(r[1] for r in wound)
        avg = {c: sum(Fraction(r[0][c]) for r in wound) / len(wound) for c in codes}
        best = max(votes.values())
        tied = [c for c in codes if votes.get(c, 0) == best]
        top = max(avg[c] for c in tied)
        tied = [c for c in tied if avg[c] == top]
        return min(tied, key=master.index), False
    avg = {c: sum(Fraction(r[0][c]) for r in rows) / len(rows) for c in codes}
    top = max(avg.values())
    return min([c for c in codes if avg[c] == top], key=master.index), True


def headline_metrics(cm, positive: int = 0):
    """(accuracy, precision, recall, F1) in percent from a square confusion matrix (rows actual)."""
    cm = np.asarray(cm)
    tp = cm[positive, positive]
    fp = cm[:, positive].sum() - tp
    fn = cm[positive, :].sum() - tp
    acc = np.trace(cm) / cm.sum()
    p = tp / (tp + fp)
    r = tp / (tp + fn)
    return 100 * acc, 100 * p, 100 * r, 100 * 2 * p * r / (p + r)


def logistic_accuracy(x_train, y_train, x_test, y_test, n_classes: int, epochs: int = 500, lr: float = 0.5) -> float:
    """Multinomial logistic regression by full-batch gradient descent."""
    x_train = np.c_[x_train, np.ones(len(x_train))]
    x_test = np.c_[x_test, np.ones(len(x_test))]
    w = np.zeros((x_train.shape[1], n_classes))
    onehot = np.eye(n_classes)[y_train]
    for _ in range(epochs):
        z = x_train @ w
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        w -= lr * x_train.T @ (p - onehot) / len(x_train)
    return float(np.mean((x_test @ w).argmax(axis=1) == y_test))


def complementary_scores(n: int, seed: int = 0):
    """Binary (A, B, y) score triples where A decides half the cases and B the other half.

    On its half, the informative source puts 0.85-1.0 on the true class; the
    other source sits in the uninformative band 0.35-0.65 regardless of y.
    """
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    a_decides = np.arange(n) % 2 == 0
    strong = rng.uniform(0.85, 1.0, n)
    sure = np.where(y == 0, strong, 1 - strong)  # score of class 0
    vague = rng.uniform(0.35, 0.65, n)
    a = np.where(a_decides, sure, vague)
    b = np.where(a_decides, vague, sure)
    return a, b, y
