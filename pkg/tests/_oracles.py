"""Slow, obviously-correct reference implementations used only by tests."""
import numpy as np


def auc_all_pairs(scores, labels) -> float:
    """ROC-AUC by counting every (positive, negative) pair; ties get 0.5."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def silhouette_brute(x, labels) -> float:
    """Mean silhouette over all points from explicit pairwise distances.

    Singleton-cluster points score 0 by convention.
    """
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    n = len(x)
    dist = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
    uniq = np.unique(labels)
    scores = np.zeros(n)
    for i in range(n):
        own = labels == labels[i]
        if own.sum() == 1:
            scores[i] = 0.0
            continue
        a = dist[i][own].sum() / (own.sum() - 1)
        b = min(dist[i][labels == c].mean() for c in uniq if c != labels[i])
        scores[i] = (b - a) / max(a, b)
    return float(scores.mean())


def knn_impute_brute(values, mask, numeric, k) -> np.ndarray:
    """Exhaustive masked-kNN imputation mirroring the production contract.

    Distance: Euclidean over mutually observed numeric columns divided by
    the shared count; no shared columns sorts last; ties break by row index.
    """
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    numeric = np.asarray(numeric, dtype=bool)
    n, d = values.shape
    out = values.copy()
    for i in range(n):
        dists = []
        for j in range(n):
            if j == i:
                dists.append((np.inf, j))
                continue
            shared = mask[i] & mask[j] & numeric
            if not shared.any():
                dists.append((np.inf, j))
                continue
            diff = values[i, shared] - values[j, shared]
            dists.append((np.sqrt((diff * diff).sum()) / shared.sum(), j))
        dists.sort()
        for col in range(d):
            if mask[i, col]:
                continue
            donors = [j for _, j in dists if mask[j, col]][:k]
            out[i, col] = np.mean([values[j, col] for j in donors])
    return out


def kl_divergence_brute(p, q) -> float:
    """Row-averaged KL(P||Q) with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    total = 0.0
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            if p[i, j] > 0:
                total += p[i, j] * np.log(p[i, j] / max(q[i, j], 1e-12))
    return total / p.shape[0]
