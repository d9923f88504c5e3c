"""Latent-space cluster refinement.

k-means proposes centers, a Student-t kernel turns distances into soft
assignments Q, and a sharpened target distribution P drives joint Adam
updates of the encoder and the centers under KL(P||Q). Cluster quality is
scored by silhouette; a k-sweep picks the cluster count.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autoencoder import AutoencoderModel, LatentEmbedding
from .errors import ConfigError, MetricError, PartitionError, TrainingError
from .numerics import (
    AdamState,
    LayerStack,
    RngStream,
    adam_step,
    derive_seed,
    stack_backward,
    stack_forward,
)
from .preprocess import LinkTable

KL_FLOOR = 1e-12


@dataclass
class ClusterModel:
    centers: np.ndarray  # [k, latent_dim]
    hard_assignments: np.ndarray  # [n] int
    q: np.ndarray  # [n, k] soft assignments
    p: np.ndarray  # [n, k] targets
    silhouette: float


@dataclass
class ClusterDataset:
    cluster_id: int
    chemical_ids: list[str]
    vectors: np.ndarray
    links: LinkTable


@dataclass
class ClusterPartition:
    clusters: list[ClusterDataset]


@dataclass
class DecConfig:
    lr: float = 1e-3
    update_interval: int = 20
    tol: float = 1e-3  # stop when < 0.1% of hard assignments change
    max_epochs: int = 1000
    seed: int = 0

    def validate(self) -> None:
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.update_interval < 1:
            raise ConfigError("update_interval must be >= 1")
        if not 0.0 <= self.tol < 1.0:
            raise ConfigError("tol must be in [0, 1)")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")


def _vectors(embedding) -> np.ndarray:
    if hasattr(embedding, "vectors"):
        return np.asarray(embedding.vectors, dtype=np.float64)
    return np.asarray(embedding, dtype=np.float64)


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - centers[None, :, :]
    return (diff * diff).sum(axis=2)


def _plus_plus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[int(rng.integers(n))]]
    while len(centers) < k:
        d2 = _sq_dists(x, np.stack(centers)).min(axis=1)
        total = float(d2.sum())
        if total == 0.0:
            # Fewer distinct points than k: fall back to the first point
            # not already chosen (duplicate centers are harmless).
            chosen = {tuple(c) for c in centers}
            idx = next(
                (i for i in range(n) if tuple(x[i]) not in chosen), 0
            )
            centers.append(x[idx])
            continue
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
        centers.append(x[min(idx, n - 1)])
    return np.stack(centers)


def _lloyd(x: np.ndarray, k: int, max_iter: int, rng) -> tuple[np.ndarray, np.ndarray]:
    n = x.shape[0]
    centers = _plus_plus_init(x, k, rng)
    assignments = np.full(n, -1, dtype=int)
    for _ in range(max_iter):
        d2 = _sq_dists(x, centers)
        new_assign = d2.argmin(axis=1)  # argmin takes the lowest index on ties
        reseeded = False
        for j in range(k):
            if not np.any(new_assign == j):
                own = d2[np.arange(n), new_assign]
                far = int(own.argmax())
                centers[j] = x[far]
                new_assign[far] = j
                reseeded = True
        for j in range(k):
            members = new_assign == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
        if not reseeded and np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
    return centers, assignments


def kmeans(
    embedding, k: int, max_iter: int = 300, seed: int = 0, n_init: int = 10
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding and n_init restarts.

    The restart with the lowest within-cluster sum of squares wins (first
    on ties). Assignment ties break toward the lower cluster index; an
    emptied cluster is re-seeded to the point farthest from its current
    center. Deterministic per seed.
    """
    x = _vectors(embedding)
    n = x.shape[0]
    if k < 1:
        raise ConfigError("k must be >= 1")
    if k > n:
        raise ConfigError(f"k = {k} exceeds the {n} available points")
    if not np.all(np.isfinite(x)):
        raise ConfigError("kmeans requires finite vectors")
    if n_init < 1:
        raise ConfigError("n_init must be >= 1")
    best: tuple[np.ndarray, np.ndarray] | None = None
    best_inertia = np.inf
    for restart in range(n_init):
        rng = RngStream(seed, f"kmeans:{restart}").generator()
        centers, assignments = _lloyd(x, k, max_iter, rng)
        inertia = float(
            ((x - centers[assignments]) ** 2).sum()
        )
        if inertia < best_inertia:
            best_inertia = inertia
            best = (centers, assignments)
    return best


# ---------------------------------------------------------------------------
# DEC distributions
# ---------------------------------------------------------------------------


def soft_assign(z, centers) -> np.ndarray:
    """Student-t similarity (one degree of freedom), row-normalized:
    q_ij = (1 + ||z_i - mu_j||^2)^-1 / sum_j' (...)"""
    z = np.asarray(z, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    if z.shape[1] != centers.shape[1]:
        raise ConfigError("latent dimension mismatch between points and centers")
    s = 1.0 / (1.0 + _sq_dists(z, centers))
    return s / s.sum(axis=1, keepdims=True)


def target_distribution(q: np.ndarray) -> np.ndarray:
    """p_ij proportional to q_ij^2 / f_j with f_j the soft cluster size.

    Squaring emphasizes confident assignments; dividing by f_j guards
    against large clusters swallowing everything. Empty soft columns
    (f_j = 0) contribute nothing.
    """
    q = np.asarray(q, dtype=np.float64)
    f = q.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(f > 0.0, q * q / f, 0.0)
    return w / w.sum(axis=1, keepdims=True)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Row-averaged KL(P||Q), 0 log 0 = 0, Q floored at 1e-12."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ConfigError("kl_divergence: shape mismatch")
    safe_q = np.maximum(q, KL_FLOOR)
    terms = np.where(p > 0.0, p * np.log(np.maximum(p, KL_FLOOR) / safe_q), 0.0)
    return float(terms.sum() / p.shape[0])


def _dec_loss_and_grads(
    z: np.ndarray, centers: np.ndarray, p: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Loss plus gradients wrt z and centers.

    With s_ij = (1 + d2_ij)^-1 and row-mean loss, dL/dd2_ij =
    s_ij (p_ij - q_ij) / n; the chain rule through d2 gives the z and
    center gradients below.
    """
    n = z.shape[0]
    diff = z[:, None, :] - centers[None, :, :]  # [n, k, d]
    s = 1.0 / (1.0 + (diff * diff).sum(axis=2))
    q = s / s.sum(axis=1, keepdims=True)
    loss = kl_divergence(p, q)
    coeff = s * (p - q) / n  # dL/dd2
    grad_z = 2.0 * (coeff[:, :, None] * diff).sum(axis=1)
    grad_centers = -2.0 * (coeff[:, :, None] * diff).sum(axis=0)
    return loss, q, grad_z, grad_centers


def train_dec(
    model: AutoencoderModel, table, k: int, config: DecConfig | None = None
) -> tuple[LatentEmbedding, ClusterModel, list[float]]:
    """Jointly refine encoder weights and cluster centers under KL(P||Q).

    P is re-derived from the current Q every update_interval epochs;
    training stops once the fraction of hard assignments that changed
    between consecutive P-updates drops below tol, or at max_epochs. The
    input model is not modified; the refined embedding is returned.
    """
    config = config or DecConfig()
    config.validate()
    if k < 2:
        raise ConfigError(
            "cluster refinement needs k >= 2 (silhouette is undefined at k = 1)"
        )
    from .autoencoder import encode  # local import to keep module load cheap

    x = np.asarray(table.values if hasattr(table, "values") else table,
                   dtype=np.float64)
    ids = list(table.chemical_ids) if hasattr(table, "chemical_ids") else [
        str(i) for i in range(x.shape[0])
    ]
    encoder = LayerStack(model.stack.layers[: model.n_encoder_layers]).copy()

    def current_z() -> np.ndarray:
        out, caches = stack_forward(x, encoder)
        return out, caches

    z, _ = current_z()
    centers, _ = kmeans(z, k, seed=derive_seed(config.seed, "dec:init"))
    centers = centers.astype(np.float64)

    params = encoder.parameters() + [centers]
    state = AdamState.for_params(params, lr=config.lr)

    p = None
    prev_hard: np.ndarray | None = None
    history: list[float] = []
    for epoch in range(config.max_epochs):
        z, caches = current_z()
        if epoch % config.update_interval == 0:
            q_now = soft_assign(z, centers)
            hard = q_now.argmax(axis=1)
            if prev_hard is not None:
                changed = float(np.mean(hard != prev_hard))
                if changed < config.tol:
                    break
            prev_hard = hard
            p = target_distribution(q_now)
        loss, q, grad_z, grad_centers = _dec_loss_and_grads(z, centers, p)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite KL loss at epoch {epoch}")
        history.append(loss)
        _, enc_grads = stack_backward(grad_z, caches, encoder)
        adam_step(params, enc_grads + [grad_centers], state)

    z, _ = current_z()
    q = soft_assign(z, centers)
    p = target_distribution(q)
    hard = q.argmax(axis=1)
    ss = silhouette_score(z, hard) if len(np.unique(hard)) >= 2 else float("nan")
    embedding = LatentEmbedding(ids, z)
    return embedding, ClusterModel(centers, hard, q, p, ss), history


# ---------------------------------------------------------------------------
# Silhouette and the k sweep
# ---------------------------------------------------------------------------


def silhouette_score(embedding, assignments) -> float:
    """Mean of (b - a) / max(a, b) over points.

    a: mean distance to own cluster (self excluded); b: smallest mean
    distance to another cluster. Singletons and a = b = 0 contribute 0.
    """
    x = _vectors(embedding)
    labels = np.asarray(assignments)
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise MetricError("silhouette requires at least 2 clusters")
    n = x.shape[0]
    dist = np.sqrt(np.maximum(_sq_dists(x, x), 0.0))
    sums = np.stack([dist[:, labels == c].sum(axis=1) for c in uniq], axis=1)
    counts = np.array([(labels == c).sum() for c in uniq])
    own_col = np.searchsorted(uniq, labels)

    scores = np.zeros(n)
    for i in range(n):
        c = own_col[i]
        if counts[c] == 1:
            continue
        a = sums[i, c] / (counts[c] - 1)
        b = min(
            sums[i, j] / counts[j] for j in range(uniq.size) if j != c
        )
        denom = max(a, b)
        scores[i] = (b - a) / denom if denom > 0.0 else 0.0
    return float(scores.mean())


def k_sweep(
    embedding,
    k_range=range(2, 51),
    seed: int = 0,
    k_min_useful: int = 5,
) -> tuple[list[tuple[int, float]], int]:
    """Silhouette curve over k via k-means, plus the selected k.

    Selection prefers the best-scoring local maximum at k >= k_min_useful
    (tiny k tends to win the raw curve by collapsing everything into a
    couple of blobs); ties go to the smaller k; if no candidate exists the
    global maximum wins.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks or ks[0] < 2:
        raise ConfigError("k_sweep needs a range of k values >= 2")
    curve: list[tuple[int, float]] = []
    for k in ks:
        _, assign = kmeans(embedding, k, seed=derive_seed(seed, f"sweep:k={k}"))
        if np.unique(assign).size < 2:
            curve.append((k, float("nan")))
            continue
        curve.append((k, silhouette_score(embedding, assign)))
    scores = {k: s for k, s in curve}

    def neighbor(k_val: int, offset: int) -> float:
        return scores.get(k_val + offset, float("-inf"))

    candidates = [
        (s, k)
        for k, s in curve
        if k >= k_min_useful and s >= neighbor(k, -1) and s >= neighbor(k, 1)
        and np.isfinite(s)
    ]
    if candidates:
        best_score = max(s for s, _ in candidates)
        selected = min(k for s, k in candidates if s == best_score)
    else:
        best_score = max(s for _, s in curve if np.isfinite(s))
        selected = min(k for k, s in curve if s == best_score)
    return curve, selected


# ---------------------------------------------------------------------------
# Partitioning
# ---------------------------------------------------------------------------


def partition_clusters(
    embedding: LatentEmbedding, assignments, links: LinkTable
) -> ClusterPartition:
    """Split drugs and their links into disjoint per-cluster datasets."""
    labels = np.asarray(assignments)
    ids = list(embedding.chemical_ids)
    if labels.shape[0] != len(ids):
        raise PartitionError("assignment count does not match drug count")
    cluster_of = {cid: int(c) for cid, c in zip(ids, labels)}
    per_cluster_links: dict[int, list[tuple[str, str]]] = {}
    for chem, dis in links.records:
        if chem not in cluster_of:
            raise PartitionError(f"link references unassigned drug {chem!r}")
        per_cluster_links.setdefault(cluster_of[chem], []).append((chem, dis))

    vectors = _vectors(embedding)
    clusters = []
    for c in sorted(set(int(v) for v in labels)):
        member = labels == c
        clusters.append(
            ClusterDataset(
                cluster_id=c,
                chemical_ids=[cid for cid, m in zip(ids, member) if m],
                vectors=vectors[member].copy(),
                links=LinkTable(per_cluster_links.get(c, [])),
            )
        )
    return ClusterPartition(clusters)


# ---------------------------------------------------------------------------
# CSV exports
# ---------------------------------------------------------------------------


def save_clusters(chemical_ids: list[str], assignments, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chemical_id", "cluster_id"])
        for cid, c in zip(chemical_ids, np.asarray(assignments)):
            writer.writerow([cid, int(c)])


def save_sweep(curve: list[tuple[int, float]], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "silhouette"])
        for k, s in curve:
            writer.writerow([k, repr(float(s))])
