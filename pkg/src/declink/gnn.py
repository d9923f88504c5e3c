"""Bipartite link predictor: per-relation mean-aggregation message
passing plus an MLP edge decoder, trained end to end with Adam.

Both node types update synchronously each layer: diseases aggregate their
linked drugs (treat relation) while drugs aggregate their linked diseases
(reverse relation), each with separate self/neighbor weights. Disease
input embeddings are trainable parameters; drug inputs are the frozen
latent vectors. All gradients are derived by hand.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, GraphError, SplitError, TrainingError
from .graph import BipartiteGraph, EdgeSplit, sample_negatives
from .metrics import confusion_metrics, roc_auc
from .numerics import (
    Activation,
    AdamState,
    DenseLayer,
    EarlyStopper,
    RngStream,
    adam_step,
    bce_with_logits,
    dense_backward,
    dense_forward,
    dropout,
    init_dense,
    sigmoid,
)

CHECKPOINT_FORMAT = "declink-gnn-v1"


@dataclass
class ConvWeights:
    w_self: np.ndarray  # [out, in]
    w_neigh: np.ndarray  # [out, in]
    bias: np.ndarray  # [out]


@dataclass
class HeteroLayer:
    treat: ConvWeights  # updates diseases from drug neighbors
    reverse: ConvWeights  # updates drugs from disease neighbors


@dataclass
class GnnModel:
    layers: list[HeteroLayer]
    decoder_hidden: DenseLayer  # [2*hidden -> hidden], relu
    decoder_out: DenseLayer  # [hidden -> 1], identity
    disease_embeddings: np.ndarray  # trainable [n_diseases, in_dim]
    dropout_rate: float
    hidden_dim: int

    def parameters(self) -> list[np.ndarray]:
        params = [self.disease_embeddings]
        for layer in self.layers:
            for conv in (layer.treat, layer.reverse):
                params.extend([conv.w_self, conv.w_neigh, conv.bias])
        params.extend([
            self.decoder_hidden.weights, self.decoder_hidden.bias,
            self.decoder_out.weights, self.decoder_out.bias,
        ])
        return params

    def set_parameters(self, values: list[np.ndarray]) -> None:
        own = self.parameters()
        if len(own) != len(values):
            raise ConfigError("parameter count mismatch")
        for dst, src in zip(own, values):
            dst[...] = src


@dataclass
class GnnTrainConfig:
    lr: float = 1e-3
    weight_decay: float = 0.0
    hidden_dim: int = 128
    n_layers: int = 3
    dropout: float = 0.1
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0

    def validate(self) -> None:
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if self.hidden_dim < 1 or self.n_layers < 1:
            raise ConfigError("hidden_dim and n_layers must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("max_epochs and patience must be >= 1")


# ---------------------------------------------------------------------------
# Model construction
# ---------------------------------------------------------------------------


def _init_conv(in_dim: int, out_dim: int, seed: int, label: str) -> ConvWeights:
    w_self = init_dense(in_dim, out_dim, Activation.RELU,
                        RngStream(seed, f"{label}:self")).weights
    w_neigh = init_dense(in_dim, out_dim, Activation.RELU,
                         RngStream(seed, f"{label}:neigh")).weights
    return ConvWeights(w_self, w_neigh, np.zeros(out_dim))


def build_gnn(graph: BipartiteGraph, config: GnnTrainConfig) -> GnnModel:
    config.validate()
    in_dim = graph.drug_features.shape[1]
    layers = []
    for l in range(config.n_layers):
        d_in = in_dim if l == 0 else config.hidden_dim
        layers.append(HeteroLayer(
            treat=_init_conv(d_in, config.hidden_dim, config.seed, f"gnn:l{l}:treat"),
            reverse=_init_conv(d_in, config.hidden_dim, config.seed, f"gnn:l{l}:rev"),
        ))
    decoder_hidden = init_dense(2 * config.hidden_dim, config.hidden_dim,
                                Activation.RELU,
                                RngStream(config.seed, "gnn:dec:hidden"))
    decoder_out = init_dense(config.hidden_dim, 1, Activation.IDENTITY,
                             RngStream(config.seed, "gnn:dec:out"))
    return GnnModel(
        layers=layers,
        decoder_hidden=decoder_hidden,
        decoder_out=decoder_out,
        disease_embeddings=graph.disease_embeddings.copy(),
        dropout_rate=config.dropout,
        hidden_dim=config.hidden_dim,
    )


# ---------------------------------------------------------------------------
# Message passing
# ---------------------------------------------------------------------------


def _mean_aggregate(
    source_feats: np.ndarray, edges: np.ndarray, n_targets: int
) -> np.ndarray:
    """Mean of source features over incoming edges per target; targets
    with no in-edges aggregate to zero."""
    agg = np.zeros((n_targets, source_feats.shape[1]))
    if edges.shape[0]:
        np.add.at(agg, edges[:, 1], source_feats[edges[:, 0]])
        counts = np.bincount(edges[:, 1], minlength=n_targets).astype(np.float64)
        agg /= np.maximum(counts, 1.0)[:, None]
    return agg


def _scatter_mean_grad(
    grad_agg: np.ndarray, edges: np.ndarray, n_sources: int
) -> np.ndarray:
    """Adjoint of _mean_aggregate: route target gradients back to sources."""
    grad_src = np.zeros((n_sources, grad_agg.shape[1]))
    if edges.shape[0]:
        counts = np.bincount(edges[:, 1], minlength=grad_agg.shape[0]).astype(np.float64)
        scaled = grad_agg / np.maximum(counts, 1.0)[:, None]
        np.add.at(grad_src, edges[:, 0], scaled[edges[:, 1]])
    return grad_src


def sage_conv(
    target_feats: np.ndarray,
    source_feats: np.ndarray,
    edges: np.ndarray,
    weights: ConvWeights,
) -> np.ndarray:
    """h'_v = W_self h_v + W_neigh mean_{u in N(v)} h_u + b (no activation)."""
    target_feats = np.asarray(target_feats, dtype=np.float64)
    source_feats = np.asarray(source_feats, dtype=np.float64)
    if target_feats.shape[1] != weights.w_self.shape[1]:
        raise ConfigError("sage_conv: target width does not match W_self")
    if source_feats.shape[1] != weights.w_neigh.shape[1]:
        raise ConfigError("sage_conv: source width does not match W_neigh")
    agg = _mean_aggregate(source_feats, edges, target_feats.shape[0])
    return target_feats @ weights.w_self.T + agg @ weights.w_neigh.T + weights.bias


def hetero_forward(
    graph: BipartiteGraph, model: GnnModel, training: bool = False, rng=None
) -> tuple[np.ndarray, np.ndarray]:
    """Propagate both node types through every layer (synchronous update,
    ReLU between layers, none after the last). Deterministic: dropout
    lives only in the edge decoder."""
    del training, rng  # inference-identical by design
    (drug_emb, dis_emb), _ = _forward_with_cache(graph, model)
    return drug_emb, dis_emb


def _forward_with_cache(graph: BipartiteGraph, model: GnnModel):
    h_drug = graph.drug_features
    h_dis = model.disease_embeddings
    caches = []
    n_layers = len(model.layers)
    for l, layer in enumerate(model.layers):
        agg_dis = _mean_aggregate(h_drug, graph.edges_treat, graph.n_diseases)
        agg_drug = _mean_aggregate(h_dis, graph.edges_reverse, graph.n_drugs)
        z_dis = h_dis @ layer.treat.w_self.T + agg_dis @ layer.treat.w_neigh.T + layer.treat.bias
        z_drug = h_drug @ layer.reverse.w_self.T + agg_drug @ layer.reverse.w_neigh.T + layer.reverse.bias
        caches.append((h_drug, h_dis, agg_drug, agg_dis, z_drug, z_dis))
        if l < n_layers - 1:
            h_drug = np.maximum(z_drug, 0.0)
            h_dis = np.maximum(z_dis, 0.0)
        else:
            h_drug, h_dis = z_drug, z_dis
    return (h_drug, h_dis), caches


def _backward_through_layers(
    graph: BipartiteGraph,
    model: GnnModel,
    caches,
    grad_drug: np.ndarray,
    grad_dis: np.ndarray,
):
    """Backprop embedding gradients to all conv weights and the disease
    input embeddings. Returns (conv grads flat list, grad wrt disease
    embeddings) with the flat list ordered like GnnModel.parameters()."""
    n_layers = len(model.layers)
    conv_grads: list[list[np.ndarray]] = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        h_drug, h_dis, agg_drug, agg_dis, z_drug, z_dis = caches[l]
        if l < n_layers - 1:
            grad_drug = grad_drug * (z_drug > 0.0)
            grad_dis = grad_dis * (z_dis > 0.0)
        layer = model.layers[l]
        g_treat = [
            grad_dis.T @ h_dis,  # w_self
            grad_dis.T @ agg_dis,  # w_neigh
            grad_dis.sum(axis=0),  # bias
        ]
        g_rev = [
            grad_drug.T @ h_drug,
            grad_drug.T @ agg_drug,
            grad_drug.sum(axis=0),
        ]
        conv_grads[l] = g_treat + g_rev
        new_grad_dis = grad_dis @ layer.treat.w_self + _scatter_mean_grad(
            grad_drug @ layer.reverse.w_neigh, graph.edges_reverse, graph.n_diseases
        )
        new_grad_drug = grad_drug @ layer.reverse.w_self + _scatter_mean_grad(
            grad_dis @ layer.treat.w_neigh, graph.edges_treat, graph.n_drugs
        )
        grad_drug, grad_dis = new_grad_drug, new_grad_dis
    flat = [g for per_layer in conv_grads for g in per_layer]
    return flat, grad_dis


# ---------------------------------------------------------------------------
# Edge decoder
# ---------------------------------------------------------------------------


def decode_edge(
    drug_emb: np.ndarray,
    disease_emb: np.ndarray,
    edges: np.ndarray,
    model: GnnModel,
    training: bool = False,
    rng=None,
) -> np.ndarray:
    """Concatenate [drug || disease] per edge, dense-relu-dropout-dense,
    return raw logits [m]."""
    logits, _ = _decode_with_cache(drug_emb, disease_emb, edges, model, training, rng)
    return logits


def _decode_with_cache(drug_emb, disease_emb, edges, model, training, rng):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.shape[0]:
        if edges[:, 0].max() >= drug_emb.shape[0] or edges[:, 1].max() >= disease_emb.shape[0]:
            raise GraphError("edge index out of range")
        if edges.min() < 0:
            raise GraphError("negative edge index")
    pair = np.concatenate([drug_emb[edges[:, 0]], disease_emb[edges[:, 1]]], axis=1)
    hidden, cache_h = dense_forward(pair, model.decoder_hidden)
    dropped, mask = dropout(hidden, model.dropout_rate, rng, training) if training \
        else (hidden, np.ones_like(hidden))
    out, cache_o = dense_forward(dropped, model.decoder_out)
    return out[:, 0], (edges, pair, cache_h, mask, cache_o)


def _decode_backward(grad_logits, cache, model, n_drugs, n_diseases, training):
    edges, pair, cache_h, mask, cache_o = cache
    g_out = grad_logits[:, None]
    g_dropped, g_w2, g_b2 = dense_backward(g_out, cache_o, model.decoder_out)
    if training and model.dropout_rate > 0.0:
        g_hidden = g_dropped * mask / (1.0 - model.dropout_rate)
    else:
        g_hidden = g_dropped
    g_pair, g_w1, g_b1 = dense_backward(g_hidden, cache_h, model.decoder_hidden)
    h = g_pair.shape[1] // 2
    grad_drug = np.zeros((n_drugs, h))
    grad_dis = np.zeros((n_diseases, h))
    np.add.at(grad_drug, edges[:, 0], g_pair[:, :h])
    np.add.at(grad_dis, edges[:, 1], g_pair[:, h:])
    return grad_drug, grad_dis, [g_w1, g_b1, g_w2, g_b2]


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_f1: float
    val_roc_auc: float


def _loss_and_grads(graph, model, edges, labels, training, drop_rng):
    """Full forward + backward for one labeled edge batch. Returns the
    BCE loss and gradients ordered like model.parameters()."""
    (drug_emb, dis_emb), caches = _forward_with_cache(graph, model)
    logits, dec_cache = _decode_with_cache(
        drug_emb, dis_emb, edges, model, training, drop_rng
    )
    loss, grad_logits = bce_with_logits(logits, labels)
    grad_drug, grad_dis, decoder_grads = _decode_backward(
        grad_logits, dec_cache, model, graph.n_drugs, graph.n_diseases, training
    )
    conv_grads, grad_dis_input = _backward_through_layers(
        graph, model, caches, grad_drug, grad_dis
    )
    grads = [grad_dis_input] + conv_grads + decoder_grads
    return loss, grads


def train_gnn(
    graph: BipartiteGraph, split: EdgeSplit, config: GnnTrainConfig
) -> tuple[GnnModel, list[EpochRecord]]:
    """Full-graph training on BCE over train positives plus equally many
    fresh negatives each epoch. Validation F1/ROC-AUC are computed on the
    fixed val edges per epoch; early stopping watches val ROC-AUC and the
    best-val parameters are restored.

    config.weight_decay shrinks parameters decoupled from the gradient
    path: theta -= lr * wd * theta ahead of each Adam update.
    """
    config.validate()
    if split.val_neg is None or split.test_neg is None:
        raise ConfigError("split has no attached negatives")
    for name, edges in (("train", split.train_pos), ("val", split.val_pos),
                        ("test", split.test_pos)):
        if len(edges) == 0:
            raise SplitError(
                f"{name} split is empty; the cluster has too few links to train"
            )
    model = build_gnn(graph, config)
    params = model.parameters()
    state = AdamState.for_params(
        params, lr=config.lr, weight_decay=config.weight_decay
    )
    stopper = EarlyStopper(patience=config.patience, min_delta=1e-6, mode="max")
    neg_rng = RngStream(config.seed, "gnn:train-negatives").generator()
    drop_rng = RngStream(config.seed, "gnn:dropout").generator()
    fixed_neg = {(int(a), int(b)) for a, b in split.val_neg} | {
        (int(a), int(b)) for a, b in split.test_neg
    }
    val_edges = np.concatenate([split.val_pos, split.val_neg])
    val_labels = np.concatenate([
        np.ones(len(split.val_pos)), np.zeros(len(split.val_neg))
    ])

    history: list[EpochRecord] = []
    best_params: list[np.ndarray] | None = None
    for epoch in range(config.max_epochs):
        train_neg = sample_negatives(
            graph, len(split.train_pos), neg_rng, forbidden=fixed_neg
        )
        edges = np.concatenate([split.train_pos, train_neg])
        labels = np.concatenate([
            np.ones(len(split.train_pos)), np.zeros(len(train_neg))
        ])
        loss, grads = _loss_and_grads(graph, model, edges, labels, True, drop_rng)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite training loss at epoch {epoch}")
        try:
            adam_step(params, grads, state)
        except TrainingError as exc:
            raise TrainingError(f"epoch {epoch}: {exc}") from None

        probs = predict_links(model, graph, val_edges)
        val_auc = roc_auc(probs, val_labels)
        val_f1 = confusion_metrics(probs, val_labels).f1
        history.append(EpochRecord(epoch, float(loss), float(val_f1), float(val_auc)))
        stop = stopper.update(val_auc)
        if stopper.best_index == epoch:
            best_params = [p.copy() for p in params]
        if stop:
            break
    if best_params is not None:
        model.set_parameters(best_params)
    return model, history


def predict_links(model: GnnModel, graph: BipartiteGraph, candidates) -> np.ndarray:
    """Sigmoid link probabilities for candidate (drug_idx, disease_idx)
    pairs; inference mode, no dropout."""
    candidates = np.asarray(candidates, dtype=np.int64).reshape(-1, 2)
    drug_emb, dis_emb = hetero_forward(graph, model, training=False)
    logits = decode_edge(drug_emb, dis_emb, candidates, model, training=False)
    return np.asarray(sigmoid(logits)).reshape(-1)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_gnn_checkpoint(model: GnnModel, path) -> None:
    meta = {
        "format": CHECKPOINT_FORMAT,
        "n_layers": len(model.layers),
        "hidden_dim": model.hidden_dim,
        "dropout_rate": model.dropout_rate,
        "n_diseases": model.disease_embeddings.shape[0],
        "in_dim": model.disease_embeddings.shape[1],
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    arrays["disease_embeddings"] = model.disease_embeddings
    for l, layer in enumerate(model.layers):
        for name, conv in (("treat", layer.treat), ("rev", layer.reverse)):
            arrays[f"l{l}_{name}_self"] = conv.w_self
            arrays[f"l{l}_{name}_neigh"] = conv.w_neigh
            arrays[f"l{l}_{name}_bias"] = conv.bias
    arrays["dec_h_w"] = model.decoder_hidden.weights
    arrays["dec_h_b"] = model.decoder_hidden.bias
    arrays["dec_o_w"] = model.decoder_out.weights
    arrays["dec_o_b"] = model.decoder_out.bias
    np.savez(path, **arrays)


def load_gnn_checkpoint(path) -> GnnModel:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ConfigError(f"unrecognized checkpoint format in {path}")
        layers = []
        for l in range(meta["n_layers"]):
            layers.append(HeteroLayer(
                treat=ConvWeights(
                    data[f"l{l}_treat_self"].copy(),
                    data[f"l{l}_treat_neigh"].copy(),
                    data[f"l{l}_treat_bias"].copy(),
                ),
                reverse=ConvWeights(
                    data[f"l{l}_rev_self"].copy(),
                    data[f"l{l}_rev_neigh"].copy(),
                    data[f"l{l}_rev_bias"].copy(),
                ),
            ))
        model = GnnModel(
            layers=layers,
            decoder_hidden=DenseLayer(
                data["dec_h_w"].copy(), data["dec_h_b"].copy(), Activation.RELU
            ),
            decoder_out=DenseLayer(
                data["dec_o_w"].copy(), data["dec_o_b"].copy(), Activation.IDENTITY
            ),
            disease_embeddings=data["disease_embeddings"].copy(),
            dropout_rate=float(meta["dropout_rate"]),
            hidden_dim=int(meta["hidden_dim"]),
        )
    return model


def save_history(history: list[EpochRecord], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_f1", "val_roc_auc"])
        for rec in history:
            writer.writerow([
                rec.epoch, repr(rec.train_loss), repr(rec.val_f1),
                repr(rec.val_roc_auc),
            ])
