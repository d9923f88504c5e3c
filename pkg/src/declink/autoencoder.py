"""Symmetric dimension-halving autoencoder over drug feature vectors.

The encoder repeatedly halves the width until one more halving would drop
below the latent size, then maps to the latent dimension; the decoder is
an exact mirror. Trained with Adam on mean squared reconstruction error,
with patience-based early stopping and best-parameter restore.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, TrainingError
from .numerics import (
    Activation,
    AdamState,
    DenseLayer,
    EarlyStopper,
    LayerStack,
    RngStream,
    adam_step,
    dense_forward,
    init_dense,
    mse_loss,
    stack_backward,
    stack_forward,
)

CHECKPOINT_FORMAT = "declink-autoencoder-v1"


@dataclass
class AutoencoderSpec:
    input_dim: int
    latent_dim: int
    encoder_dims: list[int]
    decoder_dims: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.decoder_dims:
            self.decoder_dims = list(reversed(self.encoder_dims))

    def validate(self) -> None:
        dims = self.encoder_dims
        if not dims or dims[0] != self.input_dim or dims[-1] != self.latent_dim:
            raise ConfigError("encoder_dims must run input_dim -> latent_dim")
        strictly_down = all(b < a for a, b in zip(dims, dims[1:]))
        # A single equal-width layer is allowed for lossless toy models.
        if not strictly_down and not (len(dims) == 2 and dims[0] == dims[1]):
            raise ConfigError(f"encoder widths must strictly decrease, got {dims}")
        if self.decoder_dims != list(reversed(dims)):
            raise ConfigError("decoder_dims must mirror encoder_dims")
        if min(dims) < 1:
            raise ConfigError("layer widths must be positive")


@dataclass
class TrainConfig:
    lr: float = 1e-3
    max_epochs: int = 1000
    patience: int = 10
    batch_size: int | None = None  # None: full batch up to 4096 rows, else 256
    seed: int = 0

    def validate(self) -> None:
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass
class LatentEmbedding:
    chemical_ids: list[str]
    vectors: np.ndarray  # [n, latent_dim]


@dataclass
class AutoencoderModel:
    spec: AutoencoderSpec
    stack: LayerStack  # encoder layers followed by decoder layers
    n_encoder_layers: int

    @property
    def encoder(self) -> LayerStack:
        return LayerStack(self.stack.layers[: self.n_encoder_layers])

    @property
    def decoder(self) -> LayerStack:
        return LayerStack(self.stack.layers[self.n_encoder_layers :])


def build_halving_architecture(input_dim: int, latent_dim: int) -> AutoencoderSpec:
    """Halve (floor) while the next half stays above latent_dim, then land
    on latent_dim. latent_dim must be strictly smaller than input_dim."""
    if latent_dim >= input_dim:
        raise ConfigError(
            f"latent_dim {latent_dim} must be smaller than input_dim {input_dim}"
        )
    if latent_dim < 1:
        raise ConfigError("latent_dim must be positive")
    dims = [input_dim]
    while dims[-1] // 2 > latent_dim:
        dims.append(dims[-1] // 2)
    dims.append(latent_dim)
    spec = AutoencoderSpec(input_dim, latent_dim, dims)
    spec.validate()
    return spec


def build_model(spec: AutoencoderSpec, seed: int) -> AutoencoderModel:
    """ReLU on every layer except the final decoder output (Identity), so
    z-scored targets with negative values stay reachable."""
    spec.validate()
    layers: list[DenseLayer] = []
    enc = spec.encoder_dims
    for i in range(len(enc) - 1):
        layers.append(
            init_dense(enc[i], enc[i + 1], Activation.RELU,
                       RngStream(seed, f"ae:init:enc{i}"))
        )
    dec = spec.decoder_dims
    for i in range(len(dec) - 1):
        act = Activation.IDENTITY if i == len(dec) - 2 else Activation.RELU
        layers.append(
            init_dense(dec[i], dec[i + 1], act, RngStream(seed, f"ae:init:dec{i}"))
        )
    return AutoencoderModel(spec, LayerStack(layers), len(enc) - 1)


def _table_values(table) -> np.ndarray:
    if hasattr(table, "values"):
        if hasattr(table, "missing_mask") and not bool(table.missing_mask.all()):
            raise DataError("autoencoder requires a fully observed table")
        return np.asarray(table.values, dtype=np.float64)
    return np.asarray(table, dtype=np.float64)


def train_autoencoder(
    table, spec: AutoencoderSpec, config: TrainConfig
) -> tuple[AutoencoderModel, list[float]]:
    """Minimize MSE reconstruction with Adam.

    One history entry per epoch (full-data loss after that epoch's
    updates). Stops at max_epochs or after `patience` consecutive epochs
    without the best loss improving by more than 1e-6; the best-loss
    parameters are restored before returning.
    """
    config.validate()
    x = _table_values(table)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ConfigError(
            f"data width {x.shape[1] if x.ndim == 2 else '?'} does not match "
            f"spec input_dim {spec.input_dim}"
        )
    model = build_model(spec, config.seed)
    params = model.stack.parameters()
    state = AdamState.for_params(params, lr=config.lr)
    stopper = EarlyStopper(patience=config.patience, min_delta=1e-6, mode="min")
    n = x.shape[0]
    batch = config.batch_size if config.batch_size else (n if n <= 4096 else 256)
    shuffle_rng = RngStream(config.seed, "ae:shuffle").generator()

    history: list[float] = []
    best_params: list[np.ndarray] | None = None
    for epoch in range(config.max_epochs):
        order = shuffle_rng.permutation(n) if batch < n else np.arange(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            out, caches = stack_forward(x[idx], model.stack)
            _, grad = mse_loss(out, x[idx])
            _, grads = stack_backward(grad, caches, model.stack)
            try:
                adam_step(params, grads, state)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch}: {exc}") from None
        recon, _ = stack_forward(x, model.stack)
        loss, _ = mse_loss(recon, x)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite reconstruction loss at epoch {epoch}")
        history.append(loss)
        stop = stopper.update(loss)
        if stopper.best_index == epoch:
            best_params = [p.copy() for p in params]
        if stop:
            break
    if best_params is not None:
        model.stack.set_parameters(best_params)
    return model, history


def encode(model: AutoencoderModel, table) -> LatentEmbedding:
    """Deterministic forward pass through the encoder half."""
    x = _table_values(table)
    if x.shape[1] != model.spec.input_dim:
        raise ConfigError(
            f"data width {x.shape[1]} does not match model input_dim "
            f"{model.spec.input_dim}"
        )
    out = x
    for layer in model.stack.layers[: model.n_encoder_layers]:
        out, _ = dense_forward(out, layer)
    ids = list(table.chemical_ids) if hasattr(table, "chemical_ids") else [
        str(i) for i in range(x.shape[0])
    ]
    return LatentEmbedding(ids, out)


def reconstruct(model: AutoencoderModel, table) -> np.ndarray:
    x = _table_values(table)
    out, _ = stack_forward(x, model.stack)
    return out


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_checkpoint(model: AutoencoderModel, path) -> None:
    """Versioned npz: JSON header plus raw float64 parameter arrays, so a
    save/load cycle is bit-exact."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "input_dim": model.spec.input_dim,
        "latent_dim": model.spec.latent_dim,
        "encoder_dims": model.spec.encoder_dims,
        "n_encoder_layers": model.n_encoder_layers,
        "activations": [layer.activation.value for layer in model.stack.layers],
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for i, layer in enumerate(model.stack.layers):
        arrays[f"w{i:03d}"] = layer.weights
        arrays[f"b{i:03d}"] = layer.bias
    np.savez(path, **arrays)


def load_checkpoint(path) -> AutoencoderModel:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ConfigError(f"unrecognized checkpoint format in {path}")
        spec = AutoencoderSpec(
            meta["input_dim"], meta["latent_dim"], list(meta["encoder_dims"])
        )
        layers = []
        for i, act in enumerate(meta["activations"]):
            layers.append(
                DenseLayer(
                    weights=data[f"w{i:03d}"].copy(),
                    bias=data[f"b{i:03d}"].copy(),
                    activation=Activation(act),
                )
            )
    return AutoencoderModel(spec, LayerStack(layers), meta["n_encoder_layers"])


def export_embeddings(embedding: LatentEmbedding, path) -> None:
    """embeddings.csv: chemical_id,z_0..z_{L-1}; repr() keeps full precision."""
    width = embedding.vectors.shape[1]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chemical_id"] + [f"z_{j}" for j in range(width)])
        for cid, row in zip(embedding.chemical_ids, embedding.vectors):
            writer.writerow([cid] + [repr(float(v)) for v in row])
