"""Conditional VAE with class-conditional batch normalization.

The class label conditions the model twice: it is one-hot concatenated onto
the encoder input and onto the latent code fed to the decoder, and it
selects the per-class affine pair inside each conditional normalization
layer. Setting ``use_cbn=False`` swaps the conditional layers for plain
batch normalization of the same width, which is the standard-CVAE baseline.

Layout (defaults reproduce the published shapes when feature_dim=123,
num_classes=5): encoder runs feature+label through four LeakyReLU hidden
layers, one width-60 normalization after the last activation, then twin
linear heads emit the posterior mean and log-variance. The decoder mirrors
it from latent+label and squashes its output to (0,1) with a logistic,
matching min-max scaled features.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .autodiff import Tensor, as_tensor, concat
from .costing import LinearSpec, NormSpec
from .errors import DataError, LabelError, ShapeError, TrainingDiverged
from .losses import LOGVAR_MAX, LOGVAR_MIN, kl_gaussian, mse_loss
from .nn import BatchNorm1d, CondBatchNorm1d, Linear, leaky_relu, one_hot
from .optim import Adam

Array = np.ndarray

CHECKPOINT_FORMAT_VERSION = 1

CBN_PLACEMENTS = ("decoder_only", "encoder_and_decoder")


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int
    num_classes: int
    latent_dim: int = 32
    hidden_widths: tuple[int, ...] = (60, 60, 60, 60)
    lr: float = 1e-4
    epochs: int = 120
    batch_size: int = 128
    kl_weight: float = 1.0
    cbn_placement: str = "encoder_and_decoder"
    use_cbn: bool = True
    leaky_slope: float = 0.01
    norm_eps: float = 1e-5
    norm_momentum: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(self.hidden_widths))
        for name in ("feature_dim", "num_classes", "latent_dim", "batch_size"):
            if getattr(self, name) < 1:
                raise ShapeError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
            raise ShapeError(f"hidden_widths must be nonempty positive, got {self.hidden_widths}")
        if self.epochs < 0:
            raise ShapeError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0:
            raise ShapeError(f"lr must be positive, got {self.lr}")
        if self.cbn_placement not in CBN_PLACEMENTS:
            raise ShapeError(f"cbn_placement must be one of {CBN_PLACEMENTS}, "
                             f"got {self.cbn_placement!r}")

    @property
    def encoder_input_dim(self) -> int:
        return self.feature_dim + self.num_classes

    @property
    def decoder_input_dim(self) -> int:
        return self.latent_dim + self.num_classes

    def architecture(self) -> dict[str, list]:
        """Cost-accounting descriptor: one entry per component."""
        widths = self.hidden_widths
        enc: list = [LinearSpec(self.encoder_input_dim, widths[0])]
        enc += [LinearSpec(a, b) for a, b in zip(widths, widths[1:])]
        if self.cbn_placement == "encoder_and_decoder":
            enc.append(NormSpec(widths[-1], self.num_classes if self.use_cbn else 1))
        enc += [LinearSpec(widths[-1], self.latent_dim)] * 2  # twin heads
        dec: list = [LinearSpec(self.decoder_input_dim, widths[0])]
        dec += [LinearSpec(a, b) for a, b in zip(widths, widths[1:])]
        dec.append(NormSpec(widths[-1], self.num_classes if self.use_cbn else 1))
        dec.append(LinearSpec(widths[-1], self.feature_dim))
        return {"encoder": enc, "decoder": dec}

    def to_dict(self) -> dict:
        return {
            "feature_dim": self.feature_dim,
            "num_classes": self.num_classes,
            "latent_dim": self.latent_dim,
            "hidden_widths": list(self.hidden_widths),
            "lr": self.lr,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "kl_weight": self.kl_weight,
            "cbn_placement": self.cbn_placement,
            "use_cbn": self.use_cbn,
            "leaky_slope": self.leaky_slope,
            "norm_eps": self.norm_eps,
            "norm_momentum": self.norm_momentum,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["hidden_widths"] = tuple(d.get("hidden_widths", (60, 60, 60, 60)))
        return cls(**d)


@dataclass
class Checkpoint:
    """All trainable parameters plus running statistics, serializable."""
    config: ModelConfig
    params: dict[str, Array]
    stats: dict[str, Array]
    schema_fingerprint: str
    format_version: int = CHECKPOINT_FORMAT_VERSION

    def __post_init__(self):
        if not self.schema_fingerprint:
            raise DataError("checkpoint schema fingerprint must be non-empty")


class TraceRow(NamedTuple):
    epoch: int
    recon: float
    regu: float
    total: float


def _derive_rngs(seed: int) -> tuple[np.random.Generator, ...]:
    # one stream each for initialization, shuffling and reparameterization noise
    init_ss, shuffle_ss, noise_ss = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(init_ss), np.random.default_rng(shuffle_ss),
            np.random.default_rng(noise_ss))


class C2BNVAE:
    def __init__(self, config: ModelConfig):
        self.config = config
        rng = _derive_rngs(config.seed)[0]
        widths = config.hidden_widths
        c = config.num_classes

        def norm_layer(width: int):
            if config.use_cbn:
                return CondBatchNorm1d(c, width, eps=config.norm_eps,
                                       momentum=config.norm_momentum)
            return BatchNorm1d(width, eps=config.norm_eps, momentum=config.norm_momentum)

        dims = (config.encoder_input_dim,) + widths
        self.enc_linears = [Linear(a, b, rng) for a, b in zip(dims, dims[1:])]
        self.enc_norm = (norm_layer(widths[-1])
                         if config.cbn_placement == "encoder_and_decoder" else None)
        self.mu_head = Linear(widths[-1], config.latent_dim, rng)
        self.logvar_head = Linear(widths[-1], config.latent_dim, rng)
        dims = (config.decoder_input_dim,) + widths
        self.dec_linears = [Linear(a, b, rng) for a, b in zip(dims, dims[1:])]
        self.dec_norm = norm_layer(widths[-1])
        self.out_layer = Linear(widths[-1], config.feature_dim, rng)

    # ------------------------------------------------------------------
    def _named_layers(self) -> list[tuple[str, object]]:
        named: list[tuple[str, object]] = []
        named += [(f"enc.lin{i}", layer) for i, layer in enumerate(self.enc_linears)]
        if self.enc_norm is not None:
            named.append(("enc.norm", self.enc_norm))
        named += [("enc.mu", self.mu_head), ("enc.logvar", self.logvar_head)]
        named += [(f"dec.lin{i}", layer) for i, layer in enumerate(self.dec_linears)]
        named += [("dec.norm", self.dec_norm), ("dec.out", self.out_layer)]
        return named

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        for _, layer in self._named_layers():
            out.extend(layer.parameters())
        return out

    def named_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, layer in self._named_layers():
            if isinstance(layer, Linear):
                out[f"{name}.W"] = layer.weights
                out[f"{name}.b"] = layer.bias
            else:
                out[f"{name}.gamma"] = layer.gamma
                out[f"{name}.beta"] = layer.beta
        return out

    def named_stats(self) -> dict[str, Array]:
        out: dict[str, Array] = {}
        for name, layer in self._named_layers():
            if isinstance(layer, CondBatchNorm1d):
                out[f"{name}.running_mean"] = layer.running_mean
                out[f"{name}.running_var"] = layer.running_var
        return out

    # ------------------------------------------------------------------
    def _check_labels(self, labels: Array, batch: int) -> Array:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (batch,):
            raise ShapeError(f"labels shape {labels.shape} does not match batch {batch}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.config.num_classes):
            raise LabelError(f"labels must lie in [0, {self.config.num_classes})")
        return labels

    def encode(self, x, labels: Array, training: bool = False) -> tuple[Tensor, Tensor]:
        t = as_tensor(x)
        if t.data.ndim != 2 or t.data.shape[1] != self.config.feature_dim:
            raise ShapeError(f"encoder expects [b x {self.config.feature_dim}] features, "
                             f"got {t.data.shape}")
        labels = self._check_labels(labels, t.data.shape[0])
        h = concat([t, Tensor(one_hot(labels, self.config.num_classes))], axis=1)
        for lin in self.enc_linears:
            h = leaky_relu(lin(h), self.config.leaky_slope)
        if self.enc_norm is not None:
            h = self._apply_norm(self.enc_norm, h, labels, training)
        mu = self.mu_head(h)
        logvar = self.logvar_head(h).clip(LOGVAR_MIN, LOGVAR_MAX)
        return mu, logvar

    def decode(self, z, labels: Array, training: bool = False) -> Tensor:
        t = as_tensor(z)
        if t.data.ndim != 2 or t.data.shape[1] != self.config.latent_dim:
            raise ShapeError(f"decoder expects [b x {self.config.latent_dim}] latents, "
                             f"got {t.data.shape}")
        labels = self._check_labels(labels, t.data.shape[0])
        h = concat([t, Tensor(one_hot(labels, self.config.num_classes))], axis=1)
        for lin in self.dec_linears:
            h = leaky_relu(lin(h), self.config.leaky_slope)
        h = self._apply_norm(self.dec_norm, h, labels, training)
        return self.out_layer(h).sigmoid()

    @staticmethod
    def _apply_norm(layer, h: Tensor, labels: Array, training: bool) -> Tensor:
        if isinstance(layer, BatchNorm1d):
            return layer(h, training)
        return layer(h, labels, training)

    def loss(self, x, x_hat, mu, logvar) -> tuple[Tensor, Tensor, Tensor]:
        recon = mse_loss(x, x_hat)
        regu = kl_gaussian(mu, logvar)
        total = recon + self.config.kl_weight * regu
        return total, recon, regu

    # ------------------------------------------------------------------
    def to_checkpoint(self, schema_fingerprint: str) -> Checkpoint:
        params = {k: v.data.copy() for k, v in self.named_parameters().items()}
        stats = {k: v.copy() for k, v in self.named_stats().items()}
        return Checkpoint(config=self.config, params=params, stats=stats,
                          schema_fingerprint=schema_fingerprint)

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "C2BNVAE":
        model = cls(ckpt.config)
        named = model.named_parameters()
        if set(named) != set(ckpt.params):
            raise DataError("checkpoint parameters do not match the configured architecture")
        for name, tensor in named.items():
            value = np.asarray(ckpt.params[name], dtype=np.float64)
            if value.shape != tensor.data.shape:
                raise DataError(f"checkpoint parameter {name} has shape {value.shape}, "
                                f"expected {tensor.data.shape}")
            tensor.data = value.copy()
        if set(model.named_stats()) != set(ckpt.stats):
            raise DataError("checkpoint statistics do not match the configured architecture")
        for layer_name, layer in model._named_layers():
            if not isinstance(layer, CondBatchNorm1d):
                continue
            for attr in ("running_mean", "running_var"):
                value = np.asarray(ckpt.stats[f"{layer_name}.{attr}"], dtype=np.float64)
                if value.shape != (layer.width,):
                    raise DataError(f"checkpoint statistic {layer_name}.{attr} has shape "
                                    f"{value.shape}, expected {(layer.width,)}")
                setattr(layer, attr, value.copy())
        return model


def reparameterize_t(mu: Tensor, logvar: Tensor, rng: np.random.Generator) -> Tensor:
    """z = mu + exp(logvar / 2) * standard normal noise, on the tape."""
    if mu.data.shape != logvar.data.shape:
        raise ShapeError(f"reparameterize shape mismatch: {mu.data.shape} vs {logvar.data.shape}")
    sigma = (logvar.clip(LOGVAR_MIN, LOGVAR_MAX) * 0.5).exp()
    noise = rng.standard_normal(mu.data.shape)
    return mu + sigma * Tensor(noise)


def reparameterize(mu: Array, logvar: Array, rng: np.random.Generator) -> Array:
    return reparameterize_t(as_tensor(mu), as_tensor(logvar), rng).data


def fallback_fingerprint(config: ModelConfig) -> str:
    """Stable stand-in digest for datasets that carry no encoding schema."""
    text = f"unschema:{config.feature_dim}:{config.num_classes}"
    return hashlib.sha256(text.encode()).hexdigest()


def train(dataset, config: ModelConfig,
          schema_fingerprint: str | None = None) -> tuple[Checkpoint, list[TraceRow]]:
    """Train on an encoded dataset; returns the checkpoint and per-epoch trace.

    ``dataset`` needs ``features`` ([n x feature_dim], entries in [0,1]) and
    ``labels`` ([n], ints below num_classes); an attached ``schema`` supplies
    the checkpoint fingerprint unless one is passed explicitly.
    """
    features = np.asarray(dataset.features, dtype=np.float64)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    n = features.shape[0]
    if n == 0:
        raise DataError("cannot train on an empty dataset")
    if n < 2:
        raise DataError("training needs at least 2 rows (batch statistics)")
    if features.ndim != 2 or features.shape[1] != config.feature_dim:
        raise ShapeError(f"dataset features are {features.shape}, "
                         f"expected [n x {config.feature_dim}]")
    if labels.min() < 0 or labels.max() >= config.num_classes:
        raise LabelError(f"dataset labels must lie in [0, {config.num_classes})")

    if schema_fingerprint is None:
        schema = getattr(dataset, "schema", None)
        schema_fingerprint = (schema.fingerprint if schema is not None
                              else fallback_fingerprint(config))

    model = C2BNVAE(config)
    _, shuffle_rng, noise_rng = _derive_rngs(config.seed)
    optimizer = Adam(model.parameters(), lr=config.lr)
    trace: list[TraceRow] = []
    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        sums = np.zeros(3)
        seen = 0
        for batch_index, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start:start + config.batch_size]
            if idx.size < 2:
                continue  # a singleton batch has undefined batch variance
            xb = Tensor(features[idx])
            yb = labels[idx]
            mu, logvar = model.encode(xb, yb, training=True)
            z = reparameterize_t(mu, logvar, noise_rng)
            x_hat = model.decode(z, yb, training=True)
            total, recon, regu = model.loss(xb, x_hat, mu, logvar)
            if not np.isfinite(total.data):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}")
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            sums += idx.size * np.array([recon.item(), regu.item(), total.item()])
            seen += idx.size
        if seen == 0:
            raise DataError("every batch was skipped; increase the dataset size")
        trace.append(TraceRow(epoch, *(sums / seen)))
    return model.to_checkpoint(schema_fingerprint), trace


def generate(label: int, n: int, checkpoint: Checkpoint,
             rng: np.random.Generator) -> Array:
    """Draw n rows for one class: z ~ N(0, I) decoded in evaluation mode."""
    if n < 1:
        raise ShapeError(f"n must be >= 1, got {n}")
    config = checkpoint.config
    if not 0 <= label < config.num_classes:
        raise LabelError(f"label {label} out of range for {config.num_classes} classes")
    model = C2BNVAE.from_checkpoint(checkpoint)
    z = rng.standard_normal((n, config.latent_dim))
    labels = np.full(n, label, dtype=np.int64)
    return model.decode(z, labels, training=False).data


def encode_arrays(x: Array, labels: Array, model: C2BNVAE,
                  training: bool = False) -> tuple[Array, Array]:
    mu, logvar = model.encode(np.asarray(x, dtype=np.float64), labels, training)
    return mu.data, logvar.data


def decode_arrays(z: Array, labels: Array, model: C2BNVAE,
                  training: bool = False) -> Array:
    return model.decode(np.asarray(z, dtype=np.float64), labels, training).data
