"""Dense layers, activations and (conditional) batch normalization.

Layers operate on autodiff ``Tensor``s so a single forward pass records the
whole tape; the ``*_forward`` module functions are array-in/array-out
conveniences over the same code paths.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, as_tensor
from .errors import LabelError, ShapeError

Array = np.ndarray


def he_init(fan_in: int, shape: tuple[int, ...], rng: np.random.Generator) -> Array:
    """Zero-mean normal draw with variance 2/fan_in (He initialization)."""
    if fan_in < 1:
        raise ShapeError(f"fan_in must be >= 1, got {fan_in}")
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def leaky_relu(x, slope: float = 0.01):
    """Elementwise max(x, slope*x); subgradient at 0 is taken as 1."""
    if not 0.0 <= slope < 1.0:
        raise ShapeError(f"leaky_relu slope must lie in [0, 1), got {slope}")
    t = as_tensor(x)
    mask = np.where(t.data >= 0.0, 1.0, slope)

    def backward(g, a=t, m=mask):
        if a.requires_grad:
            a._accumulate(g * m)

    out = Tensor._op(t.data * mask, (t,), backward)
    return out if isinstance(x, Tensor) else out.data


def one_hot(labels: Array, num_classes: int) -> Array:
    """Label indices -> one-hot rows; validates the range."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        bad = labels[(labels < 0) | (labels >= num_classes)][0]
        raise LabelError(f"label {bad} out of range for {num_classes} classes")
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


class Linear:
    """Affine map y = xW + b with He-initialized weights and zero bias."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weights = Tensor(he_init(in_dim, (in_dim, out_dim), rng), requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x) -> Tensor:
        t = as_tensor(x)
        if t.data.ndim != 2 or t.data.shape[1] != self.in_dim:
            raise ShapeError(
                f"linear layer expects input [b x {self.in_dim}], got {t.data.shape}"
            )
        return t @ self.weights + self.bias

    def parameters(self) -> list[Tensor]:
        return [self.weights, self.bias]


def linear_forward(x: Array, layer: Linear) -> Array:
    return layer(np.asarray(x, dtype=np.float64)).data


class CondBatchNorm1d:
    """Batch normalization whose affine pair (gamma_i, beta_i) is picked per row
    by the row's class label.

    Batch statistics are pooled over the whole mini-batch (all classes
    together); only the affine transform is class-indexed. Variances are
    population (divide by b). Running statistics follow an exponential
    moving average with the given momentum and replace batch statistics in
    evaluation mode.
    """

    def __init__(self, num_classes: int, width: int,
                 eps: float = 1e-5, momentum: float = 0.1):
        if num_classes < 1 or width < 1:
            raise ShapeError("num_classes and width must be >= 1")
        if eps <= 0:
            raise ShapeError(f"eps must be positive, got {eps}")
        if not 0.0 < momentum < 1.0:
            raise ShapeError(f"momentum must lie in (0, 1), got {momentum}")
        self.num_classes = num_classes
        self.width = width
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones((num_classes, width)), requires_grad=True)
        self.beta = Tensor(np.zeros((num_classes, width)), requires_grad=True)
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)

    def parameters(self) -> list[Tensor]:
        return [self.gamma, self.beta]

    def _validate(self, t: Tensor, labels: Array) -> Array:
        if t.data.ndim != 2 or t.data.shape[1] != self.width:
            raise ShapeError(f"expected input [b x {self.width}], got {t.data.shape}")
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (t.data.shape[0],):
            raise ShapeError(
                f"labels shape {labels.shape} does not match batch of {t.data.shape[0]}"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            bad = labels[(labels < 0) | (labels >= self.num_classes)][0]
            raise LabelError(f"label {bad} out of range for {self.num_classes} classes")
        return labels

    def __call__(self, x, labels: Array, training: bool) -> Tensor:
        t = as_tensor(x)
        labels = self._validate(t, labels)
        b = t.data.shape[0]
        if training:
            if b < 2:
                raise ShapeError("training-mode normalization needs a batch of >= 2 "
                                 "(variance of a single sample is undefined)")
            mu = t.mean(axis=0, keepdims=True)
            var = ((t - mu) ** 2.0).mean(axis=0, keepdims=True)
            # running statistics track the batch values, outside the tape
            self.running_mean = ((1.0 - self.momentum) * self.running_mean
                                 + self.momentum * mu.data[0])
            self.running_var = ((1.0 - self.momentum) * self.running_var
                                + self.momentum * var.data[0])
            normalized = (t - mu) * ((var + self.eps) ** -0.5)
        else:
            normalized = ((t - self.running_mean)
                          * ((self.running_var + self.eps) ** -0.5))
        gamma_rows = self.gamma.take_rows(labels)
        beta_rows = self.beta.take_rows(labels)
        return gamma_rows * normalized + beta_rows


class BatchNorm1d(CondBatchNorm1d):
    """Plain batch normalization: one shared (gamma, beta) pair for all rows.

    Implemented as the single-class degenerate case of the conditional layer,
    so the two transforms coincide by construction when every class bank of
    the conditional layer holds identical parameters.
    """

    def __init__(self, width: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__(1, width, eps=eps, momentum=momentum)

    def __call__(self, x, training: bool) -> Tensor:  # type: ignore[override]
        t = as_tensor(x)
        labels = np.zeros(t.data.shape[0], dtype=np.int64)
        return super().__call__(t, labels, training)


def cbn_forward(x: Array, labels: Array, bank: CondBatchNorm1d, training: bool) -> Array:
    return bank(np.asarray(x, dtype=np.float64), labels, training).data


def batchnorm_forward(x: Array, params: BatchNorm1d, training: bool) -> Array:
    return params(np.asarray(x, dtype=np.float64), training).data
