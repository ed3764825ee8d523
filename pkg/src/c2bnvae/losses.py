"""Training objective terms: reconstruction MSE and the Gaussian KL regularizer.

Reductions: MSE averages over every element (batch x features), which keeps
the term scale-free in feature count. The KL term sums over latent
dimensions and averages over the batch. Log-variances are clamped to
[-10, 10] before exponentiation so the regularizer cannot overflow.
"""

from __future__ import annotations

from .autodiff import Tensor, as_tensor
from .errors import ShapeError

LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0


def mse_loss(x, x_hat) -> Tensor:
    """Mean of squared elementwise differences over all samples and features."""
    a, b = as_tensor(x), as_tensor(x_hat)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mse_loss shape mismatch: {a.data.shape} vs {b.data.shape}")
    return ((a - b) ** 2.0).mean()


def kl_gaussian(mu, logvar) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)): sum over dims, mean over batch."""
    m, lv = as_tensor(mu), as_tensor(logvar)
    if m.data.shape != lv.data.shape:
        raise ShapeError(f"kl_gaussian shape mismatch: {m.data.shape} vs {lv.data.shape}")
    lv = lv.clip(LOGVAR_MIN, LOGVAR_MAX)
    per_sample = (1.0 + lv - m**2.0 - lv.exp()).sum(axis=1) * (-0.5)
    return per_sample.mean()
