"""
GAN Ensemble Lab - Losses
Softplus GAN losses on raw discriminator scores and softmax cross-entropy.

    L_g = softplus(D(x_real)) + softplus(-D(x_fake))
    L_d = softplus(-D(x_real)) + softplus(D(x_fake))

Both are averaged over the minibatch. ``np.logaddexp(0, s)`` evaluates
softplus without overflow for any finite score.
"""
from typing import Tuple

import numpy as np
from scipy.special import expit, log_softmax, softmax

from models.tensor import as_tensor, check_finite
from utils.errors import ShapeError


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _check_scores(d_real: np.ndarray, d_fake: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    d_real = check_finite(as_tensor(d_real, 'd_real'), 'd_real')
    d_fake = check_finite(as_tensor(d_fake, 'd_fake'), 'd_fake')
    if d_real.shape != d_fake.shape:
        raise ShapeError(f"score batches differ: {d_real.shape} vs {d_fake.shape}")
    if d_real.size == 0:
        raise ShapeError("empty score batch")
    return d_real, d_fake


def gan_losses(d_real: np.ndarray, d_fake: np.ndarray) -> Tuple[float, float]:
    """
    Generator and discriminator losses on a minibatch of scores.

    Args:
        d_real: [B x 1] raw scores on real points
        d_fake: [B x 1] raw scores on generated points

    Returns:
        (loss_g, loss_d)
    """
    d_real, d_fake = _check_scores(d_real, d_fake)
    loss_g = float(np.mean(softplus(d_real))) + float(np.mean(softplus(-d_fake)))
    loss_d = float(np.mean(softplus(-d_real))) + float(np.mean(softplus(d_fake)))
    return loss_g, loss_d


def discriminator_loss_grads(d_real: np.ndarray, d_fake: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """dL_d/d(d_real), dL_d/d(d_fake) for the mean-reduced loss."""
    d_real, d_fake = _check_scores(d_real, d_fake)
    n = d_real.shape[0]
    return -expit(-d_real) / n, expit(d_fake) / n


def generator_loss_grad(d_fake: np.ndarray) -> np.ndarray:
    """dL_g/d(d_fake); the real-score term does not depend on the generator."""
    d_fake = check_finite(as_tensor(d_fake, 'd_fake'), 'd_fake')
    return -expit(-d_fake) / d_fake.shape[0]


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Mean softmax cross-entropy and its gradient w.r.t. the logits.

    Args:
        logits: [B x K] scores
        labels: [B] integer class ids

    Returns:
        (loss, dloss/dlogits)
    """
    logits = check_finite(as_tensor(logits, 'logits', ndim=2), 'logits')
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    rows = np.arange(n)
    loss = -float(np.mean(log_softmax(logits, axis=1)[rows, labels]))
    grad = softmax(logits, axis=1)
    grad[rows, labels] -= 1.0
    return loss, grad / n
