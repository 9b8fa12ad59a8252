"""Pure-numpy fallback for the MLP forward/backward kernels.

Mirrors the compiled extension ``metadr._kernels``; ``metadr.kernels`` picks
one of the two at import time.
"""

import numpy as np


def forward_one(w1, b1, w2, b2, wa, ba, wv, bv, x):
    """Single-observation forward pass: (action_mean, value)."""
    h1 = np.tanh(x @ w1 + b1)
    h2 = np.tanh(h1 @ w2 + b2)
    mean = h2 @ wa + ba
    value = float(h2 @ wv[:, 0] + bv[0])
    return mean, value


def forward_batch(w1, b1, w2, b2, wa, ba, wv, bv, xs):
    """Batched forward pass returning hidden activations for backprop.

    Returns (means[B,A], values[B], h1[B,H], h2[B,H]).
    """
    h1 = np.tanh(xs @ w1 + b1)
    h2 = np.tanh(h1 @ w2 + b2)
    means = h2 @ wa + ba
    values = h2 @ wv[:, 0] + bv[0]
    return means, values, h1, h2


def backward_batch(w2, wa, wv, xs, h1, h2, d_means, d_values):
    """Reverse-mode pass from head gradients to parameter gradients.

    d_means is dLoss/d(action means), d_values is dLoss/d(value outputs).
    Returns gradients in parameter order (w1, b1, w2, b2, wa, ba, wv, bv).
    """
    d_wa = h2.T @ d_means
    d_ba = d_means.sum(axis=0)
    d_wv = (h2.T @ d_values)[:, None]
    d_bv = np.array([d_values.sum()])
    d_h2 = d_means @ wa.T + d_values[:, None] * wv[:, 0]
    d_z2 = d_h2 * (1.0 - h2 * h2)
    d_w2 = h1.T @ d_z2
    d_b2 = d_z2.sum(axis=0)
    d_h1 = d_z2 @ w2.T
    d_z1 = d_h1 * (1.0 - h1 * h1)
    d_w1 = xs.T @ d_z1
    d_b1 = d_z1.sum(axis=0)
    return d_w1, d_b1, d_w2, d_b2, d_wa, d_ba, d_wv, d_bv
