"""Independent reference implementations used as test oracles.

These deliberately avoid the package's code paths: plain loops, explicit
formulas, and a second opinion on every numeric contract they check.
"""

import math

import numpy as np


def mlp_forward_reference(params, obs):
    """Straightforward matrix arithmetic forward pass."""
    h1 = np.tanh(obs @ params.trunk_w1 + params.trunk_b1)
    h2 = np.tanh(h1 @ params.trunk_w2 + params.trunk_b2)
    mean = h2 @ params.head_action_w + params.head_action_b
    value = float(h2 @ params.head_value_w[:, 0] + params.head_value_b[0])
    return mean, value


def gaussian_log_prob_reference(mean, log_std, action):
    total = 0.0
    for m, ls, a in zip(mean, log_std, action):
        sigma = math.exp(ls)
        total += -0.5 * ((a - m) / sigma) ** 2 - ls - 0.5 * math.log(2.0 * math.pi)
    return total


def adam_reference_trajectory(theta0, grad_fn, steps, lr, beta1, beta2, eps):
    """Textbook Adam loop; returns the sequence of iterates."""
    theta = float(theta0)
    m = 0.0
    v = 0.0
    out = []
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
        out.append(theta)
    return out


def curtail_shift_reference(b_fixed, b_curtail, b_shift, t_curtail, t_shift, points):
    """Exhaustive per-hour window scan for the curtail-and-shift response."""
    hours = len(points)
    order = sorted(range(hours), key=lambda h: (-points[h], h))
    curtailed = set(order[: min(t_curtail, hours)])
    demand = [0.0] * hours
    for h in range(hours):
        demand[h] += b_fixed[h]
    for h in range(hours):
        if h not in curtailed:
            demand[h] += b_curtail[h]
    for t in range(hours):
        best = None
        for h in range(max(0, t - t_shift), min(hours - 1, t + t_shift) + 1):
            if best is None or points[h] < points[best]:
                best = h
        demand[best] += b_shift[t]
    return np.array(demand), curtailed


def sorted_quantile_reference(values, q):
    """Pure-python sort + linear interpolation quantile."""
    ordered = sorted(float(v) for v in values)
    idx = q * (len(ordered) - 1)
    lo = int(math.floor(idx))
    frac = idx - lo
    if lo + 1 >= len(ordered):
        return ordered[-1]
    return ordered[lo] + frac * (ordered[lo + 1] - ordered[lo])


def two_pass_mean_stderr(values):
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var) / math.sqrt(n)


def finite_difference_gradient(loss_fn, params_arrays, name_index, index, h=1e-5):
    """Central finite difference of loss_fn at one coordinate."""
    def shifted(delta):
        arrays = [a.copy() for a in params_arrays]
        arrays[name_index][index] += delta
        return loss_fn(arrays)

    return (shifted(h) - shifted(-h)) / (2.0 * h)
