"""Shared helpers for the test suite."""

import math

import numpy as np


def t_density(x, df):
    """Student-t probability density, used as a quadrature oracle for the CDF."""
    c = math.exp(math.lgamma((df + 1) / 2) - math.lgamma(df / 2)) / math.sqrt(df * math.pi)
    return c * (1 + x * x / df) ** (-(df + 1) / 2)


def finite_diff_grads(loss_fn, params, h=1e-5):
    """Central finite differences of loss_fn() w.r.t. every parameter entry."""
    grads = {}
    for name, value in params.items():
        g = np.zeros_like(value)
        flat = value.ravel()
        gflat = g.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = loss_fn()
            flat[j] = orig - h
            down = loss_fn()
            flat[j] = orig
            gflat[j] = (up - down) / (2 * h)
        grads[name] = g
    return grads


def max_rel_grad_error(analytic, numeric):
    worst = 0.0
    for name in analytic:
        a, n = analytic[name].ravel(), numeric[name].ravel()
        denom = np.maximum(np.abs(a) + np.abs(n), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def random_simplex(rng, n, dim):
    x = rng.uniform(0.05, 1.0, size=(n, dim))
    return x / x.sum(axis=1, keepdims=True)
