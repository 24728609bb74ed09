"""Independent reference implementations used only by the tests."""

import itertools

import numpy as np


def brute_dft(locations, values, lam, omega):
    """Direct sum ``lam^{d/2} / n sum_j Z_j exp(i s_j . w)`` with Python loops."""
    locations = np.atleast_2d(locations)
    n, d = locations.shape
    total = 0j
    for s, z in zip(locations, values):
        total += z * np.exp(1j * float(np.dot(s, omega)))
    return total * lam ** (d / 2) / n


def brute_q(locations, values, lam, a, g, r, drop_diagonal=False):
    """Double sum over ``(j1, j2)`` for every ``k`` in ``[-a, a]^d``.

    ``lam^{-d} sum_k g(w_k) (lam^d / n^2) sum_{j1, j2} Z_j1 Z_j2 exp(i s_j1.w_k - i s_j2.w_{k+r})``,
    formed as an explicit ``n x n`` matrix per ``k``.
    """
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    values = np.asarray(values, dtype=float)
    n, d = locations.shape
    r = np.asarray(r, dtype=float)
    total = 0j
    for k in itertools.product(range(-a, a + 1), repeat=d):
        w = 2 * np.pi * np.asarray(k, dtype=float) / lam
        wr = 2 * np.pi * (np.asarray(k, dtype=float) + r) / lam
        gk = complex(np.asarray(g(w[None, :])).ravel()[0])
        left = values * np.exp(1j * (locations @ w))
        right = values * np.exp(-1j * (locations @ wr))
        pair = np.outer(left, right)
        if drop_diagonal:
            np.fill_diagonal(pair, 0.0)
        total += gk * pair.sum()
    return total / n ** 2


def composition_sum(gamma: dict, s: int, parts: int) -> complex:
    """``sum_{j1 + ... + j_parts = s} prod gamma_j`` by enumerating all tuples."""
    keys = list(gamma)
    total = 0j
    for combo in itertools.product(keys, repeat=parts):
        if sum(combo) == s:
            total += np.prod([gamma[j] for j in combo])
    return total


def riemann_window_mean(f, lam, a, omega, bandwidth, window):
    """``(2 pi / lam) sum_k W_b(w - w_k) f(w_k)`` on a one-dimensional grid."""
    k = np.arange(-a, a + 1)
    wk = 2 * np.pi * k / lam
    return float(2 * np.pi / lam * np.sum(window((omega - wk) / bandwidth) / bandwidth * f(wk)))
