"""Pure numpy implementation of the descent-ensemble kernel.

Each ensemble member draws a fresh field realization plus a starting
point from three RNG streams derived from (master_seed, member_index),
takes one gradient step and records the value before and after. The
compiled extension in _kernels.pyx consumes identical streams, so the
two backends differ only in floating-point summation order.
"""

import numpy as np


def member_bitgens(master_seed, index):
    """The three PCG64 bit generators for one ensemble member, in draw
    order: frequencies Z, weights w, starting point x0."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return [np.random.PCG64(child) for child in ss.spawn(3)]


def run_fresh_ensemble(N, M, eta, num_points, master_seed, box):
    """Single gradient step on num_points independent field realizations.

    Returns (phi0, phi1, grad_sq): value at the start point, value after
    the step x1 = x0 - eta * grad, and the squared gradient norm.
    """
    phi0 = np.empty(num_points)
    phi1 = np.empty(num_points)
    grad_sq = np.empty(num_points)
    inv_sqrt_m = 1.0 / np.sqrt(M)
    Z = np.empty((M, N))
    w = np.empty(2 * M)
    for i in range(num_points):
        bg_z, bg_w, bg_x = member_bitgens(master_seed, i)
        np.random.Generator(bg_z).standard_normal(out=Z)
        np.random.Generator(bg_w).standard_normal(out=w)
        wr = w[0::2] * inv_sqrt_m
        wi = w[1::2] * inv_sqrt_m
        x0 = box * (2.0 * np.random.Generator(bg_x).random(N) - 1.0)
        t = Z @ x0
        c = np.cos(t)
        s = np.sin(t)
        phi0[i] = wr @ c - wi @ s
        g = -((wr * s + wi * c) @ Z)
        grad_sq[i] = g @ g
        t1 = Z @ (x0 - eta * g)
        phi1[i] = wr @ np.cos(t1) - wi @ np.sin(t1)
    return phi0, phi1, grad_sq
