"""Shared test oracles: central finite differences and gradient comparison."""

import numpy as np


def fd_grad(f, x, h=1e-4):
    """Central-difference gradient of scalar-valued f at x (64-bit, elementwise)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def grad_rel_err(analytic, fd):
    """Max elementwise deviation, normalised by the largest gradient entry."""
    analytic = np.asarray(analytic, dtype=np.float64)
    fd = np.asarray(fd, dtype=np.float64)
    scale = max(float(np.max(np.abs(fd))), float(np.max(np.abs(analytic))), 1e-6)
    return float(np.max(np.abs(analytic - fd))) / scale
