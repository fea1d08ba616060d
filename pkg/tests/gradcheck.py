"""Finite-difference gradient check shared by the unit and acceptance suites."""

import numpy as np

from oracles import mse_loss, relu_masks
from tunnelnav import nnet

SHAPE = nnet.INPUT_SHAPE


def images(n, seed=0, density=0.05):
    rng = np.random.default_rng(seed)
    x = np.zeros((n, *SHAPE), dtype=np.float32)
    x[:, 0] = (rng.uniform(size=(n, *SHAPE[1:])) < density) * rng.uniform(0.2, 1.0, size=(n, *SHAPE[1:]))
    x[:, 1] = rng.uniform(size=(n, 1, 1))
    x[:, 2] = rng.uniform(size=(n, 1, 1))
    return x


def fd_check(seed, h=1e-3, per_tensor=12):
    """Central differences on a float64 copy, skipping kink-crossing perturbations."""
    rng = np.random.default_rng(seed)
    m = nnet.init_model(seed).astype(np.float64)
    for k in m.params:
        if k.endswith("_b"):
            m.params[k] = rng.normal(0, 0.05, m.params[k].shape)
    x = images(2, seed=seed + 1000, density=0.08).astype(np.float64)
    y = rng.uniform(-0.6, 0.6, 2)
    g, _ = nnet.backward(m, x, y)
    base = relu_masks(m.params, x)
    worst, checked = 0.0, 0
    for k, p in m.params.items():
        flat = p.reshape(-1)
        picks = rng.choice(flat.size, size=min(per_tensor, flat.size), replace=False)
        # always include the largest-gradient entries
        picks = np.unique(np.concatenate([picks, np.argsort(-np.abs(g[k].reshape(-1)))[:4]]))
        for i in picks:
            old = flat[i]
            flat[i] = old + h
            up_mask = relu_masks(m.params, x)
            lp = mse_loss(m.params, x, y, nnet.OUTPUT_SCALE)
            flat[i] = old - h
            dn_mask = relu_masks(m.params, x)
            lm = mse_loss(m.params, x, y, nnet.OUTPUT_SCALE)
            flat[i] = old
            if not (np.array_equal(up_mask, base) and np.array_equal(dn_mask, base)):
                continue
            fd = (lp - lm) / (2 * h)
            an = g[k].reshape(-1)[i]
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-7))
            checked += 1
    return worst, checked
