"""Seeded PRNG helpers. No global hidden state: every consumer gets an
explicit numpy Generator (PCG64) derived from a config seed."""

import numpy as np


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def trunc_normal(rng, shape, std=0.02, dtype=np.float32, bound=2.0):
    """Normal(0, std) truncated to +-bound*std, by resampling."""
    out = rng.standard_normal(size=shape, dtype=np.float32)
    out *= np.float32(std)
    limit = np.float32(bound * std)
    flat = out.reshape(-1)
    idx = np.flatnonzero(np.abs(flat) > limit)
    while idx.size:
        draw = rng.standard_normal(size=idx.size, dtype=np.float32) * np.float32(std)
        flat[idx] = draw
        idx = idx[np.abs(draw) > limit]
    return out if dtype == np.float32 else out.astype(dtype)
