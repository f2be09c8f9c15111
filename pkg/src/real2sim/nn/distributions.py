"""Diagonal Gaussian action distribution with clamp-after-sample."""

from __future__ import annotations

import math

import numpy as np
import torch

LOG_2PI = math.log(2.0 * math.pi)


def gaussian_log_prob(x, mean, log_std):
    """Log density of a diagonal Gaussian, summed over the last axis."""
    if isinstance(x, torch.Tensor):
        z = (x - mean) * torch.exp(-log_std)
        return (-0.5 * z * z - log_std - 0.5 * LOG_2PI).sum(-1)
    z = (np.asarray(x) - mean) * np.exp(-np.asarray(log_std))
    return (-0.5 * z * z - log_std - 0.5 * LOG_2PI).sum(-1)


def gaussian_entropy(log_std):
    """Entropy of a diagonal Gaussian, summed over the last axis."""
    return (log_std + 0.5 * (LOG_2PI + 1.0)).sum(-1)


def sample_raw(mean, log_std, rng: np.random.Generator):
    """Pre-clamp sample ``mean + std * z`` and its log density."""
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    z = rng.standard_normal(mean.shape)
    raw = mean + np.exp(log_std) * z
    return raw, gaussian_log_prob(raw, mean, log_std)


def sample_action(mean, log_std, rng: np.random.Generator):
    """Sample an action in [-1, 1]^2.

    The log-probability is that of the pre-clamp Gaussian sample; clamping
    only limits what the environment receives.
    """
    raw, log_prob = sample_raw(mean, log_std, rng)
    return np.clip(raw, -1.0, 1.0), log_prob
