"""Central finite-difference checks of autograd gradients.

The finite-difference side only ever calls the forward pass, so it stays
independent of the backward implementation it checks. For float32 checks the
analytic gradients come from the float32 network while the differences are
taken on a float64 copy of the same weights; float32 forward passes are too
noisy to difference at useful step sizes.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .networks import Discriminator, Generator, PolicyNet, ResidualBlock

THRESHOLDS = {torch.float64: 1e-4, torch.float32: 1e-2}
FD_EPS = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


@dataclass
class CheckResult:
    name: str
    dtype: str
    max_rel_err: float
    n_checked: int
    threshold: float

    @property
    def ok(self) -> bool:
        return self.max_rel_err < self.threshold


def check_gradients(name: str, loss_fn: Callable[[], torch.Tensor], tensors: list[torch.Tensor],
                    n_samples: int, rng: np.random.Generator, dtype=torch.float64,
                    numeric_fn: Callable[[], torch.Tensor] | None = None,
                    numeric_tensors: list[torch.Tensor] | None = None,
                    eps: float = FD_EPS) -> CheckResult:
    """Compare autograd against central differences on random entries.

    ``tensors`` are leaves of ``loss_fn`` (parameters and/or inputs). The
    differences are taken on ``numeric_fn``/``numeric_tensors`` when given
    (a float64 twin of the same computation), else on ``loss_fn`` itself.
    Entries whose gradients are both below 1e-3 of the largest sampled
    gradient are compared against that floor instead of themselves.
    """
    numeric_fn = numeric_fn or loss_fn
    numeric_tensors = numeric_tensors or tensors
    loss = loss_fn()
    grads = torch.autograd.grad(loss, tensors)

    sizes = np.array([t.numel() for t in tensors])
    picks = rng.choice(int(sizes.sum()), size=min(n_samples, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    analytic, numeric = [], []
    with torch.no_grad():
        for flat in picks:
            k = int(np.searchsorted(offsets, flat, side="right") - 1)
            idx = int(flat - offsets[k])
            view = numeric_tensors[k].view(-1)
            orig = view[idx].item()
            view[idx] = orig + eps
            up = numeric_fn().item()
            view[idx] = orig - eps
            down = numeric_fn().item()
            view[idx] = orig
            analytic.append(grads[k].reshape(-1)[idx].item())
            numeric.append((up - down) / (2 * eps))
    analytic, numeric = np.array(analytic), np.array(numeric)
    floor = max(1e-3 * float(np.max(np.abs(analytic))), 1e-12)
    err = relative_error(analytic, numeric, floor)
    return CheckResult(name, str(dtype).replace("torch.", ""), float(err.max()), len(picks), THRESHOLDS[dtype])


def _projection_loss(out: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    # Accumulate in float64 so the reduction adds no float32 rounding.
    return (out.double() * weights).sum()


class _Wrap(nn.Module):
    def __init__(self, fn, *mods):
        super().__init__()
        self.fn = fn
        self.mods = nn.ModuleList(mods)

    def forward(self, x):
        return self.fn(x, *self.mods)


def layer_families(seed: int = 0) -> dict[str, tuple[nn.Module, tuple[int, ...]]]:
    """One small module per layer family plus the full networks."""
    g = torch.Generator().manual_seed(seed)

    def lin():
        m = nn.Linear(12, 7)
        nn.init.uniform_(m.weight, -0.5, 0.5, generator=g)
        nn.init.uniform_(m.bias, -0.5, 0.5, generator=g)
        return m

    def conv(stride=2, padding=0, k=4):
        m = nn.Conv2d(3, 5, k, stride, padding)
        nn.init.uniform_(m.weight, -0.3, 0.3, generator=g)
        nn.init.uniform_(m.bias, -0.3, 0.3, generator=g)
        return m

    res = ResidualBlock(3)
    for p in res.parameters():
        nn.init.uniform_(p, -0.3, 0.3, generator=g)
    up_conv = conv(1, 1, 3)
    return {
        "linear": (lin(), (4, 12)),
        "conv": (conv(), (2, 3, 10, 10)),
        "tanh": (_Wrap(lambda x, m: torch.tanh(m(x)), lin()), (4, 12)),
        "relu": (_Wrap(lambda x, m: F.relu(m(x)), lin()), (4, 12)),
        "residual": (res, (2, 3, 8, 8)),
        "upsample": (_Wrap(lambda x, m: m(F.interpolate(x, scale_factor=2, mode="nearest")), up_conv), (2, 3, 5, 5)),
        "policy": (PolicyNet(64, generator=g, init_log_std=-0.3), (2, 3, 64, 64)),
        "generator": (Generator(4, generator=g), (1, 3, 16, 16)),
        "discriminator": (Discriminator(4, generator=g), (2, 3, 16, 16)),
    }


def _randomize_heads(policy: PolicyNet, g: torch.Generator) -> None:
    # The default zero-initialised heads would give trivially zero gradients
    # to everything upstream.
    with torch.no_grad():
        for layer in (policy.mean_head, policy.value_head):
            nn.init.uniform_(layer.weight, -0.2, 0.2, generator=g)
            nn.init.uniform_(layer.bias, -0.2, 0.2, generator=g)


def _loss_closure(module: nn.Module, x: torch.Tensor, w: torch.Tensor):
    if isinstance(module, PolicyNet):
        def forward():
            mean, log_std, value = module(x)
            return _projection_loss(torch.cat([mean, log_std, value[:, None]], dim=1), w)
    else:
        def forward():
            return _projection_loss(module(x), w)
    return forward


def run_suite(dtype=torch.float64, n_samples: int = 200, seed: int = 0) -> list[CheckResult]:
    """Gradient check for every layer family w.r.t. parameters and inputs."""
    rng = np.random.default_rng(seed)
    g = torch.Generator().manual_seed(seed + 1)
    results = []
    for name, (module, in_shape) in layer_families(seed).items():
        if isinstance(module, PolicyNet):
            _randomize_heads(module, g)
        module = module.to(dtype)
        reference = copy.deepcopy(module).double()
        x = torch.rand(in_shape, generator=g, dtype=torch.float64).to(dtype).requires_grad_(True)
        x64 = x.detach().double()
        with torch.no_grad():
            out = module(x)
        n_out = 5 if isinstance(module, PolicyNet) else None
        w = torch.randn((out[0].shape[0], n_out) if n_out else out.shape, generator=g, dtype=torch.float64)

        leaves = list(module.parameters()) + [x]
        ref_leaves = list(reference.parameters()) + [x64]
        results.append(check_gradients(
            name, _loss_closure(module, x, w), leaves, n_samples, rng, dtype,
            numeric_fn=_loss_closure(reference, x64, w), numeric_tensors=ref_leaves))
    return results


def input_jvp_check(seed: int = 0, pixel_eps: float = 1e-3) -> float:
    """Relative error between a one-pixel value change and its linear prediction."""
    g = torch.Generator().manual_seed(seed)
    policy = PolicyNet(64, generator=g).double()
    _randomize_heads(policy, g)
    x = torch.rand(1, 3, 64, 64, generator=g, dtype=torch.float64).requires_grad_(True)
    _, _, value = policy(x)
    (grad,) = torch.autograd.grad(value.sum(), x)
    idx = (0, 1, 30, 33)
    with torch.no_grad():
        x2 = x.detach().clone()
        x2[idx] += pixel_eps
        delta = (policy(x2)[2] - policy(x.detach())[2]).item()
    predicted = grad[idx].item() * pixel_eps
    return abs(delta - predicted) / max(abs(delta), abs(predicted), 1e-30)
