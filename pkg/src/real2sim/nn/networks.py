"""Policy-value network and the cycle-GAN generator/discriminator."""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ShapeError

LOG_STD_MIN, LOG_STD_MAX = -5.0, 1.0


def init_uniform_(module: nn.Module, generator: torch.Generator, gain: float = math.sqrt(2.0)) -> None:
    """Scaled-uniform init (variance gain^2 / fan_in), zero biases."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            fan_in = m.weight[0].numel()
            bound = gain * math.sqrt(3.0 / fan_in)
            with torch.no_grad():
                nn.init.uniform_(m.weight, -bound, bound, generator=generator)
                if m.bias is not None:
                    m.bias.zero_()


def zero_(layer: nn.Module) -> None:
    with torch.no_grad():
        for p in layer.parameters():
            p.zero_()


def conv_out(size: int, kernel: int = 4, stride: int = 2, padding: int = 0) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def as_batch(obs, size: int | None = None, dtype=torch.float32) -> torch.Tensor:
    """HxWx3 / NxHxWx3 arrays (or Images) in [0, 1] -> NCHW tensor."""
    if hasattr(obs, "data") and isinstance(getattr(obs, "data"), np.ndarray):
        obs = obs.data
    t = torch.as_tensor(np.asarray(obs), dtype=dtype)
    if t.ndim == 3:
        t = t.unsqueeze(0)
    if t.ndim != 4 or t.shape[-1] != 3:
        raise ShapeError(f"expected (N,) H, W, 3 observations, got {tuple(t.shape)}")
    if size is not None and (t.shape[1] != size or t.shape[2] != size):
        raise ShapeError(f"expected {size}x{size} observations, got {t.shape[1]}x{t.shape[2]}")
    return t.permute(0, 3, 1, 2).contiguous()


def to_hwc(t: torch.Tensor) -> np.ndarray:
    return t.detach().permute(0, 2, 3, 1).contiguous().numpy()


class PolicyNet(nn.Module):
    """Three stride-2 convolutions, a 128-unit trunk, tanh mean, value head.

    At 64x64 input the feature map after the convolutions is 32x6x6 and the
    network has 173,397 parameters.
    """

    def __init__(self, image_size: int = 64, hidden: int = 128, init_log_std: float = -0.5,
                 generator: torch.Generator | None = None):
        super().__init__()
        self.image_size = image_size
        self.conv1 = nn.Conv2d(3, 16, 4, 2)
        self.conv2 = nn.Conv2d(16, 32, 4, 2)
        self.conv3 = nn.Conv2d(32, 32, 4, 2)
        side = conv_out(conv_out(conv_out(image_size)))
        self.trunk = nn.Linear(32 * side * side, hidden)
        self.mean_head = nn.Linear(hidden, 2)
        self.value_head = nn.Linear(hidden, 1)
        self.log_std = nn.Parameter(torch.full((2,), float(init_log_std)))
        init_uniform_(self, generator or torch.Generator().manual_seed(0))
        zero_(self.mean_head)
        zero_(self.value_head)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        x = x - 0.5
        x = F.relu(self.conv1(x))
        x = F.relu(self.conv2(x))
        x = F.relu(self.conv3(x))
        return F.relu(self.trunk(x.flatten(1)))

    def forward(self, x: torch.Tensor):
        if x.ndim != 4 or x.shape[1:] != (3, self.image_size, self.image_size):
            raise ShapeError(f"policy expects N x 3 x {self.image_size} x {self.image_size}, got {tuple(x.shape)}")
        h = self.features(x)
        mean = torch.tanh(self.mean_head(h))
        value = self.value_head(h).squeeze(-1)
        log_std = self.log_std.clamp(LOG_STD_MIN, LOG_STD_MAX).expand_as(mean)
        return mean, log_std, value


def policy_forward(obs, policy: PolicyNet):
    """(mean, log_std, value) for a single observation, as numpy values."""
    dtype = next(policy.parameters()).dtype
    with torch.no_grad():
        mean, log_std, value = policy(as_batch(obs, policy.image_size, dtype))
    return mean[0].numpy(), log_std[0].numpy(), float(value[0])


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv_a = nn.Conv2d(channels, channels, 3, 1, 1)
        self.conv_b = nn.Conv2d(channels, channels, 3, 1, 1)

    def forward(self, x):
        return x + self.conv_b(F.relu(self.conv_a(x)))


class Generator(nn.Module):
    """Encoder (2 stride-2 convs), 2 residual blocks, 2 upsample+conv stages.

    Output is ``(tanh + 1) / 2`` so images stay in [0, 1]. Input side length
    must be divisible by 4.
    """

    def __init__(self, base: int = 16, generator: torch.Generator | None = None):
        super().__init__()
        c = base
        self.enc1 = nn.Conv2d(3, c, 4, 2, 1)
        self.enc2 = nn.Conv2d(c, 2 * c, 4, 2, 1)
        self.res1 = ResidualBlock(2 * c)
        self.res2 = ResidualBlock(2 * c)
        self.dec1 = nn.Conv2d(2 * c, c, 3, 1, 1)
        self.dec2 = nn.Conv2d(c, 3, 3, 1, 1)
        init_uniform_(self, generator or torch.Generator().manual_seed(0))
        # Residual branches start small so each block begins near identity.
        with torch.no_grad():
            self.res1.conv_b.weight.mul_(0.1)
            self.res2.conv_b.weight.mul_(0.1)
            self.dec2.weight.mul_(1 / math.sqrt(2))

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] % 4 or x.shape[3] % 4:
            raise ShapeError(f"generator expects N x 3 x H x W with H, W divisible by 4, got {tuple(x.shape)}")
        h = F.relu(self.enc1(x * 2 - 1))
        h = F.relu(self.enc2(h))
        h = self.res2(self.res1(h))
        h = F.relu(self.dec1(F.interpolate(h, scale_factor=2, mode="nearest")))
        h = self.dec2(F.interpolate(h, scale_factor=2, mode="nearest"))
        return (torch.tanh(h) + 1) / 2


class Discriminator(nn.Module):
    """Three stride-2 convolutions producing a grid of patch logits."""

    def __init__(self, base: int = 16, generator: torch.Generator | None = None):
        super().__init__()
        c = base
        self.conv1 = nn.Conv2d(3, c, 4, 2, 1)
        self.conv2 = nn.Conv2d(c, 2 * c, 4, 2, 1)
        self.conv3 = nn.Conv2d(2 * c, 1, 4, 2, 1)
        init_uniform_(self, generator or torch.Generator().manual_seed(0), gain=1.0)

    def forward(self, x):
        h = F.leaky_relu(self.conv1(x * 2 - 1), 0.2)
        h = F.leaky_relu(self.conv2(h), 0.2)
        return self.conv3(h)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
