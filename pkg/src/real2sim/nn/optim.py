"""Gradient computation and Adam updates with non-finite guards."""

from __future__ import annotations

from typing import Iterable

import torch

from ..errors import NumericFaultError


def backward(loss: torch.Tensor) -> None:
    if loss.numel() != 1:
        raise ValueError(f"loss must be a scalar, got shape {tuple(loss.shape)}")
    if not torch.isfinite(loss):
        raise NumericFaultError("loss", f"non-finite loss {loss.item()}")
    loss.backward()


def check_gradients(named_params: Iterable[tuple[str, torch.nn.Parameter]]) -> None:
    for name, p in named_params:
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise NumericFaultError(name)


class Adam:
    """Bias-corrected adaptive-moment optimizer over named parameters.

    Thin wrapper around ``torch.optim.Adam`` that refuses to apply NaN/Inf
    gradients and optionally clips the global gradient norm.
    """

    def __init__(self, named_params, lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8,
                 max_grad_norm: float | None = None):
        self.named_params = [(n, p) for n, p in named_params if p.requires_grad]
        self.max_grad_norm = max_grad_norm
        self.opt = torch.optim.Adam([p for _, p in self.named_params], lr=lr, betas=betas, eps=eps)

    @property
    def lr(self) -> float:
        return self.opt.param_groups[0]["lr"]

    @lr.setter
    def lr(self, value: float) -> None:
        for g in self.opt.param_groups:
            g["lr"] = value

    def zero_grad(self) -> None:
        self.opt.zero_grad(set_to_none=True)

    def step(self) -> None:
        check_gradients(self.named_params)
        if self.max_grad_norm is not None:
            torch.nn.utils.clip_grad_norm_([p for _, p in self.named_params], self.max_grad_norm)
        self.opt.step()

    def state(self, name: str) -> dict:
        """First/second moments and step counter of parameter ``name``."""
        p = dict(self.named_params)[name]
        return self.opt.state.get(p, {})


def optimizer_step(opt: Adam, loss: torch.Tensor) -> None:
    opt.zero_grad()
    backward(loss)
    opt.step()
