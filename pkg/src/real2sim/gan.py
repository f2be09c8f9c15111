"""Unpaired cycle-consistent translation between the real and sim domains.

Domain ``a`` is the (synthetic) real camera, domain ``b`` the simulator.
``G_ab`` maps real to sim (used at inference), ``G_ba`` maps sim to real
(used by the GAN training tasks), ``D_a`` / ``D_b`` score patches of each
domain with a least-squares objective.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, ShapeError
from .nn import checkpoint
from .nn.networks import Discriminator, Generator, as_batch, to_hwc
from .nn.optim import Adam, backward
from .seeding import numpy_rng, torch_generator

log = logging.getLogger(__name__)

PREFIXES = ("gab.", "gba.", "da.", "db.")


@dataclass
class GanConfig:
    image_size: int = 64
    lambda_cycle: float = 10.0
    lambda_identity: float = 0.0
    lr_generator: float = 2e-4
    lr_discriminator: float = 2e-4
    beta1: float = 0.5
    batch_size: int = 16
    iterations: int = 10_000
    buffer_size: int = 50
    base_channels: int = 16
    log_every: int = 100
    # learning rates stay constant up to this fraction of training, then decay linearly to 0
    decay_from: float = 0.5

    def __post_init__(self):
        if self.lambda_cycle <= 0:
            raise ConfigError("lambda_cycle must be > 0")
        if self.image_size % 4:
            raise ConfigError("image_size must be divisible by 4")
        if min(self.batch_size, self.iterations) < 1 or self.buffer_size < 0:
            raise ConfigError("batch_size and iterations must be >= 1, buffer_size >= 0")
        if not 0 <= self.decay_from <= 1:
            raise ConfigError("decay_from must lie in [0, 1]")

    def lr_scale(self, it: int) -> float:
        start = int(self.decay_from * self.iterations)
        if it < start:
            return 1.0
        return (self.iterations - it) / (self.iterations - start)


def cycle_loss(x: torch.Tensor, g_fwd, g_bwd) -> torch.Tensor:
    """Mean absolute reconstruction error of ``x -> g_fwd -> g_bwd``."""
    rec = g_bwd(g_fwd(x))
    if rec.shape != x.shape:
        raise ShapeError(f"reconstruction shape {tuple(rec.shape)} != input shape {tuple(x.shape)}")
    return (rec - x).abs().mean()


def discriminator_loss(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    return 0.5 * ((d_real - 1) ** 2).mean() + 0.5 * (d_fake ** 2).mean()


def generator_loss(d_fake: torch.Tensor) -> torch.Tensor:
    return 0.5 * ((d_fake - 1) ** 2).mean()


def adversarial_losses(disc, real_batch: torch.Tensor, fake_batch: torch.Tensor):
    """Least-squares (d_loss, g_loss) for one discriminator.

    ``g_loss`` keeps the graph through ``fake_batch``; detach the fakes before
    using ``d_loss`` to update the discriminator.
    """
    if real_batch.shape != fake_batch.shape:
        raise ShapeError(f"real {tuple(real_batch.shape)} and fake {tuple(fake_batch.shape)} batches differ")
    d_fake = disc(fake_batch)
    return discriminator_loss(disc(real_batch), d_fake), generator_loss(d_fake)


class ReplayBuffer:
    """Pool of past generated images for discriminator updates.

    Until full, every new image is stored and returned. Afterwards each new
    image is, with probability one half, swapped for a random stored one.
    """

    def __init__(self, size: int, rng: np.random.Generator):
        self.size = size
        self.rng = rng
        self.items: list[torch.Tensor] = []

    def query(self, batch: torch.Tensor) -> torch.Tensor:
        if self.size == 0:
            return batch
        out = []
        for img in batch.detach():
            if len(self.items) < self.size:
                self.items.append(img.clone())
                out.append(img)
            elif self.rng.uniform() < 0.5:
                k = int(self.rng.integers(self.size))
                out.append(self.items[k].clone())
                self.items[k] = img.clone()
            else:
                out.append(img)
        return torch.stack(out)


class CycleGan(torch.nn.Module):
    def __init__(self, base: int = 16, seed: int = 0):
        super().__init__()
        self.g_ab = Generator(base, torch_generator(seed, "init", 0))
        self.g_ba = Generator(base, torch_generator(seed, "init", 1))
        self.d_a = Discriminator(base, torch_generator(seed, "init", 2))
        self.d_b = Discriminator(base, torch_generator(seed, "init", 3))

    def tensors(self) -> dict[str, torch.Tensor]:
        out = {}
        for prefix, net in zip(PREFIXES, (self.g_ab, self.g_ba, self.d_a, self.d_b)):
            out.update(checkpoint.module_tensors(net, prefix))
        return out

    def save(self, path: str | Path) -> None:
        checkpoint.save(path, self.tensors())

    @classmethod
    def load(cls, path: str | Path, base: int | None = None) -> "CycleGan":
        tensors = checkpoint.load(path)
        if base is None:
            if "gab.enc1.weight" not in tensors:
                raise KeyError(f"{path}: not a GAN checkpoint (no gab.enc1.weight)")
            base = int(tensors["gab.enc1.weight"].shape[0])
        gan = cls(base)
        for prefix, net in zip(PREFIXES, (gan.g_ab, gan.g_ba, gan.d_a, gan.d_b)):
            checkpoint.load_module(net, tensors, prefix)
        gan.eval()
        return gan

    def translator(self) -> "FrozenTranslator":
        return FrozenTranslator(self.g_ab, self.g_ba)


class FrozenTranslator:
    """Inference-only wrapper taking and returning HxWx3 / NxHxWx3 arrays."""

    def __init__(self, g_ab, g_ba):
        self.g_ab, self.g_ba = g_ab, g_ba
        for g in (g_ab, g_ba):
            if isinstance(g, torch.nn.Module):
                g.eval()
                g.requires_grad_(False)

    @staticmethod
    def _apply(net, data: np.ndarray) -> np.ndarray:
        single = data.ndim == 3
        with torch.no_grad():
            out = to_hwc(net(as_batch(data)))
        return out[0] if single else out

    def real_to_sim(self, data: np.ndarray) -> np.ndarray:
        return self._apply(self.g_ab, data)

    def sim_to_real(self, data: np.ndarray) -> np.ndarray:
        return self._apply(self.g_ba, data)


def identity_translator() -> FrozenTranslator:
    return FrozenTranslator(torch.nn.Identity(), torch.nn.Identity())


def _images(arr) -> torch.Tensor:
    if isinstance(arr, torch.Tensor):
        return arr
    return as_batch(np.asarray(arr, dtype=np.float32))


def train_gan(sim_images, real_images, cfg: GanConfig, seed: int,
              out_dir: str | Path | None = None) -> tuple[CycleGan, list[dict]]:
    """Alternating generator / discriminator updates over unpaired datasets.

    ``sim_images`` and ``real_images`` are N x H x W x 3 arrays in [0, 1].
    With ``out_dir`` the checkpoint goes to ``gan.ckpt`` and the loss log to
    ``gan_log.jsonl``.
    """
    real_a, sim_b = _images(real_images), _images(sim_images)
    if len(real_a) == 0 or len(sim_b) == 0:
        raise ConfigError("both datasets must be non-empty")
    if real_a.shape[2] != cfg.image_size or sim_b.shape[2] != cfg.image_size:
        raise ShapeError(f"datasets must be {cfg.image_size}x{cfg.image_size}")

    gan = CycleGan(cfg.base_channels, seed)
    gen_params = [(f"gab.{n}", p) for n, p in gan.g_ab.named_parameters()]
    gen_params += [(f"gba.{n}", p) for n, p in gan.g_ba.named_parameters()]
    disc_params = [(f"da.{n}", p) for n, p in gan.d_a.named_parameters()]
    disc_params += [(f"db.{n}", p) for n, p in gan.d_b.named_parameters()]
    opt_g = Adam(gen_params, lr=cfg.lr_generator, betas=(cfg.beta1, 0.999))
    opt_d = Adam(disc_params, lr=cfg.lr_discriminator, betas=(cfg.beta1, 0.999))
    rng = numpy_rng(seed, "gan")
    pool_a = ReplayBuffer(cfg.buffer_size, numpy_rng(seed, "gan", 1))
    pool_b = ReplayBuffer(cfg.buffer_size, numpy_rng(seed, "gan", 2))

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_file = open(out / "gan_log.jsonl", "w", encoding="utf-8")
    history: list[dict] = []
    gan.train()
    try:
        for it in range(cfg.iterations):
            scale = cfg.lr_scale(it)
            opt_g.lr, opt_d.lr = cfg.lr_generator * scale, cfg.lr_discriminator * scale
            xa = real_a[rng.integers(len(real_a), size=cfg.batch_size)]
            xb = sim_b[rng.integers(len(sim_b), size=cfg.batch_size)]

            fake_b = gan.g_ab(xa)
            fake_a = gan.g_ba(xb)
            g_adv_ab = generator_loss(gan.d_b(fake_b))
            g_adv_ba = generator_loss(gan.d_a(fake_a))
            cyc_a = (gan.g_ba(fake_b) - xa).abs().mean()
            cyc_b = (gan.g_ab(fake_a) - xb).abs().mean()
            g_total = g_adv_ab + g_adv_ba + cfg.lambda_cycle * (cyc_a + cyc_b)
            if cfg.lambda_identity > 0:
                idt = (gan.g_ab(xb) - xb).abs().mean() + (gan.g_ba(xa) - xa).abs().mean()
                g_total = g_total + cfg.lambda_identity * cfg.lambda_cycle * idt
            opt_g.zero_grad()
            backward(g_total)
            opt_g.step()

            d_a = discriminator_loss(gan.d_a(xa), gan.d_a(pool_a.query(fake_a)))
            d_b = discriminator_loss(gan.d_b(xb), gan.d_b(pool_b.query(fake_b)))
            opt_d.zero_grad()
            backward(d_a + d_b)
            opt_d.step()

            if it % cfg.log_every == 0 or it == cfg.iterations - 1:
                entry = {"iteration": it, "d_a": d_a.item(), "d_b": d_b.item(),
                         "g_adv_ab": g_adv_ab.item(), "g_adv_ba": g_adv_ba.item(),
                         "cycle_a": cyc_a.item(), "cycle_b": cyc_b.item()}
                history.append(entry)
                if out is not None:
                    log_file.write(json.dumps(entry) + "\n")
                    log_file.flush()
                log.info("gan it %d cycle %.4f/%.4f", it, entry["cycle_a"], entry["cycle_b"])
    finally:
        if out is not None:
            log_file.close()
    gan.eval()
    if out is not None:
        gan.save(out / "gan.ckpt")
        (out / "gan_config.json").write_text(json.dumps(asdict(cfg), indent=2))
    return gan, history


def cycle_mae_per_channel(images, g_fwd, g_bwd, batch: int = 50) -> np.ndarray:
    """Per-channel mean absolute cycle reconstruction error over ``images``."""
    x = _images(images)
    total = torch.zeros(3, dtype=torch.float64)
    with torch.no_grad():
        for i in range(0, len(x), batch):
            xb = x[i:i + batch]
            total += (g_bwd(g_fwd(xb)) - xb).abs().double().sum(dim=(0, 2, 3))
    return (total / (len(x) * x.shape[2] * x.shape[3])).numpy()


def channel_stats(images) -> np.ndarray:
    """Per-channel mean and std (6-vector) of an N x H x W x 3 image set."""
    arr = np.asarray(images, dtype=np.float64).reshape(-1, 3)
    return np.concatenate([arr.mean(0), arr.std(0)])


def per_image_stats(images) -> np.ndarray:
    arr = np.asarray(images, dtype=np.float64)
    flat = arr.reshape(arr.shape[0], -1, 3)
    return np.concatenate([flat.mean(1), flat.std(1)], axis=1)


def stat_distance(images, reference: np.ndarray) -> np.ndarray:
    """Per-image L2 distance of channel mean/std statistics to ``reference``."""
    return np.linalg.norm(per_image_stats(images) - reference[None], axis=1)
