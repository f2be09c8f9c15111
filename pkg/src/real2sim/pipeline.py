"""Policy evaluation, the Real2Sim inference loop and the robustness metric.

Episodes are run in lockstep batches so policy and generator forwards are
batched; each episode is still an independent ``InsertionEnv`` whose task,
seed, camera style and noise are fixed by ``(seed, task, episode index)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .env import EnvConfig, InsertionEnv, check_task
from .errors import IncompleteEvaluationError, MissingDependencyError, PipelineOrderError
from .nn.distributions import sample_action
from .nn.networks import PolicyNet, as_batch
from .render import (NO_NOISE, Image, NoiseSpec, render_synthetic_real, sample_noise,
                     sample_real_style, write_ppm)
from .seeding import mix_seed

NOISE_COMPONENTS = ("background", "front", "light")


@dataclass
class EvalConfig:
    tasks: tuple[int, ...] = (2,)
    episodes: int = 100
    t_max: int = 120
    observation: str = "sim"  # "sim" or "real" (synthetic camera)
    noise: NoiseSpec | tuple[str, ...] = NO_NOISE
    adaptation: bool = True
    seed: int = 0
    deterministic: bool = True
    batch: int = 50

    def __post_init__(self):
        self.tasks = tuple(check_task(t) for t in self.tasks)
        if self.episodes < 1 or self.t_max < 1:
            raise ValueError("episodes and t_max must be >= 1")
        if self.observation not in ("sim", "real"):
            raise ValueError(f"unknown observation mode {self.observation!r}")
        if not isinstance(self.noise, NoiseSpec):
            self.noise = tuple(self.noise)
            unknown = set(self.noise) - set(NOISE_COMPONENTS)
            if unknown:
                raise ValueError(f"unknown noise components {sorted(unknown)}")

    def episode_seed(self, task: int, episode: int) -> int:
        return mix_seed(mix_seed(self.seed, task), episode)


@dataclass
class EpisodeRecord:
    task: int
    episode: int
    seed: int
    steps: int
    ret: float
    success: bool
    rewards: list[float] = field(default_factory=list)


def robustness_sigma(records: Sequence[EpisodeRecord], t_max_tasks: int, e_max: int) -> float:
    """Sum of every reward over tasks, episodes and steps / (tasks * episodes)."""
    counts: dict[int, int] = {}
    for r in records:
        counts[r.task] = counts.get(r.task, 0) + 1
    if len(counts) != t_max_tasks or any(c != e_max for c in counts.values()):
        raise IncompleteEvaluationError(
            f"expected {t_max_tasks} tasks x {e_max} episodes, got {dict(sorted(counts.items()))}")
    total = math.fsum(reward for r in records for reward in r.rewards)
    return total / (t_max_tasks * e_max)


@dataclass
class RobustnessReport:
    records: list[EpisodeRecord]
    n_tasks: int
    episodes: int

    @property
    def sigma(self) -> float:
        return robustness_sigma(self.records, self.n_tasks, self.episodes)

    @property
    def success_rate(self) -> float:
        return sum(r.success for r in self.records) / len(self.records)

    def per_task(self) -> dict[int, dict[str, float]]:
        out = {}
        for task in sorted({r.task for r in self.records}):
            rs = [r for r in self.records if r.task == task]
            out[task] = {"mean_return": float(np.mean([r.ret for r in rs])),
                         "success_rate": sum(r.success for r in rs) / len(rs),
                         "episodes": len(rs)}
        return out

    def summary(self) -> dict:
        return {"sigma": self.sigma, "success_rate": self.success_rate,
                "tasks": {str(k): v for k, v in self.per_task().items()},
                "n_tasks": self.n_tasks, "episodes_per_task": self.episodes}

    def write(self, out_dir: str | Path, name: str = "report") -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.json").write_text(json.dumps(self.summary(), indent=2), encoding="utf-8")
        with open(out / f"{name}_episodes.jsonl", "w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(json.dumps(asdict(r)) + "\n")

    @classmethod
    def from_records(cls, records: list[EpisodeRecord]) -> "RobustnessReport":
        tasks = {r.task for r in records}
        per = max(sum(r.task == t for r in records) for t in tasks)
        return cls(records, len(tasks), per)


def success_rate(successes: int, trials: int) -> float:
    return round(successes / trials, 3)


def policy_act(policy: PolicyNet, obs: np.ndarray, rng: np.random.Generator | None,
               deterministic: bool) -> np.ndarray:
    """Batched actions for N x H x W x 3 observations."""
    with torch.no_grad():
        mean, log_std, _ = policy(as_batch(obs, policy.image_size))
    mean, log_std = mean.numpy().astype(np.float64), log_std.numpy().astype(np.float64)
    if deterministic:
        return mean
    return sample_action(mean, log_std, rng)[0]


def real2sim_step(o_a: Image, translator, policy: PolicyNet, rng: np.random.Generator | None,
                  deterministic: bool = False) -> tuple[np.ndarray, Image]:
    """Translate a real-camera frame to sim style and act on the result."""
    if o_a.domain != "real":
        raise PipelineOrderError(f"real2sim_step expects a real-domain image, got {o_a.domain!r}")
    if translator is None:
        raise MissingDependencyError("real2sim_step requires a trained GAN translator")
    o_b = Image(translator.real_to_sim(o_a.data), "sim")
    action = policy_act(policy, o_b.data[None], rng, deterministic)[0]
    return action, o_b


def _episode_noise(cfg: EvalConfig, rng: np.random.Generator) -> NoiseSpec:
    if isinstance(cfg.noise, NoiseSpec):
        return cfg.noise
    if not cfg.noise:
        return NO_NOISE
    return sample_noise(rng, *(c in cfg.noise for c in NOISE_COMPONENTS))


def run_episodes(policy: PolicyNet, cfg: EvalConfig, translator=None, env_config: EnvConfig | None = None,
                 dump_dir: str | Path | None = None, dump_limit: int = 8) -> RobustnessReport:
    """Run ``cfg.episodes`` episodes of every task in ``cfg.tasks``.

    With ``cfg.observation == "real"`` each frame comes from the synthetic
    real camera; ``cfg.adaptation`` then decides whether frames pass through
    ``G_ab`` before reaching the policy. Frame pairs of the first episodes can
    be dumped as PPM files to ``dump_dir``.
    """
    ec = env_config or EnvConfig(t_max=cfg.t_max)
    if ec.t_max != cfg.t_max:
        ec = replace(ec, t_max=cfg.t_max)
    real = cfg.observation == "real"
    if real and cfg.adaptation and translator is None:
        raise MissingDependencyError("Real2Sim evaluation needs a GAN translator")
    dump = Path(dump_dir) if dump_dir is not None else None
    if dump is not None:
        dump.mkdir(parents=True, exist_ok=True)

    jobs = [(task, e) for task in cfg.tasks for e in range(cfg.episodes)]
    records: list[EpisodeRecord] = []
    for start in range(0, len(jobs), cfg.batch):
        chunk = jobs[start:start + cfg.batch]
        envs, styles, noises, rngs, frames = [], [], [], [], []
        for task, e in chunk:
            seed = cfg.episode_seed(task, e)
            env = InsertionEnv(ec, translator)
            state, obs = env.reset(task, seed)
            side = np.random.default_rng([seed, 1])
            styles.append(sample_real_style(side) if real else None)
            noises.append(_episode_noise(cfg, side) if real else None)
            rngs.append(np.random.default_rng([seed, 2]))
            envs.append(env)
            frames.append(obs)
        rewards = [[] for _ in chunk]
        success = [False] * len(chunk)
        active = list(range(len(chunk)))
        step = 0
        while active:
            if real:
                obs_a = [render_synthetic_real(envs[i].state, styles[i], noises[i], ec.image_size) for i in active]
                batch_a = np.stack([o.data for o in obs_a])
                if cfg.adaptation:
                    for o in obs_a:
                        if o.domain != "real":
                            raise PipelineOrderError("G_ab must only receive real-domain frames")
                    batch = translator.real_to_sim(batch_a)
                else:
                    batch = batch_a
                if dump is not None:
                    for j, i in enumerate(active):
                        k = start + i
                        if k < dump_limit and step % 10 == 0:
                            write_ppm(dump / f"ep{k:03d}_t{step:03d}_real.ppm", batch_a[j])
                            write_ppm(dump / f"ep{k:03d}_t{step:03d}_policy.ppm", batch[j])
            else:
                batch = np.stack([frames[i].data for i in active])
            if cfg.deterministic:
                actions = policy_act(policy, batch, None, True)
            else:
                actions = np.stack([policy_act(policy, batch[j:j + 1], rngs[i], False)[0]
                                    for j, i in enumerate(active)])
            still = []
            for j, i in enumerate(active):
                res = envs[i].step(actions[j])
                rewards[i].append(res.reward)
                frames[i] = res.observation
                if res.done:
                    success[i] = res.success
                else:
                    still.append(i)
            active = still
            step += 1
        for i, (task, e) in enumerate(chunk):
            records.append(EpisodeRecord(task, e, cfg.episode_seed(task, e), len(rewards[i]),
                                         math.fsum(rewards[i]), success[i], rewards[i]))
    return RobustnessReport(records, len(cfg.tasks), cfg.episodes)


def evaluate(policy: PolicyNet, tasks: Sequence[int], episodes: int = 100, seed: int = 10_000,
             translator=None, **kwargs) -> RobustnessReport:
    return run_episodes(policy, EvalConfig(tasks=tuple(tasks), episodes=episodes, seed=seed, **kwargs),
                        translator)


def run_real2sim_episodes(cfg: EvalConfig, translator, policy: PolicyNet, **kwargs) -> RobustnessReport:
    if cfg.observation != "real":
        cfg = replace(cfg, observation="real")
    return run_episodes(policy, cfg, translator, **kwargs)
