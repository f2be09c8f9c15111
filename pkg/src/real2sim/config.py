"""Run configuration: per-command parameter tables and ``key = value`` files.

Values resolve with flag > config file > default precedence. Every parameter
is declared once here with its type, default and help text; the CLI builds
its flags from the same table, so a config file can only name known keys.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError


def parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Param:
    name: str
    type: Callable[[str], Any]
    default: Any
    help: str
    choices: tuple | None = None

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")

    def convert(self, raw: Any) -> Any:
        if raw is None:
            return None
        value = raw if not isinstance(raw, str) or self.type is str else self.type(raw)
        if self.choices is not None and value not in self.choices:
            raise ConfigError(f"{self.name}: {value!r} not one of {', '.join(map(str, self.choices))}")
        return value


COMMON = (
    Param("seed", int, 0, "root seed for every random stream"),
    Param("out", str, "runs/out", "output directory"),
    Param("threads", int, 0, "worker threads; 0 = all cores, 1 = deterministic mode"),
)

SAMPLING = ("uniform-on-reset", "round-robin")

COMMANDS: dict[str, tuple[Param, ...]] = {
    "render-dataset": (
        Param("domain", str, "sim", "image domain", ("sim", "real")),
        Param("count", int, 400, "number of images"),
        Param("size", int, 64, "image side in pixels", (64, 128)),
        Param("noise_prob", float, 0.0, "probability of background/front/light noise per real image"),
        Param("tasks", str, "2", "sim tasks whose randomization is sampled"),
    ),
    "train-gan": (
        Param("sim", str, "", "sim-domain dataset directory (manifest.tsv)"),
        Param("real", str, "", "real-domain dataset directory (manifest.tsv)"),
        Param("iterations", int, 10_000, "training iterations"),
        Param("batch_size", int, 16, "images per domain per iteration"),
        Param("base_channels", int, 16, "generator/discriminator width"),
        Param("lambda_cycle", float, 10.0, "cycle-consistency weight"),
        Param("lambda_identity", float, 0.0, "identity-mapping weight (relative to lambda_cycle)"),
        Param("lr", float, 2e-4, "Adam learning rate for both networks"),
        Param("buffer_size", int, 50, "replay buffer of generated images"),
        Param("log_every", int, 100, "iterations between log lines"),
        Param("decay_from", float, 0.5, "fraction of iterations after which learning rates decay linearly to 0"),
    ),
    "train-policy": (
        Param("tasks", str, "1-4", "task mix, e.g. 1-4 or 1,3"),
        Param("sampling", str, "uniform-on-reset", "task sampling across resets", SAMPLING),
        Param("total_steps", int, 200_000, "environment steps"),
        Param("n_envs", int, 8, "parallel environments"),
        Param("horizon", int, 128, "rollout length per environment"),
        Param("epochs", int, 4, "optimisation epochs per update"),
        Param("minibatch_size", int, 256, "samples per minibatch"),
        Param("lr", float, 1e-3, "Adam learning rate"),
        Param("anneal_lr", parse_bool, True, "linearly decay the learning rate"),
        Param("clip_eps", float, 0.2, "ratio clip range"),
        Param("gamma", float, 0.99, "discount"),
        Param("gae_lambda", float, 0.95, "advantage estimation lambda"),
        Param("value_coef", float, 0.5, "value loss weight"),
        Param("entropy_coef", float, 0.01, "entropy bonus weight"),
        Param("gan", str, "", "GAN checkpoint, required for tasks 5-7"),
    ),
    "eval": (
        Param("policy", str, "", "policy checkpoint"),
        Param("tasks", str, "2", "tasks to evaluate"),
        Param("episodes", int, 100, "episodes per task"),
        Param("t_max", int, 120, "step limit per episode"),
        Param("observation", str, "sim", "observation source", ("sim", "real")),
        Param("noise", str, "", "comma list of background,front,light"),
        Param("adaptation", parse_bool, True, "translate real frames with G_ab"),
        Param("gan", str, "", "GAN checkpoint"),
        Param("stochastic", parse_bool, False, "sample actions instead of using the mean"),
    ),
    "run-real2sim": (
        Param("policy", str, "", "policy checkpoint"),
        Param("gan", str, "", "GAN checkpoint"),
        Param("tasks", str, "2", "tasks to evaluate"),
        Param("episodes", int, 100, "episodes per task"),
        Param("t_max", int, 120, "step limit per episode"),
        Param("noise", str, "", "comma list of background,front,light"),
        Param("adaptation", parse_bool, True, "translate real frames with G_ab"),
        Param("stochastic", parse_bool, False, "sample actions instead of using the mean"),
        Param("dump", int, 4, "episodes whose (real, policy-input) frames are dumped as PPM"),
    ),
    "gradcheck": (
        Param("dtype", str, "both", "precision to check", ("both", "float64", "float32")),
        Param("samples", int, 200, "coordinates checked per tensor"),
    ),
}


def params_for(command: str) -> dict[str, Param]:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    return {p.name: p for p in COMMON + COMMANDS[command]}


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines skip."""
    out: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


@dataclass
class RunConfig:
    command: str
    values: dict[str, Any] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def threads(self) -> int:
        return self.values["threads"] or (os.cpu_count() or 1)

    @property
    def deterministic(self) -> bool:
        return self.threads == 1

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def to_dict(self) -> dict:
        return {"command": self.command, "config": dict(self.values), "seed": self.seed,
                "threads": self.threads, "deterministic": self.deterministic}


def resolve(command: str, flags: dict[str, Any] | None = None,
            file_values: dict[str, str] | None = None) -> RunConfig:
    """Merge flag values (``None`` = not given) over file values over defaults."""
    table = params_for(command)
    flags = flags or {}
    file_values = file_values or {}
    unknown = (set(flags) | set(file_values)) - set(table)
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {', '.join(sorted(unknown))}")
    values = {}
    for name, p in table.items():
        try:
            if flags.get(name) is not None:
                values[name] = p.convert(flags[name])
            elif name in file_values:
                values[name] = p.convert(file_values[name])
            else:
                values[name] = p.default
        except ValueError as exc:
            raise ConfigError(f"{name}: {exc}") from exc
    return RunConfig(command, values)
