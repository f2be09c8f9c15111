"""Command-line entry point.

    real2sim render-dataset --domain sim --count 400 --seed 7 --out data/sim
    real2sim train-gan --sim data/sim --real data/real --out runs/gan
    real2sim train-policy --tasks 1-4 --out runs/policy
    real2sim eval --policy runs/policy/policy.ckpt --tasks 1-4
    real2sim run-real2sim --policy runs/policy/policy.ckpt --gan runs/gan/gan.ckpt
    real2sim gradcheck

Exit status: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import torch

from . import __version__
from .config import COMMANDS, RunConfig, params_for, read_config_file, resolve
from .env import GAN_TASKS
from .errors import ConfigError, InvalidTaskError, Real2SimError
from .gan import CycleGan, GanConfig, train_gan
from .nn.gradcheck import run_suite
from .pipeline import EvalConfig, run_episodes
from .ppo import PpoConfig, load_policy, train
from .render import DatasetManifest, render_dataset
from .seeding import set_deterministic
from .vec_env import TaskMix, VecEnv

log = logging.getLogger("real2sim")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> Parser:
    parser = Parser(prog="real2sim", description="Real2Sim visual insertion: data, training, evaluation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=Parser)
    for command in COMMANDS:
        p = sub.add_parser(command, help=f"{command} subcommand")
        p.add_argument("--config", metavar="FILE", help="key = value file; flags override it")
        p.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
        for param in params_for(command).values():
            extra = {"choices": param.choices} if param.choices and param.type is str else {}
            p.add_argument(param.flag, dest=param.name, default=None, type=str,
                           help=f"{param.help} (default: {param.default})", **extra)
    return parser


def parse_run_config(argv: list[str]) -> tuple[RunConfig, argparse.Namespace]:
    args = build_parser().parse_args(argv)
    if args.command is None:
        raise UsageError("real2sim: error: a command is required (see --help)")
    table = params_for(args.command)
    flags = {name: getattr(args, name) for name in table}
    file_values = read_config_file(args.config) if args.config else {}
    return resolve(args.command, flags, file_values), args


def _tasks(text: str) -> tuple[int, ...]:
    return TaskMix.parse(text).tasks


def _noise(text: str) -> tuple[str, ...]:
    return tuple(c.strip() for c in text.split(",") if c.strip())


def _load_gan(path: str):
    if not path:
        return None
    return CycleGan.load(path).translator()


def cmd_render_dataset(rc: RunConfig) -> dict:
    m = render_dataset(rc["domain"], rc["count"], rc.seed, rc["out"], rc["size"], rc["noise_prob"],
                       _tasks(rc["tasks"]))
    print(f"wrote {len(m.entries)} {rc['domain']} images to {rc['out']}")
    return {"images": len(m.entries)}


def cmd_train_gan(rc: RunConfig) -> dict:
    for key in ("sim", "real"):
        if not rc[key]:
            raise UsageError(f"train-gan: --{key} dataset directory is required")
    sim = DatasetManifest.read(rc["sim"]).load()
    real = DatasetManifest.read(rc["real"]).load()
    cfg = GanConfig(image_size=sim.shape[1], lambda_cycle=rc["lambda_cycle"],
                    lambda_identity=rc["lambda_identity"], lr_generator=rc["lr"], lr_discriminator=rc["lr"],
                    batch_size=rc["batch_size"], iterations=rc["iterations"], buffer_size=rc["buffer_size"],
                    base_channels=rc["base_channels"], log_every=rc["log_every"], decay_from=rc["decay_from"])
    _, history = train_gan(sim, real, cfg, rc.seed, rc["out"])
    last = history[-1]
    print(f"gan: {cfg.iterations} iterations, cycle_a {last['cycle_a']:.4f} cycle_b {last['cycle_b']:.4f}")
    return {"final": last}


def cmd_train_policy(rc: RunConfig) -> dict:
    tasks = _tasks(rc["tasks"])
    needs_gan = sorted(set(tasks) & set(GAN_TASKS))
    if needs_gan and not rc["gan"]:
        raise UsageError(f"train-policy: tasks {needs_gan} need a trained GAN checkpoint (--gan)")
    translator = _load_gan(rc["gan"])
    cfg = PpoConfig(clip_eps=rc["clip_eps"], gamma=rc["gamma"], gae_lambda=rc["gae_lambda"],
                    epochs=rc["epochs"], minibatch_size=rc["minibatch_size"], value_coef=rc["value_coef"],
                    entropy_coef=rc["entropy_coef"], horizon=rc["horizon"], total_steps=rc["total_steps"],
                    n_envs=rc["n_envs"], tasks=TaskMix(tasks, rc["sampling"]), lr=rc["lr"],
                    anneal_lr=rc["anneal_lr"])
    env_threads = 1 if rc.deterministic else min(rc.threads, cfg.n_envs)

    def make(env_seed):
        return VecEnv(cfg.tasks, cfg.n_envs, env_seed, translator=translator, threads=env_threads)

    _, train_log = train(make, cfg, rc.seed, rc["out"])
    last = train_log[-1]
    if last["episodes"]:
        print(f"policy: {last['step']} steps, success rate {last['success_rate']:.3f}, "
              f"mean return {last['mean_return']:.3f}")
    else:
        print(f"policy: {last['step']} steps, no finished episodes in the last update")
    return {"final": last}


def _evaluate(rc: RunConfig, observation: str, dump: int = 0) -> dict:
    if not rc["policy"]:
        raise UsageError(f"{rc.command}: --policy checkpoint is required")
    adaptation = rc["adaptation"] and observation == "real"
    tasks = _tasks(rc["tasks"])
    if (adaptation or set(tasks) & set(GAN_TASKS)) and not rc["gan"]:
        raise UsageError(f"{rc.command}: this evaluation needs a GAN checkpoint (--gan)")
    policy = load_policy(rc["policy"])
    cfg = EvalConfig(tasks=tasks, episodes=rc["episodes"], t_max=rc["t_max"], observation=observation,
                     noise=_noise(rc["noise"]), adaptation=adaptation, seed=rc.seed,
                     deterministic=not rc["stochastic"])
    out = Path(rc["out"])
    report = run_episodes(policy, cfg, _load_gan(rc["gan"]),
                          dump_dir=out / "frames" if dump else None, dump_limit=dump)
    report.write(out)
    for task, row in report.per_task().items():
        print(f"task {task}: success {row['success_rate']:.3f} mean return {row['mean_return']:.3f}")
    print(f"sigma {report.sigma:.4f} success rate {report.success_rate:.3f}")
    return report.summary()


def cmd_eval(rc: RunConfig) -> dict:
    return _evaluate(rc, rc["observation"])


def cmd_run_real2sim(rc: RunConfig) -> dict:
    return _evaluate(rc, "real", rc["dump"])


def cmd_gradcheck(rc: RunConfig) -> dict:
    dtypes = {"both": (torch.float64, torch.float32), "float64": (torch.float64,),
              "float32": (torch.float32,)}[rc["dtype"]]
    results, ok = [], True
    for dtype in dtypes:
        for r in run_suite(dtype, n_samples=rc["samples"], seed=rc.seed):
            status = "ok" if r.ok else "FAIL"
            print(f"{r.dtype:8s} {r.name:14s} max rel err {r.max_rel_err:.3e} (< {r.threshold:g}) {status}")
            results.append({"name": r.name, "dtype": r.dtype, "max_rel_err": r.max_rel_err, "ok": r.ok})
            ok &= r.ok
    if not ok:
        raise GradcheckFailed("gradient check above threshold")
    return {"results": results}


class GradcheckFailed(Real2SimError):
    pass


HANDLERS = {
    "render-dataset": cmd_render_dataset,
    "train-gan": cmd_train_gan,
    "train-policy": cmd_train_policy,
    "eval": cmd_eval,
    "run-real2sim": cmd_run_real2sim,
    "gradcheck": cmd_gradcheck,
}


def write_run_json(rc: RunConfig) -> None:
    out = Path(rc["out"])
    out.mkdir(parents=True, exist_ok=True)
    body = dict(rc.to_dict(), version=__version__)
    (out / "run.json").write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        rc, args = parse_run_config(argv)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (UsageError, ConfigError) as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"real2sim: cannot read config: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    set_deterministic(rc.threads)
    try:
        write_run_json(rc)
        HANDLERS[rc.command](rc)
    except (UsageError, ConfigError, InvalidTaskError) as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (Real2SimError, OSError, KeyError, ValueError, RuntimeError) as exc:
        print(f"real2sim {rc.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
