"""Peg-in-hole insertion environment and its seven task variants.

Units are millimetres. The bolt descends at a constant ``v_z`` per step while
the policy chooses lateral displacements. Entry into the hole requires the
bolt axis to be within ``center_tolerance`` of the hole axis when the tip
reaches the hole plane; otherwise the tip rests on the surface (``blocked``)
until the policy realigns it.

Tasks:
    1  fixed start, motion clamped to a small search area, visible shell
    2  random start in the 20 mm disc, default appearance
    3  as 2 with randomized case colour
    4  as 2 with case/bolt/background colour, light and texture randomized
    5  Task 2 scene seen through the sim->real generator
    6  Task 2 scene through sim->real followed by real->sim
    7  Task 2 scene blended towards its GAN round trip by a random amount
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Protocol

import numpy as np

from .errors import ConfigError, EpisodeFinishedError, InvalidTaskError, MissingDependencyError
from .render import DEFAULT_DRAW, Image, RandomizationDraw, render_sim, sample_draw

TASK_IDS = (1, 2, 3, 4, 5, 6, 7)
GAN_TASKS = (5, 6, 7)


@dataclass(frozen=True)
class EnvConfig:
    hole_diameter: float = 11.0
    bolt_diameter: float = 10.0
    center_tolerance: float = 0.5
    success_depth: float = 5.0
    start_height: float = 30.0
    v_z: float = 0.5
    a_max: float = 1.0
    t_max: int = 120
    reward_mode: str = "shaped"
    image_size: int = 64
    start_radius: float = 10.0
    workspace_half_width: float = 12.0
    task1_half_width: float = 5.0
    task1_anchor: tuple[float, float] = (3.0, -2.0)

    def __post_init__(self):
        if self.hole_diameter <= self.bolt_diameter:
            raise ConfigError("hole_diameter must exceed bolt_diameter")
        if not math.isclose(self.center_tolerance, (self.hole_diameter - self.bolt_diameter) / 2):
            raise ConfigError("center_tolerance must equal half the diametral clearance")
        if self.success_depth > self.start_height:
            raise ConfigError("success_depth must not exceed start_height")
        if self.t_max < self.start_height / self.v_z:
            raise ConfigError("t_max too short to reach the hole plane")
        if self.reward_mode not in ("sparse", "shaped"):
            raise ConfigError(f"unknown reward_mode {self.reward_mode!r}")
        if self.image_size not in (64, 128):
            raise ConfigError(f"unsupported image_size {self.image_size}")


@dataclass(frozen=True)
class WorldState:
    bolt_xy: tuple[float, float] = (0.0, 0.0)
    bolt_z: float = 30.0
    blocked: bool = False
    step_count: int = 0
    task_id: int = 2
    episode_rng_seed: int = 0
    randomization_draw: RandomizationDraw = DEFAULT_DRAW
    # Task 7 blend factor towards the GAN round trip.
    obs_blend: float = 0.0

    @property
    def offset(self) -> float:
        return math.hypot(*self.bolt_xy)


@dataclass
class StepResult:
    observation: Image
    reward: float
    done: bool
    success: bool
    info: dict[str, Any] = field(default_factory=dict)


def clamp_action(action) -> tuple[float, float]:
    a = np.asarray(action, dtype=np.float64).reshape(-1)
    if a.shape != (2,):
        raise ConfigError(f"action must have 2 components, got {a.shape}")
    a = np.clip(np.nan_to_num(a, nan=0.0), -1.0, 1.0)
    return float(a[0]), float(a[1])


def check_task(task_id: int) -> int:
    if task_id not in TASK_IDS:
        raise InvalidTaskError(f"unknown task id {task_id!r}; expected 1..7")
    return int(task_id)


def initial_state(task_id: int, seed: int, cfg: EnvConfig) -> WorldState:
    task_id = check_task(task_id)
    rng = np.random.default_rng(seed)
    if task_id == 1:
        xy = tuple(float(v) for v in cfg.task1_anchor)
    else:
        r = cfg.start_radius * math.sqrt(rng.uniform())
        theta = rng.uniform(0.0, 2.0 * math.pi)
        xy = (r * math.cos(theta), r * math.sin(theta))
    draw = sample_draw(task_id, rng)
    blend = float(rng.uniform()) if task_id == 7 else 0.0
    return WorldState(bolt_xy=xy, bolt_z=cfg.start_height, task_id=task_id,
                      episode_rng_seed=int(seed), randomization_draw=draw, obs_blend=blend)


def transition(state: WorldState, action, cfg: EnvConfig) -> tuple[WorldState, float, bool, bool]:
    """Advance one step. Returns (new state, reward, done, success)."""
    dx, dy = clamp_action(action)
    x = state.bolt_xy[0] + dx * cfg.a_max
    y = state.bolt_xy[1] + dy * cfg.a_max
    half = cfg.task1_half_width if state.task_id == 1 else cfg.workspace_half_width
    x, y = min(max(x, -half), half), min(max(y, -half), half)

    tol = cfg.center_tolerance
    if state.bolt_z < 0:
        # Inside the hole the walls keep the bolt within tolerance.
        r = math.hypot(x, y)
        if r > tol:
            x, y = x * tol / r, y * tol / r

    z = state.bolt_z - cfg.v_z
    blocked = False
    if z < 0 and state.bolt_z >= 0 and math.hypot(x, y) > tol:
        z, blocked = 0.0, True

    step_count = state.step_count + 1
    success = z <= -cfg.success_depth
    done = success or step_count >= cfg.t_max

    if cfg.reward_mode == "shaped":
        reward = -0.01 * math.hypot(x, y) / 10.0
        if blocked:
            reward -= 0.1
    else:
        reward = 0.0
    if success:
        reward += 1.0

    new = replace(state, bolt_xy=(x, y), bolt_z=z, blocked=blocked, step_count=step_count)
    return new, reward, done, success


class Translator(Protocol):
    """Frozen image translator used by Tasks 5-7 (see ``gan.FrozenTranslator``)."""

    def sim_to_real(self, data: np.ndarray) -> np.ndarray: ...

    def real_to_sim(self, data: np.ndarray) -> np.ndarray: ...


def apply_task_view(state: WorldState, data: np.ndarray, translator: Translator | None) -> np.ndarray:
    """Task-specific observation wrapping applied after sim rendering."""
    if state.task_id not in GAN_TASKS:
        return data
    if translator is None:
        raise MissingDependencyError(f"task {state.task_id} requires a trained GAN translator")
    fake_real = translator.sim_to_real(data)
    if state.task_id == 5:
        return fake_real
    round_trip = translator.real_to_sim(fake_real)
    if state.task_id == 6:
        return round_trip
    return np.clip(data + state.obs_blend * (round_trip - data), 0.0, 1.0).astype(np.float32)


class InsertionEnv:
    """Single insertion environment holding the current episode state."""

    def __init__(self, config: EnvConfig | None = None, translator: Translator | None = None):
        self.config = config or EnvConfig()
        self.translator = translator
        self.state: WorldState | None = None
        self.done = True

    def observe(self, state: WorldState | None = None) -> Image:
        state = state or self.state
        img = render_sim(state, state.randomization_draw, self.config.image_size)
        if state.task_id in GAN_TASKS:
            return Image(apply_task_view(state, img.data, self.translator), "sim")
        return img

    def reset(self, task_id: int, seed: int) -> tuple[WorldState, Image]:
        task_id = check_task(task_id)
        if task_id in GAN_TASKS and self.translator is None:
            raise MissingDependencyError(f"task {task_id} requires a trained GAN translator")
        self.state = initial_state(task_id, seed, self.config)
        self.done = False
        return self.state, self.observe()

    def step(self, action) -> StepResult:
        if self.done or self.state is None:
            raise EpisodeFinishedError("step() called on a finished episode; call reset()")
        self.state, reward, done, success = transition(self.state, action, self.config)
        self.done = done
        s = self.state
        info = {"offset": s.offset, "depth": -min(s.bolt_z, 0.0), "blocked": s.blocked,
                "bolt_z": s.bolt_z, "task_id": s.task_id, "step_count": s.step_count}
        return StepResult(self.observe(), reward, done, success, info)
