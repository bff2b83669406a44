"""Synthetic episodes built from the simulator's preset layouts.

Ground-truth actions come from running the oracle driver in closed loop on
the exact depth matrices the controller will later compute, so an oracle
agent reproduces the ground truth step for step.
"""

from __future__ import annotations

from depthnav import sim
from depthnav.actions import Action
from depthnav.episodes import SYNTHETIC_FRAME, SCENE_ORDER, Episode, Step
from depthnav.pipeline import PipelineConfig

# Extra steps allowed beyond the ground-truth length; leaves room for a
# full deviation window after the ground-truth STOP.
STEP_SLACK = 25
MAX_GT_STEPS = 400
PRESETS = ("corridor",)


def oracle_rollout(
    layout: sim.Layout,
    cfg: PipelineConfig,
    dt: float = 0.2,
    stop_distance: float = 1.5,
) -> list[Step]:
    world = layout.world
    camera = world.camera(cfg.target_height, cfg.target_width)
    pose = layout.start
    steps = []
    for _ in range(MAX_GT_STEPS):
        matrix = sim.raycast_matrix(world.scene, pose, camera, cfg.downsample_ratio)
        action = sim.oracle_agent(matrix, sim.bearing_to(pose, layout.target), stop_distance)
        steps.append(Step(SYNTHETIC_FRAME, action, pose))
        if action is Action.STOP:
            return steps
        pose = sim.advance(pose, action, dt, world.kinematics)
    raise RuntimeError(f"{layout.name}: oracle did not stop within {MAX_GT_STEPS} steps")


def episode_from_layout(
    layout: sim.Layout,
    index: int,
    cfg: PipelineConfig,
    dt: float = 0.2,
    stop_distance: float = 1.5,
) -> Episode:
    steps = oracle_rollout(layout, cfg, dt, stop_distance)
    turns = any(s.gt_action in (Action.LEFT_ROTATE, Action.RIGHT_ROTATE) for s in steps)
    instruction = (
        "You are standing in a narrow corridor between two low walls. "
        + ("Turn to face the far end of the corridor, then walk " if turns else "Walk ")
        + f"along it toward the tall wall at its end and stop about {stop_distance:g} meters "
        "in front of that wall."
    )
    return Episode(
        id=layout.name,
        scene=SCENE_ORDER[index % len(SCENE_ORDER)],
        subtask_count=3 if turns else 2,
        instruction=instruction,
        steps=tuple(steps),
        target=layout.target,
        max_steps=len(steps) + STEP_SLACK,
        dt=dt,
        world=layout.world,
    )


def generate(
    preset: str = "corridor",
    count: int = 10,
    cfg: PipelineConfig | None = None,
    dt: float = 0.2,
    stop_distance: float = 1.5,
) -> list[Episode]:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {PRESETS}")
    cfg = cfg or PipelineConfig()
    return [
        episode_from_layout(layout, i, cfg, dt, stop_distance)
        for i, layout in enumerate(sim.corridor_suite(count))
    ]
