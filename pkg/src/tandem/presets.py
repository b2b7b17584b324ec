"""Experiment presets: the four task-domain configurations plus desk- and
paper-scale training budgets.

Preset rows (model, principal motion penalty, grid, objects, observations,
window):

* 1a: maidrqn, 0.0, 5x5, 10, bit vectors, full view
* 1b: maidrqn, -0.4, 5x5, 10, bit vectors, full view
* 2:  maidrqn, 0.0, 5x5 (objects on the exterior ring), 10, bit vectors, 1-cell window
* 3:  maidrqn, -0.1, three-cell "L" corridor, 1, bit vectors, 1-cell window
* 4:  maddrqn, 0.0, 5x5, 10, pixels (agent-centered camera), exclusive cells

Desk scale is sized so a run finishes on a laptop CPU; paper scale uses
the original batch sizes and step counts.
"""

from __future__ import annotations

from dataclasses import replace

from .envs import GameSpec
from .training import TrainConfig

_RING = tuple(
    (x, y) for y in range(5) for x in range(5)
    if x in (0, 4) or y in (0, 4)
)

# "L" corridor: principal at the foot looking down the arm, one object at
# the far end, assistant in the middle. Eight possible tasks in total
# (2 object classes x 2 target classes x 2 visibility flags).
_L_CELLS = ((0, 0), (1, 0), (1, 1))

_SPECS = {
    "1a": GameSpec(
        width=5, height=5, num_objects=10, motion_penalty=0.0,
        observation_mode="bits", window=None,
        start_positions=((2, 2), (2, 2)),
    ),
    "1b": GameSpec(
        width=5, height=5, num_objects=10, motion_penalty=-0.4,
        observation_mode="bits", window=None,
        start_positions=((2, 2), (2, 2)),
    ),
    "2": GameSpec(
        width=5, height=5, num_objects=10, motion_penalty=0.0,
        observation_mode="bits", window=1, object_region=_RING,
        start_positions=((2, 2), (2, 2)),
    ),
    "3": GameSpec(
        width=2, height=2, cells=_L_CELLS, num_objects=1, motion_penalty=-0.1,
        observation_mode="bits", window=1, object_region=((1, 1),),
        assistant_sees_target="coin", require_target_object=False,
        start_positions=((0, 0), (1, 0)),
    ),
    "4": GameSpec(
        width=5, height=5, num_objects=10, motion_penalty=0.0,
        observation_mode="pixels", collision_mode="exclusive",
        start_positions=((2, 1), (2, 3)), render_size=64,
    ),
}

_VARIANTS = {"1a": "maidrqn", "1b": "maidrqn", "2": "maidrqn", "3": "maidrqn",
             "4": "maddrqn"}

PRESETS = tuple(sorted(_SPECS))
SCALES = ("desk", "paper")

# Desk-scale pixel training renders smaller frames to keep the conv cost
# down; the architecture adapts to the render size.
DESK_RENDER_SIZE = 40


class PresetError(Exception):
    pass


def game_spec(preset: str, scale: str = "desk") -> GameSpec:
    if preset not in _SPECS:
        raise PresetError(f"unknown preset {preset!r}; choose from {PRESETS}")
    if scale not in SCALES:
        raise PresetError(f"unknown scale {scale!r}; choose from {SCALES}")
    spec = _SPECS[preset]
    if preset == "4" and scale == "desk":
        spec = replace(spec, render_size=DESK_RENDER_SIZE)
    return spec


def train_config(preset: str, scale: str = "desk", seed: int = 0,
                 **overrides) -> TrainConfig:
    if preset not in _SPECS:
        raise PresetError(f"unknown preset {preset!r}; choose from {PRESETS}")
    variant = _VARIANTS[preset]
    if scale == "desk":
        batch, steps = (16, 2_000) if preset == "4" else (32, 20_000)
        eval_every = 250 if preset == "4" else 500
    elif scale == "paper":
        batch, steps = (100, 40_000) if preset == "4" else (100, 150_000)
        eval_every = 1_000
    else:
        raise PresetError(f"unknown scale {scale!r}; choose from {SCALES}")
    cfg = TrainConfig(variant=variant, batch_size=batch, steps=steps,
                      seed=seed, scale=scale, eval_every=eval_every)
    return replace(cfg, **overrides) if overrides else cfg
