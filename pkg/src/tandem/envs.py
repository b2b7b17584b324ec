"""Cooperative two-agent gridworld tasks.

A task is one instance of a partially observable Markov game: a grid,
two object classes, a target class known only to the principal, and a
shared reward. Both agents move simultaneously; entering an object cell
collects it for +1 (target class) or -1 (other class). All functions
here are pure given (state, task, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

PRINCIPAL, ASSISTANT = 0, 1
N_ACTIONS = 5
# 0 stay, 1 left, 2 right, 3 up, 4 down
ACTION_DELTAS = ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1))
ACTION_NAMES = ("stay", "left", "right", "up", "down")

# Bit layout per cell: visible, principal, assistant, object-present,
# class one-hot (2), collect one-hot (2).
BIT_VISIBLE = 0
BIT_PRINCIPAL = 1
BIT_ASSISTANT = 2
BIT_OBJECT = 3
BIT_CLASS0 = 4
BIT_COLLECT0 = 6
N_BITS = 8

# Models consume bit observations as a fixed-size image; small geometries
# (the three-cell corridor of preset 3) are embedded in this frame with
# non-world cells permanently invisible.
MIN_FRAME = 5


class EnvError(Exception):
    pass


@dataclass(frozen=True)
class GameSpec:
    """Static rules for one task domain (one experiment row)."""

    width: int
    height: int
    num_objects: int
    horizon: int = 10
    discount: float = 0.9
    observation_mode: str = "bits"  # "bits" | "pixels"
    window: int | None = None  # visibility radius in cells; None = full
    motion_penalty: float = 0.0  # <= 0, charged to the principal on motion
    assistant_sees_target: str = "never"  # "never" | "always" | "coin"
    collision_mode: str = "co-occupy"  # "co-occupy" | "exclusive"
    start_positions: tuple = ((2, 2), (2, 2))
    cells: tuple | None = None  # explicit cell list; None = full rectangle
    object_region: tuple | None = None  # candidate object cells; None = any free cell
    require_target_object: bool = True
    render_size: int = 64

    def __post_init__(self):
        if self.horizon < 1:
            raise EnvError("horizon must be >= 1")
        if self.motion_penalty > 0:
            raise EnvError("motion penalty must be <= 0")
        if self.observation_mode not in ("bits", "pixels"):
            raise EnvError(f"unknown observation mode {self.observation_mode!r}")
        if self.collision_mode not in ("co-occupy", "exclusive"):
            raise EnvError(f"unknown collision mode {self.collision_mode!r}")
        if self.assistant_sees_target not in ("never", "always", "coin"):
            raise EnvError(f"unknown visibility rule {self.assistant_sees_target!r}")
        if self.num_objects > len(self.free_cells()):
            raise EnvError(
                f"{self.num_objects} objects do not fit in "
                f"{len(self.free_cells())} free cells"
            )
        if self.collision_mode == "exclusive" and (
            self.start_positions[0] == self.start_positions[1]
        ):
            raise EnvError("exclusive collision mode requires distinct start cells")

    def cell_list(self):
        if self.cells is not None:
            return list(self.cells)
        return [(x, y) for y in range(self.height) for x in range(self.width)]

    def in_world(self, cell):
        x, y = cell
        if self.cells is not None:
            return cell in self.cells
        return 0 <= x < self.width and 0 <= y < self.height

    def free_cells(self):
        """Cells where objects may be placed: candidate region minus starts."""
        region = self.object_region if self.object_region is not None else self.cell_list()
        return [c for c in region if c not in self.start_positions]

    def frame_shape(self):
        return (max(MIN_FRAME, self.height), max(MIN_FRAME, self.width))

    def to_dict(self):
        d = {
            "width": self.width,
            "height": self.height,
            "num_objects": self.num_objects,
            "horizon": self.horizon,
            "discount": self.discount,
            "observation_mode": self.observation_mode,
            "window": self.window,
            "motion_penalty": self.motion_penalty,
            "assistant_sees_target": self.assistant_sees_target,
            "collision_mode": self.collision_mode,
            "start_positions": [list(s) for s in self.start_positions],
            "cells": None if self.cells is None else [list(c) for c in self.cells],
            "object_region": (
                None if self.object_region is None else [list(c) for c in self.object_region]
            ),
            "require_target_object": self.require_target_object,
            "render_size": self.render_size,
        }
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["start_positions"] = tuple(tuple(s) for s in d["start_positions"])
        if d.get("cells") is not None:
            d["cells"] = tuple(tuple(c) for c in d["cells"])
        if d.get("object_region") is not None:
            d["object_region"] = tuple(tuple(c) for c in d["object_region"])
        return cls(**d)


@dataclass(frozen=True)
class TaskSpec:
    """One sampled task: object layout, target class, visibility flag."""

    spec: GameSpec
    objects: tuple  # ((x, y), class) pairs on distinct free cells
    target_class: int
    assistant_observes_target: bool
    starts: tuple

    def __post_init__(self):
        cells = [c for c, _ in self.objects]
        if len(set(cells)) != len(cells):
            raise EnvError("object placements must be distinct cells")
        for c in cells:
            if not self.spec.in_world(c) or c in self.starts:
                raise EnvError(f"object cell {c} not free")
        for s in self.starts:
            if not self.spec.in_world(s):
                raise EnvError(f"start cell {s} outside grid")
        if self.spec.collision_mode == "exclusive" and self.starts[0] == self.starts[1]:
            raise EnvError("agents must start on distinct cells in exclusive mode")

    def to_dict(self):
        return {
            "objects": [[list(c), int(k)] for c, k in self.objects],
            "target_class": int(self.target_class),
            "assistant_observes_target": bool(self.assistant_observes_target),
            "starts": [list(s) for s in self.starts],
        }

    @classmethod
    def from_dict(cls, spec, d):
        return cls(
            spec=spec,
            objects=tuple((tuple(c), int(k)) for c, k in d["objects"]),
            target_class=int(d["target_class"]),
            assistant_observes_target=bool(d["assistant_observes_target"]),
            starts=tuple(tuple(s) for s in d["starts"]),
        )


@dataclass
class WorldState:
    positions: list  # [(x, y) principal, (x, y) assistant]
    objects: dict  # cell -> class, objects still on the board
    t: int = 0


@dataclass
class StepOutcome:
    reward: float
    reward_split: tuple  # (due to principal, due to assistant); sums to reward
    observations: tuple  # (principal obs, assistant obs) of the new state
    done: bool
    state: WorldState  # successor state
    collected: tuple = ()  # ((cell, class, agent-or-"both"), ...) this step


def sample_task(spec: GameSpec, seed: int) -> TaskSpec:
    """Draw a task uniformly: object cells without replacement from the
    candidate region, classes uniform (re-drawn until the target class is
    represented, when required), target class uniform."""
    rng = np.random.default_rng(seed)
    free = spec.free_cells()
    if spec.num_objects > len(free):
        raise EnvError(f"{spec.num_objects} objects do not fit in {len(free)} cells")
    target = int(rng.integers(2))
    if spec.assistant_sees_target == "never":
        sees = False
    elif spec.assistant_sees_target == "always":
        sees = True
    else:
        sees = bool(rng.integers(2))
    idx = rng.choice(len(free), size=spec.num_objects, replace=False)
    classes = rng.integers(2, size=spec.num_objects)
    if spec.require_target_object:
        while not (classes == target).any():
            classes = rng.integers(2, size=spec.num_objects)
    objects = tuple((free[i], int(k)) for i, k in zip(idx, classes))
    return TaskSpec(
        spec=spec,
        objects=objects,
        target_class=target,
        assistant_observes_target=sees,
        starts=tuple(spec.start_positions),
    )


def heldout_tasks(spec: GameSpec, n: int, base_seed: int = 0):
    """Evaluation tasks from a seed range disjoint from training draws
    (trainers sample task seeds below 10**9)."""
    return [sample_task(spec, 10**9 + base_seed * 10**6 + k) for k in range(n)]


def observe(state: WorldState, task: TaskSpec, agent: int):
    if task.spec.observation_mode == "bits":
        return encode_bits(state, task, agent)
    from .raster import render_pixels

    return render_pixels(state, task, agent)


def env_init(task: TaskSpec):
    state = WorldState(positions=list(task.starts), objects=dict(task.objects), t=0)
    obs = (observe(state, task, PRINCIPAL), observe(state, task, ASSISTANT))
    return state, obs


def _desired(spec, pos, action):
    dx, dy = ACTION_DELTAS[action]
    cand = (pos[0] + dx, pos[1] + dy)
    return cand if spec.in_world(cand) else pos


def resolve_moves(spec, pos_p, pos_a, a_p, a_a):
    """Simultaneous movement with the spec's collision rule.

    Co-occupancy: both moves apply independently. Exclusive: agents can
    never share a cell; on a contested cell the principal moves and the
    assistant stays, and a swap attempt blocks both.
    """
    d_p = _desired(spec, pos_p, a_p)
    d_a = _desired(spec, pos_a, a_a)
    if spec.collision_mode == "co-occupy":
        return d_p, d_a
    if d_p == pos_a and d_a == pos_p:  # swap: would pass through each other
        return pos_p, pos_a
    if d_p == d_a:
        d_a = pos_a
        if d_p == d_a:  # principal walked into an assistant that stayed
            d_p = pos_p
    return d_p, d_a


def transition(state: WorldState, task: TaskSpec, a_p: int, a_a: int):
    """Pure dynamics: next state, reward split, and collection events,
    without building observations (useful for search)."""
    spec = task.spec
    if state.t >= spec.horizon:
        raise EnvError(f"step at t={state.t} past horizon {spec.horizon}")
    for a in (a_p, a_a):
        if not 0 <= a < N_ACTIONS:
            raise EnvError(f"action {a} out of range")

    pos_p, pos_a = state.positions
    new_p, new_a = resolve_moves(spec, pos_p, pos_a, a_p, a_a)

    objects = dict(state.objects)
    r_p = r_a = 0.0
    collected = []
    if new_p == new_a and new_p in objects:
        cls = objects.pop(new_p)
        value = 1.0 if cls == task.target_class else -1.0
        r_p += value / 2.0
        r_a += value / 2.0
        collected.append((new_p, cls, "both"))
    else:
        if new_p in objects:
            cls = objects.pop(new_p)
            r_p += 1.0 if cls == task.target_class else -1.0
            collected.append((new_p, cls, "principal"))
        if new_a in objects:
            cls = objects.pop(new_a)
            r_a += 1.0 if cls == task.target_class else -1.0
            collected.append((new_a, cls, "assistant"))
    if new_p != pos_p:
        r_p += spec.motion_penalty

    new_state = WorldState(positions=[new_p, new_a], objects=objects, t=state.t + 1)
    return new_state, (r_p, r_a), tuple(collected)


def env_step(state: WorldState, task: TaskSpec, a_p: int, a_a: int):
    """Advance one step; returns (new_state, StepOutcome)."""
    spec = task.spec
    new_state, (r_p, r_a), collected = transition(state, task, a_p, a_a)
    obs = (observe(new_state, task, PRINCIPAL), observe(new_state, task, ASSISTANT))
    return new_state, StepOutcome(
        reward=r_p + r_a,
        reward_split=(r_p, r_a),
        observations=obs,
        done=new_state.t >= spec.horizon,
        state=new_state,
        collected=tuple(collected),
    )


def _cell_mask(spec: GameSpec):
    fh, fw = spec.frame_shape()
    mask = np.zeros((fh, fw), dtype=bool)
    for x, y in spec.cell_list():
        mask[y, x] = True
    return mask


def encode_bits(state: WorldState, task: TaskSpec, agent: int) -> np.ndarray:
    """Per-cell 8-bit encoding of the world as seen by one agent.

    Cells outside the agent's visibility window (and non-world cells of
    small geometries) are all-zero. Object class/collect bits are zero
    when no object is present; collect bits are withheld from the
    assistant unless the task grants them.
    """
    spec = task.spec
    fh, fw = spec.frame_shape()
    bits = np.zeros((fh, fw, N_BITS), dtype=np.float32)
    visible = _cell_mask(spec)
    if spec.window is not None:
        ax, ay = state.positions[agent]
        ys, xs = np.ogrid[0:fh, 0:fw]
        visible = visible & (np.abs(xs - ax) <= spec.window) & (np.abs(ys - ay) <= spec.window)
    bits[:, :, BIT_VISIBLE] = visible

    for who, bit in ((PRINCIPAL, BIT_PRINCIPAL), (ASSISTANT, BIT_ASSISTANT)):
        x, y = state.positions[who]
        if visible[y, x]:
            bits[y, x, bit] = 1.0

    show_collect = agent == PRINCIPAL or task.assistant_observes_target
    for (x, y), cls in state.objects.items():
        if not visible[y, x]:
            continue
        bits[y, x, BIT_OBJECT] = 1.0
        bits[y, x, BIT_CLASS0 + cls] = 1.0
        if show_collect:
            bits[y, x, BIT_COLLECT0 + (1 if cls == task.target_class else 0)] = 1.0
    return bits


def task_onehot(task: TaskSpec) -> np.ndarray:
    v = np.zeros(2, dtype=np.float32)
    v[task.target_class] = 1.0
    return v
