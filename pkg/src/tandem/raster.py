"""Deterministic raster renderer for the pixel (fruit) environment.

Each agent sees an NxN RGB image centered on itself: the whole board is
in frame when the agent stands at the center and slides out of view as
it moves away. Out-of-world area is background. The palette is fixed so
golden-image tests are bit-exact.
"""

from __future__ import annotations

import numpy as np

from .envs import ASSISTANT, PRINCIPAL, TaskSpec, WorldState

# Fixed palette (RGB in [0, 1]).
PALETTE = {
    "background": (0.12, 0.12, 0.14),
    "floor": (0.35, 0.52, 0.28),
    "lemon": (0.93, 0.85, 0.12),  # object class 0
    "plum": (0.52, 0.16, 0.58),  # object class 1
    "principal": (0.94, 0.36, 0.62),
    "assistant": (0.25, 0.45, 0.92),
}
FRUIT_NAMES = ("lemons", "plums")


def _fill(img, x0, y0, size, color):
    img[y0 : y0 + size, x0 : x0 + size] = color


def render_world(state: WorldState, task: TaskSpec, cell_px: int) -> np.ndarray:
    """Full-board raster at cell_px pixels per cell, NHWC-style (h, w, 3)."""
    spec = task.spec
    img = np.empty((spec.height * cell_px, spec.width * cell_px, 3), dtype=np.float32)
    img[:] = PALETTE["background"]
    for x, y in spec.cell_list():
        _fill(img, x * cell_px, y * cell_px, cell_px, PALETTE["floor"])

    pad = max(1, cell_px // 4)
    fruit = cell_px - 2 * pad
    for (x, y), cls in state.objects.items():
        color = PALETTE["lemon"] if cls == 0 else PALETTE["plum"]
        _fill(img, x * cell_px + pad, y * cell_px + pad, fruit, color)

    lip = max(1, cell_px // 8)
    body = cell_px - 2 * lip
    for who, key in ((ASSISTANT, "assistant"), (PRINCIPAL, "principal")):
        x, y = state.positions[who]
        _fill(img, x * cell_px + lip, y * cell_px + lip, body, PALETTE[key])
    return img


def render_pixels(state: WorldState, task: TaskSpec, agent: int) -> np.ndarray:
    """Agent-centered (N, N, 3) view, N = spec.render_size."""
    spec = task.spec
    n = spec.render_size
    cell_px = n // max(spec.width, spec.height)
    world = render_world(state, task, cell_px)
    canvas = np.empty((world.shape[0] + 2 * n, world.shape[1] + 2 * n, 3), dtype=np.float32)
    canvas[:] = PALETTE["background"]
    canvas[n : n + world.shape[0], n : n + world.shape[1]] = world

    ax, ay = state.positions[agent]
    cx = n + ax * cell_px + cell_px // 2
    cy = n + ay * cell_px + cell_px // 2
    x0, y0 = cx - n // 2, cy - n // 2
    return canvas[y0 : y0 + n, x0 : x0 + n].copy()
