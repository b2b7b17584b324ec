"""Episode trace files: line-delimited JSON, one step per line.

Line 1 is a versioned header with the game spec and task; every
following line is one step. A trace verifies by replaying its actions
through the environment and checking rewards and positions exactly.
"""

from __future__ import annotations

import json

from .envs import GameSpec, TaskSpec, env_init, env_step

FORMAT = "tandem-trace"
VERSION = 1


class TraceError(Exception):
    pass


def export_trace(record) -> str:
    """Serialize an EpisodeRecord to trace text."""
    task = record.task
    header = {
        "format": FORMAT,
        "version": VERSION,
        "game_spec": task.spec.to_dict(),
        "task": task.to_dict(),
    }
    lines = [json.dumps(header)]
    for t in range(len(record.rewards)):
        lines.append(json.dumps({
            "t": t,
            "action_p": int(record.actions[t, 0]),
            "action_a": int(record.actions[t, 1]),
            "reward": float(record.rewards[t]),
            "split": [float(record.splits[t, 0]), float(record.splits[t, 1])],
            "collected": [
                {"cell": list(cell), "class": int(cls), "by": who}
                for cell, cls, who in record.collected[t]
            ],
        }))
    return "\n".join(lines) + "\n"


def parse_trace(text: str):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TraceError("empty trace")
    header = json.loads(lines[0])
    if header.get("format") != FORMAT:
        raise TraceError(f"not a trace file (format={header.get('format')!r})")
    if header.get("version") != VERSION:
        raise TraceError(f"unsupported trace version {header.get('version')!r}")
    spec = GameSpec.from_dict(header["game_spec"])
    task = TaskSpec.from_dict(spec, header["task"])
    steps = [json.loads(ln) for ln in lines[1:]]
    return task, steps


def replay_trace(text: str) -> bool:
    """Re-run the trace's actions through the environment; True when every
    recorded reward and attribution matches exactly."""
    task, steps = parse_trace(text)
    state, _ = env_init(task)
    if len(steps) != task.spec.horizon:
        raise TraceError(
            f"trace has {len(steps)} steps, horizon is {task.spec.horizon}"
        )
    for step in steps:
        t = step["t"]
        state, out = env_step(state, task, step["action_p"], step["action_a"])
        if abs(out.reward - step["reward"]) > 0:
            raise TraceError(
                f"step {t}: replayed reward {out.reward} != recorded {step['reward']}"
            )
        if (abs(out.reward_split[0] - step["split"][0]) > 0
                or abs(out.reward_split[1] - step["split"][1]) > 0):
            raise TraceError(f"step {t}: attribution mismatch")
    return True
