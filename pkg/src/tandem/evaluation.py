"""Test-set evaluation, reward attribution, baselines, planning oracle."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .envs import (
    ASSISTANT,
    PRINCIPAL,
    EnvError,
    GameSpec,
    TaskSpec,
    heldout_tasks,
    resolve_moves,
)
from .models import ModelParams
from .training import TrainConfig, rollout_batch, train


class EvalError(Exception):
    pass


@dataclass
class EvalReport:
    n_tasks: int
    joint_mean: float
    joint_std: float
    p_mean: float
    p_std: float
    a_mean: float
    a_std: float
    inference_error_rate: float
    per_task: list

    def to_dict(self):
        return {
            "n_tasks": self.n_tasks,
            "joint_reward": [self.joint_mean, self.joint_std],
            "reward_due_to_p": [self.p_mean, self.p_std],
            "reward_due_to_a": [self.a_mean, self.a_std],
            "inference_error_rate": self.inference_error_rate,
        }


def _assistant_inference_error(record) -> bool:
    """True when the assistant collected at least one object and every one
    of its collections was non-target."""
    picks = [
        cls == record.task.target_class
        for step in record.collected
        for _cell, cls, who in step
        if who in ("assistant", "both")
    ]
    return bool(picks) and not any(picks)


def summarize(records) -> EvalReport:
    joints = np.array([r.rewards.sum() for r in records])
    ps = np.array([r.splits[:, 0].sum() for r in records])
    as_ = np.array([r.splits[:, 1].sum() for r in records])
    errs = np.array([_assistant_inference_error(r) for r in records])
    std = lambda x: float(x.std(ddof=1)) if len(x) > 1 else 0.0
    return EvalReport(
        n_tasks=len(records),
        joint_mean=float(joints.mean()),
        joint_std=std(joints),
        p_mean=float(ps.mean()),
        p_std=std(ps),
        a_mean=float(as_.mean()),
        a_std=std(as_),
        inference_error_rate=float(errs.mean()),
        per_task=[
            {
                "joint": float(j),
                "due_to_p": float(p),
                "due_to_a": float(a),
                "inference_error": bool(e),
            }
            for j, p, a, e in zip(joints, ps, as_, errs)
        ],
    )


def evaluate(params: ModelParams, tasks, solo=False) -> EvalReport:
    """Greedy (epsilon=0) rollouts over a task set; deterministic."""
    if not tasks:
        raise EvalError("empty task set")
    records = rollout_batch(params, list(tasks), 0.0, None, solo=solo)
    return summarize(records)


def evaluate_random(spec_or_tasks, seed=0, n=100) -> EvalReport:
    """Uniform-random policy baseline (epsilon=1 rollouts)."""
    if isinstance(spec_or_tasks, GameSpec):
        tasks = heldout_tasks(spec_or_tasks, n)
        spec = spec_or_tasks
    else:
        tasks = list(spec_or_tasks)
        spec = tasks[0].spec
    from .training import build_architecture
    from .models import init_params

    params = init_params(build_architecture(spec, "maidrqn" if spec.observation_mode == "bits" else "maddrqn"), seed)
    rng = np.random.default_rng(seed)
    return summarize(rollout_batch(params, tasks, 1.0, rng))


BASELINES = ("solo-p", "oracle-a", "feedfwd-a", "random")


def run_baseline(kind: str, spec: GameSpec, seed: int,
                 config: TrainConfig | None = None, n_tasks: int = 100) -> EvalReport:
    """Train (where applicable) and evaluate one of the reference rows:
    solo-p (principal alone), oracle-a (assistant sees the collect bits),
    feedfwd-a (assistant without recurrence), random."""
    if kind not in BASELINES:
        raise EvalError(f"unknown baseline {kind!r}")
    if kind == "random":
        return evaluate_random(spec, seed=seed, n=n_tasks)
    config = config or TrainConfig()
    config = replace(config, seed=seed)
    eval_spec = spec
    if kind == "solo-p":
        config = replace(config, solo=True)
    elif kind == "oracle-a":
        eval_spec = replace(spec, assistant_sees_target="always")
    elif kind == "feedfwd-a":
        config = replace(config, assistant_feedforward=True)
    result = train(config, eval_spec)
    tasks = heldout_tasks(eval_spec, n_tasks, base_seed=777)
    return evaluate(result.params, tasks, solo=config.solo)


MAX_BRUTE_SEQUENCES = 25**4


def brute_force_return(task: TaskSpec, horizon: int, gamma: float) -> float:
    """Optimal joint discounted return by exhaustive enumeration of all
    25^horizon joint-action sequences (level-wise, vectorized), under
    full observability. Restricted to small instances."""
    spec = task.spec
    cells = spec.cell_list()
    if len(cells) > 9 or len(task.objects) > 3 or 25**horizon > MAX_BRUTE_SEQUENCES:
        raise EvalError(
            f"instance too large for brute force: {len(cells)} cells, "
            f"{len(task.objects)} objects, horizon {horizon}"
        )
    cell_id = {c: i for i, c in enumerate(cells)}
    n_cells = len(cells)
    # Move table: move[pos, action] -> new pos (off-world moves are no-ops).
    move = np.empty((n_cells, 5), dtype=np.int64)
    from .envs import ACTION_DELTAS

    for c, i in cell_id.items():
        for a, (dx, dy) in enumerate(ACTION_DELTAS):
            cand = (c[0] + dx, c[1] + dy)
            move[i, a] = cell_id[cand] if spec.in_world(cand) else i

    obj_cells = np.array([cell_id[c] for c, _ in task.objects], dtype=np.int64)
    obj_vals = np.array(
        [1.0 if k == task.target_class else -1.0 for _, k in task.objects]
    )
    exclusive = spec.collision_mode == "exclusive"

    pp = np.array([cell_id[task.starts[PRINCIPAL]]])
    pa = np.array([cell_id[task.starts[ASSISTANT]]])
    mask = np.array([(1 << len(obj_cells)) - 1], dtype=np.int64)
    acc = np.zeros(1)

    for depth in range(horizon):
        n = pp.shape[0]
        # Expand every state by all 25 joint actions.
        pp = np.repeat(pp, 25)
        pa = np.repeat(pa, 25)
        mask = np.repeat(mask, 25)
        acc = np.repeat(acc, 25)
        a_p = np.tile(np.repeat(np.arange(5), 5), n)
        a_a = np.tile(np.tile(np.arange(5), 5), n)
        dp = move[pp, a_p]
        da = move[pa, a_a]
        if exclusive:
            swap = (dp == pa) & (da == pp)
            dp = np.where(swap, pp, dp)
            da = np.where(swap, pa, da)
            same = dp == da
            da = np.where(same, pa, da)
            blocked = dp == da
            dp = np.where(blocked, pp, dp)
        r = np.zeros(n * 25)
        for j in range(len(obj_cells)):
            present = (mask >> j) & 1 == 1
            hit = present & ((dp == obj_cells[j]) | (da == obj_cells[j]))
            r += obj_vals[j] * hit
            mask = np.where(hit, mask & ~(1 << j), mask)
        if spec.motion_penalty:
            r += spec.motion_penalty * (dp != pp)
        acc = acc + (gamma**depth) * r
        pp, pa = dp, da
    return float(acc.max())


def ordering_check(reports: dict) -> bool:
    """Soft sanity ordering: oracle-a >= trained >= random on joint reward."""
    return (
        reports["oracle-a"].joint_mean >= reports["trained"].joint_mean
        >= reports["random"].joint_mean
    )
