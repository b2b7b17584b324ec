"""Episodic training: epsilon-greedy rollouts, Bellman losses, Adam loop.

Each gradient step samples a fresh batch of tasks, rolls out one episode
per task with epsilon-greedy actions, and takes one Adam step on the sum
of per-episode losses. No replay buffer, no target network; Bellman
targets are stop-gradiented instead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .envs import (
    ASSISTANT,
    PRINCIPAL,
    GameSpec,
    TaskSpec,
    env_init,
    env_step,
    sample_task,
    task_onehot,
)
from .models import (
    Architecture,
    ModelParams,
    RecurrentState,
    init_params,
    init_recurrent,
    maddrqn_architecture,
    maidrqn_architecture,
    maidrqn_forward,
    maddrqn_forward,
)
from .optim import AdamState, adam_step


class TrainingError(Exception):
    pass


@dataclass
class TrainConfig:
    variant: str = "maidrqn"  # "maidrqn" | "maddrqn"
    batch_size: int = 32
    steps: int = 20_000
    epsilon: float = 0.05
    gamma: float = 0.9
    lr: float = 1e-3
    seed: int = 0
    eval_every: int = 500
    eval_tasks: int = 100
    scale: str = "desk"  # "desk" | "paper", informational
    solo: bool = False  # principal-only training (Solo-P baseline)
    assistant_feedforward: bool = False

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise TrainingError("epsilon must be in [0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise TrainingError("gamma must be in [0, 1]")
        if self.batch_size < 1:
            raise TrainingError("batch size must be >= 1")


@dataclass
class EpisodeRecord:
    """One played-out episode: everything needed to recompute its loss."""

    task: TaskSpec
    obs_p: np.ndarray  # (H+1, ...) principal observations
    obs_a: np.ndarray
    actions: np.ndarray  # (H, 2) int
    rewards: np.ndarray  # (H,)
    splits: np.ndarray  # (H, 2) attribution (P, A)
    collected: list  # per step, tuple of (cell, class, collector)

    @property
    def joint_return(self):
        return float(self.rewards.sum())


def build_architecture(spec: GameSpec, variant: str, assistant_feedforward=False,
                       hidden=50) -> Architecture:
    if spec.observation_mode == "bits":
        fh, fw = spec.frame_shape()
        obs_shape = (fh, fw, 8)
    else:
        obs_shape = (spec.render_size, spec.render_size, 3)
    if variant == "maidrqn":
        arch = maidrqn_architecture(obs_shape, hidden=hidden)
    elif variant == "maddrqn":
        arch = maddrqn_architecture(obs_shape, hidden=hidden)
    else:
        raise TrainingError(f"unknown model variant {variant!r}")
    if assistant_feedforward:
        arch = replace(arch, assistant_feedforward=True)
    return arch


def epsilon_greedy(values, epsilon: float, rng) -> int:
    """Argmax with probability 1-epsilon (lowest index on ties), else
    uniform over the action set."""
    values = np.asarray(values)
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(values.shape[-1]))
    return int(np.argmax(values))


def _batched_actions(values, epsilon, rng):
    greedy = np.argmax(values, axis=-1)
    if epsilon <= 0.0 or rng is None:
        return greedy
    explore = rng.random(values.shape[0]) < epsilon
    random_a = rng.integers(values.shape[-1], size=values.shape[0])
    return np.where(explore, random_a, greedy)


def _policy_values(params: ModelParams, obs_p, obs_a, onehots, rec: RecurrentState):
    """Greedy action values for both agents (no tape needed by callers)."""
    if params.arch.variant == "maidrqn":
        q_p, h_p, c_p = maidrqn_forward(params, "P/", obs_p, rec.h_p, rec.c_p)
        q_a, h_a, c_a = maidrqn_forward(params, "A/", obs_a, rec.h_a, rec.c_a)
        return q_p.data, q_a.data, RecurrentState(h_p, c_p, h_a, c_a)
    adv_p, adv_a, _v, rec = maddrqn_forward(params, obs_p, obs_a, onehots, rec)
    return adv_p.data, adv_a.data, rec


def rollout_batch(params: ModelParams, tasks, epsilon: float, rng,
                  solo=False) -> list[EpisodeRecord]:
    """Play one episode per task in lockstep; recurrent state zeroed at
    the start. solo forces the assistant to stay in place."""
    b = len(tasks)
    spec = tasks[0].spec
    horizon = spec.horizon
    states, obs_p, obs_a = [], [], []
    for task in tasks:
        s, (op, oa) = env_init(task)
        states.append(s)
        obs_p.append(op)
        obs_a.append(oa)
    onehots = np.stack([task_onehot(t) for t in tasks])
    rec = init_recurrent(params.arch, b)

    all_obs_p = [np.stack(obs_p)]
    all_obs_a = [np.stack(obs_a)]
    actions = np.zeros((horizon, b, 2), dtype=np.int64)
    rewards = np.zeros((horizon, b), dtype=np.float64)
    splits = np.zeros((horizon, b, 2), dtype=np.float64)
    collected = [[None] * horizon for _ in range(b)]

    for t in range(horizon):
        q_p, q_a, rec = _policy_values(params, all_obs_p[-1], all_obs_a[-1], onehots, rec)
        a_p = _batched_actions(q_p, epsilon, rng)
        a_a = np.zeros(b, dtype=np.int64) if solo else _batched_actions(q_a, epsilon, rng)
        step_p, step_a = [], []
        for i, task in enumerate(tasks):
            states[i], out = env_step(states[i], task, int(a_p[i]), int(a_a[i]))
            rewards[t, i] = out.reward
            splits[t, i] = out.reward_split
            collected[i][t] = out.collected
            step_p.append(out.observations[PRINCIPAL])
            step_a.append(out.observations[ASSISTANT])
        actions[t, :, PRINCIPAL] = a_p
        actions[t, :, ASSISTANT] = a_a
        all_obs_p.append(np.stack(step_p))
        all_obs_a.append(np.stack(step_a))

    stacked_p = np.stack(all_obs_p)  # (H+1, B, ...)
    stacked_a = np.stack(all_obs_a)
    return [
        EpisodeRecord(
            task=tasks[i],
            obs_p=stacked_p[:, i],
            obs_a=stacked_a[:, i],
            actions=actions[:, i],
            rewards=rewards[:, i],
            splits=splits[:, i],
            collected=collected[i],
        )
        for i in range(b)
    ]


def rollout(task: TaskSpec, params: ModelParams, epsilon: float, rng,
            solo=False) -> EpisodeRecord:
    """Single-episode rollout (batch of one)."""
    return rollout_batch(params, [task], epsilon, rng, solo=solo)[0]


def _stack_records(records):
    obs_p = np.stack([r.obs_p for r in records], axis=1)  # (H+1, B, ...)
    obs_a = np.stack([r.obs_a for r in records], axis=1)
    actions = np.stack([r.actions for r in records], axis=1)  # (H, B, 2)
    rewards = np.stack([r.rewards for r in records], axis=1).astype(np.float32)
    onehots = np.stack([task_onehot(r.task) for r in records])
    return obs_p, obs_a, actions, rewards, onehots


def _bellman_terms(q_seq, actions_seq, rewards, gamma, target_mode):
    """Sum over t and batch of squared Bellman errors for one value
    sequence. Targets bootstrap from the next step's max except at the
    final step, which uses the reward alone."""
    horizon = len(q_seq)
    total = None
    g = np.float32(gamma)
    for t in range(horizon):
        sel = ad.select_actions(q_seq[t], actions_seq[t])
        if t < horizon - 1:
            if target_mode == "stop_gradient":
                nxt = ad.stop_gradient(ad.reduce_max(q_seq[t + 1], axis=1))
                tgt = ad.add(Tensor(rewards[t]), ad.mul(Tensor(g), nxt))
            else:  # precomputed constants
                tgt = Tensor(rewards[t] + g * q_seq[t + 1].data.max(axis=1))
        else:
            tgt = Tensor(rewards[t])
        err = ad.reduce_sum(ad.squared_error(sel, tgt))
        total = err if total is None else ad.add(total, err)
    return total


def maidrqn_loss(records, params: ModelParams, gamma: float, solo=False,
                 target_mode="stop_gradient"):
    """Mean over agents of summed squared Bellman errors (sum over batch
    and time). Must run under an active Tape to be differentiable."""
    obs_p, obs_a, actions, rewards, _ = _stack_records(records)
    horizon = actions.shape[0]
    b = actions.shape[1]
    rec = init_recurrent(params.arch, b)
    agents = [("P/", obs_p, PRINCIPAL, rec.h_p, rec.c_p)]
    if not solo:
        agents.append(("A/", obs_a, ASSISTANT, rec.h_a, rec.c_a))
    total = None
    for prefix, obs, idx, h, c in agents:
        q_seq = []
        for t in range(horizon):
            q, h, c = maidrqn_forward(params, prefix, obs[t], h, c)
            q_seq.append(q)
        term = _bellman_terms(q_seq, actions[:, :, idx], rewards, gamma, target_mode)
        total = term if total is None else ad.add(total, term)
    scale = np.float32(1.0 / len(agents))
    loss = ad.mul(total, Tensor(scale))
    if not np.isfinite(loss.data):
        raise TrainingError(f"non-finite loss {loss.data}")
    return loss


def maddrqn_loss(records, params: ModelParams, gamma: float,
                 target_mode="stop_gradient"):
    """Summed squared errors of the joint Q (value head plus per-agent
    advantages) against stop-gradiented one-step targets. The joint max
    decomposes into per-agent advantage maxes plus the value."""
    obs_p, obs_a, actions, rewards, onehots = _stack_records(records)
    horizon = actions.shape[0]
    b = actions.shape[1]
    rec = init_recurrent(params.arch, b)
    g = np.float32(gamma)
    total = None
    seq = []
    for t in range(horizon):
        adv_p, adv_a, v, rec = maddrqn_forward(params, obs_p[t], obs_a[t], onehots, rec)
        seq.append((adv_p, adv_a, ad.reshape(v, (b,))))
    for t in range(horizon):
        adv_p, adv_a, v = seq[t]
        sel = ad.add(v, ad.add(ad.select_actions(adv_p, actions[t, :, PRINCIPAL]),
                               ad.select_actions(adv_a, actions[t, :, ASSISTANT])))
        if t < horizon - 1:
            np1, na1, v1 = seq[t + 1]
            if target_mode == "stop_gradient":
                joint_max = ad.add(v1, ad.add(ad.reduce_max(np1, axis=1),
                                              ad.reduce_max(na1, axis=1)))
                tgt = ad.add(Tensor(rewards[t]),
                             ad.mul(Tensor(g), ad.stop_gradient(joint_max)))
            else:
                const = rewards[t] + g * (
                    v1.data + np1.data.max(axis=1) + na1.data.max(axis=1)
                )
                tgt = Tensor(const)
        else:
            tgt = Tensor(rewards[t])
        err = ad.reduce_sum(ad.squared_error(sel, tgt))
        total = err if total is None else ad.add(total, err)
    if not np.isfinite(total.data):
        raise TrainingError(f"non-finite loss {total.data}")
    return total


def batch_loss(records, params, gamma, solo=False, target_mode="stop_gradient"):
    if params.arch.variant == "maidrqn":
        return maidrqn_loss(records, params, gamma, solo=solo, target_mode=target_mode)
    return maddrqn_loss(records, params, gamma, target_mode=target_mode)


def detect_failure(eval_rewards, threshold=0.1):
    """Index of the first evaluation where the joint reward drops below
    the threshold after having exceeded it; None if never."""
    exceeded = False
    for i, r in enumerate(eval_rewards):
        if r >= threshold:
            exceeded = True
        elif exceeded:
            return i
    return None


@dataclass
class TrainResult:
    params: ModelParams
    adam: AdamState
    metrics: list
    halted: bool = False  # non-finite loss instability halt
    halt_step: int | None = None
    failure_fired: bool = False


def train(config: TrainConfig, spec: GameSpec, metrics_sink=None,
          checkpoint_sink=None) -> TrainResult:
    """Run the episodic training loop.

    metrics_sink, if given, receives one dict per emitted record.
    checkpoint_sink(params, adam, step) is called at every evaluation
    point and once at the end. Deterministic for a fixed seed when run
    single-threaded.
    """
    from .evaluation import evaluate  # deferred: evaluation imports this module

    arch = build_architecture(spec, config.variant,
                              assistant_feedforward=config.assistant_feedforward)
    params = init_params(arch, config.seed)
    adam = AdamState(lr=config.lr)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xE15]))
    task_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x7A5C]))
    from .envs import heldout_tasks

    eval_tasks = heldout_tasks(spec, config.eval_tasks, base_seed=config.seed % 1000)
    metrics = []
    start = time.monotonic()
    exceeded = False
    failure_fired = False

    def emit(record):
        metrics.append(record)
        if metrics_sink is not None:
            metrics_sink(record)

    for step in range(1, config.steps + 1):
        seeds = task_rng.integers(0, 10**9, size=config.batch_size)
        tasks = [sample_task(spec, int(s)) for s in seeds]
        records = rollout_batch(params, tasks, config.epsilon, rng, solo=config.solo)
        try:
            with Tape() as tape:
                loss = batch_loss(records, params, config.gamma, solo=config.solo)
            grads = ad.backward(tape, loss)
        except TrainingError:
            emit({"step": step, "event": "instability-halt",
                  "wall_time": time.monotonic() - start})
            return TrainResult(params, adam, metrics, halted=True, halt_step=step,
                               failure_fired=failure_fired)
        named = {t.name: g for t, g in grads.items()}
        adam_step(params.tensors, named, adam)

        if step % config.eval_every == 0 or step == config.steps:
            report = evaluate(params, eval_tasks, solo=config.solo)
            emit({
                "step": step,
                "loss": float(loss.data),
                "eval_joint_reward": report.joint_mean,
                "reward_due_to_p": report.p_mean,
                "reward_due_to_a": report.a_mean,
                "wall_time": time.monotonic() - start,
            })
            if report.joint_mean >= 0.1:
                exceeded = True
            elif exceeded and not failure_fired:
                failure_fired = True
                emit({"step": step, "event": "failure",
                      "eval_joint_reward": report.joint_mean,
                      "wall_time": time.monotonic() - start})
            if checkpoint_sink is not None:
                checkpoint_sink(params, adam, step)
    return TrainResult(params, adam, metrics, failure_fired=failure_fired)
