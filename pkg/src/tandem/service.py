"""Live play service: a human (or scripted) principal plus a
checkpoint-loaded assistant stepping the environment together.

The session is a pure state machine (GameSession) driven by key events;
the FastAPI app wires one session per websocket connection and speaks
line-of-JSON messages with a protocol version. The environment advances
only when the principal's key arrives, and every action message is
answered by exactly one state frame.
"""

from __future__ import annotations

import itertools
import json
import os
import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .envs import (
    ASSISTANT,
    PRINCIPAL,
    GameSpec,
    env_init,
    env_step,
    observe,
    sample_task,
    task_onehot,
)
from .models import ModelParams, init_recurrent, maddrqn_forward, maidrqn_forward
from .raster import FRUIT_NAMES

PROTOCOL_VERSION = 1

KEY_ACTIONS = {"Space": 0, "a": 1, "d": 2, "w": 3, "s": 4}
PHASES = ("awaiting-start", "in-episode", "finished")


class SessionError(Exception):
    pass


class GameSession:
    """One play session: phase machine, scores, per-episode trace."""

    _ids = itertools.count(1)

    def __init__(self, params: ModelParams, spec: GameSpec, seed: int = 0,
                 mode: str = "with-assistant", episodes_target: int | None = None):
        if mode not in ("with-assistant", "solo"):
            raise SessionError(f"unknown mode {mode!r}")
        self.session_id = next(self._ids)
        self.params = params
        self.spec = spec
        self.mode = mode
        self.practice = False
        self.episodes_target = episodes_target
        self.phase = "awaiting-start"
        self.scores = {"episodes": 0, "joint": 0.0, "due_to_p": 0.0, "due_to_a": 0.0}
        self._seed_stream = np.random.default_rng(np.random.SeedSequence([seed, 0x9A3E]))
        self._episode_index = 0
        self.task = None
        self.state = None
        self._rec = None
        self._obs = None
        self._episode = None  # accumulators for the running episode
        self.traces = []  # (task, actions, rewards, splits) per finished episode

    @classmethod
    def from_checkpoint(cls, path, seed=0, **kw):
        from .checkpoint import load_checkpoint

        params, _, header = load_checkpoint(path)
        spec = GameSpec.from_dict(header["config"]["game_spec"])
        return cls(params, spec, seed=seed, **kw)

    # -- message builders ---------------------------------------------------

    def _frame(self):
        return {
            "type": "state_frame",
            "protocol": PROTOCOL_VERSION,
            "step": self.state.t,
            "horizon": self.spec.horizon,
            "positions": [list(p) for p in self.state.positions],
            "objects": [{"cell": list(c), "class": k} for c, k in sorted(self.state.objects.items())],
            "target_class": self.task.target_class,
            "scores": dict(self.scores),
            "mode": self.mode,
            "grid": {"width": self.spec.width, "height": self.spec.height,
                     "cells": [list(c) for c in self.spec.cell_list()]},
        }

    def _reject(self, reason):
        return [{"type": "rejected", "protocol": PROTOCOL_VERSION, "reason": reason}]

    # -- protocol -----------------------------------------------------------

    def set_mode(self, mode: str, practice: bool = False):
        if self.phase == "in-episode":
            return self._reject("cannot change mode mid-episode")
        if mode not in ("with-assistant", "solo"):
            return self._reject(f"unknown mode {mode!r}")
        self.mode = mode
        self.practice = bool(practice)
        return [{"type": "mode_set", "protocol": PROTOCOL_VERSION,
                 "mode": mode, "practice": self.practice}]

    def start_episode(self, task_seed: int | None = None):
        if self.phase != "awaiting-start":
            return self._reject(f"cannot start an episode in phase {self.phase}")
        if task_seed is None:
            task_seed = int(self._seed_stream.integers(0, 2**31))
        self.task = sample_task(self.spec, task_seed)
        self.state, obs = env_init(self.task)
        self._obs = obs
        self._rec = init_recurrent(self.params.arch, 1)
        self._episode = {"actions": [], "rewards": [], "splits": [],
                         "collected": [], "task_seed": task_seed}
        self._episode_index += 1
        self.phase = "in-episode"
        return [
            {
                "type": "task_display",
                "protocol": PROTOCOL_VERSION,
                "episode": self._episode_index,
                "target_class": self.task.target_class,
                "target_fruit": FRUIT_NAMES[self.task.target_class],
                "task": self.task.to_dict(),
                "task_seed": task_seed,
            },
            self._frame(),
        ]

    def _assistant_greedy(self):
        if self.mode == "solo":
            return 0
        p = self.params
        if p.arch.variant == "maidrqn":
            q, h, c = maidrqn_forward(p, "A/", self._obs[ASSISTANT][None],
                                      self._rec.h_a, self._rec.c_a)
            self._rec.h_a, self._rec.c_a = h, c
            return int(np.argmax(q.data[0]))
        onehot = task_onehot(self.task)[None]
        adv_p, adv_a, _v, self._rec = maddrqn_forward(
            p, self._obs[PRINCIPAL][None], self._obs[ASSISTANT][None], onehot, self._rec
        )
        return int(np.argmax(adv_a.data[0]))

    def step(self, action_p: int):
        if self.phase != "in-episode":
            return self._reject(f"no episode in progress (phase {self.phase})")
        action_a = self._assistant_greedy()
        self.state, out = env_step(self.state, self.task, action_p, action_a)
        self._obs = out.observations
        ep = self._episode
        ep["actions"].append((action_p, action_a))
        ep["rewards"].append(out.reward)
        ep["splits"].append(out.reward_split)
        ep["collected"].append(out.collected)
        msgs = [
            {
                "type": "step_result",
                "protocol": PROTOCOL_VERSION,
                "step": self.state.t,
                "action_p": action_p,
                "action_a": action_a,
                "reward": out.reward,
                "split": list(out.reward_split),
                "collected": [
                    {"cell": list(c), "class": k, "by": who} for c, k, who in out.collected
                ],
                "done": out.done,
            }
        ]
        if out.done:
            joint = float(sum(ep["rewards"]))
            due_p = float(sum(s[0] for s in ep["splits"]))
            due_a = float(sum(s[1] for s in ep["splits"]))
            if not self.practice:
                self.scores["episodes"] += 1
                self.scores["joint"] += joint
                self.scores["due_to_p"] += due_p
                self.scores["due_to_a"] += due_a
            self.traces.append(dict(ep, task=self.task))
            self.phase = "awaiting-start"
            if (self.episodes_target is not None
                    and self.scores["episodes"] >= self.episodes_target):
                self.phase = "finished"
            msgs.append(self._frame())
            msgs.append({
                "type": "episode_summary",
                "protocol": PROTOCOL_VERSION,
                "episode": self._episode_index,
                "practice": self.practice,
                "joint_reward": joint,
                "due_to_p": due_p,
                "due_to_a": due_a,
                "scores": dict(self.scores),
            })
        else:
            msgs.append(self._frame())
        return msgs

    def handle_key(self, key: str, task_seed: int | None = None):
        """Keyboard protocol: Enter starts; Space/a/d/w/s act."""
        if key == "Enter":
            return self.start_episode(task_seed=task_seed)
        if key in KEY_ACTIONS:
            return self.step(KEY_ACTIONS[key])
        return self._reject(f"unknown key {key!r}")

    def handle_message(self, msg: dict):
        kind = msg.get("type")
        if kind == "start_episode":
            return self.start_episode(task_seed=msg.get("task_seed"))
        if kind == "action":
            return self.handle_key(msg.get("key", ""))
        if kind == "set_mode":
            return self.set_mode(msg.get("mode", ""), practice=msg.get("practice", False))
        return self._reject(f"unknown message type {kind!r}")


def create_app(checkpoint_path, seed: int = 0, static_dir: str | None = None):
    """FastAPI app: websocket endpoint at /ws, UI assets at / when built."""
    from fastapi.staticfiles import StaticFiles

    from .checkpoint import load_checkpoint

    params, _, header = load_checkpoint(checkpoint_path)
    spec = GameSpec.from_dict(header["config"]["game_spec"])
    app = FastAPI(title="tandem play service")

    @app.get("/health")
    def health():
        return {"ok": True, "protocol": PROTOCOL_VERSION}

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        mode = ws.query_params.get("mode", "with-assistant")
        session = GameSession(params, spec, seed=seed, mode=mode)
        await ws.send_json({"type": "hello", "protocol": PROTOCOL_VERSION,
                            "session_id": session.session_id, "mode": session.mode,
                            "horizon": spec.horizon})
        try:
            while True:
                msg = await ws.receive_json()
                for reply in session.handle_message(msg):
                    await ws.send_json(reply)
        except WebSocketDisconnect:
            pass  # mid-episode disconnect: session (and partial scores) discarded

    candidates = [static_dir] if static_dir else [
        os.path.join(os.path.dirname(__file__), "..", "..", "frontend", "dist"),
        "frontend/dist",
    ]
    for cand in candidates:
        if cand and os.path.isdir(cand):
            app.mount("/", StaticFiles(directory=cand, html=True), name="ui")
            break
    return app


def scripted_principal(connection, params: ModelParams, spec: GameSpec,
                       task_seeds, solo: bool = False):
    """Drive a play session over the wire with a greedy principal policy.

    `connection` needs send_json/receive_json (a websocket client or the
    test client's session). Returns per-episode (joint, due_p, due_a)
    sums and the final summary message.
    """
    from .envs import TaskSpec, WorldState

    hello = connection.receive_json()
    if hello.get("type") != "hello" or hello.get("protocol") != PROTOCOL_VERSION:
        raise SessionError(f"bad handshake: {hello}")
    results = []
    last_summary = None
    for task_seed in task_seeds:
        connection.send_json({"type": "start_episode", "task_seed": int(task_seed)})
        display = connection.receive_json()
        if display.get("type") != "task_display":
            raise SessionError(f"expected task_display, got {display}")
        task = TaskSpec.from_dict(spec, display["task"])
        frame = connection.receive_json()
        state = WorldState(positions=[tuple(p) for p in frame["positions"]],
                           objects={tuple(o["cell"]): o["class"] for o in frame["objects"]},
                           t=frame["step"])
        rec = init_recurrent(params.arch, 1)
        onehot = task_onehot(task)[None]
        keys = {0: "Space", 1: "a", 2: "d", 3: "w", 4: "s"}
        for _ in range(spec.horizon):
            obs_p = observe(state, task, PRINCIPAL)
            if params.arch.variant == "maidrqn":
                q, rec.h_p, rec.c_p = maidrqn_forward(params, "P/", obs_p[None],
                                                      rec.h_p, rec.c_p)
                action = int(np.argmax(q.data[0]))
            else:
                obs_a = observe(state, task, ASSISTANT)
                adv_p, _adv_a, _v, rec = maddrqn_forward(params, obs_p[None],
                                                         obs_a[None], onehot, rec)
                action = int(np.argmax(adv_p.data[0]))
            connection.send_json({"type": "action", "key": keys[action]})
            result = connection.receive_json()
            if result.get("type") != "step_result":
                raise SessionError(f"expected step_result, got {result}")
            frame = connection.receive_json()
            state = WorldState(positions=[tuple(p) for p in frame["positions"]],
                               objects={tuple(o["cell"]): o["class"] for o in frame["objects"]},
                               t=frame["step"])
            if result["done"]:
                last_summary = connection.receive_json()
                results.append((last_summary["joint_reward"],
                                last_summary["due_to_p"], last_summary["due_to_a"]))
    return results, last_summary
