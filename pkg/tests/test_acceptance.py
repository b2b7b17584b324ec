"""Acceptance gate: one test per release criterion.

The two desk-scale learning criteria and the pixel-model smoke test train
real models and dominate the runtime of this file (a few hours on one
CPU); everything else finishes in seconds.
"""

import time

import numpy as np
import pytest

import tandem.autodiff as ad
from tandem.autodiff import Tape, Tensor
from tandem.envs import (
    GameSpec,
    TaskSpec,
    env_init,
    heldout_tasks,
    sample_task,
    transition,
)
from tandem.evaluation import brute_force_return, evaluate, evaluate_random
from tandem.models import (
    Architecture,
    init_params,
    init_recurrent,
    joint_q,
    maddrqn_forward,
    maidrqn_forward,
)
from tandem.presets import game_spec, train_config
from tandem.training import build_architecture, detect_failure, train

from conftest import max_relative_error
from test_evaluation import dfs_optimal_return, small_instances

GRAD_TOL = 1e-4


# -- gradient correctness ----------------------------------------------------

def _t(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def test_gradient_correctness_primitives_and_architectures():
    """Every primitive op and both architectures at toy width: autodiff vs
    64-bit central differences, max relative error < 1e-4."""
    start = time.monotonic()
    rng = np.random.default_rng(7)

    # each case exercises one primitive inside a scalar loss
    x = _t(rng, 3, 4)
    y = _t(rng, 3, 4)
    m = _t(rng, 4, 5)
    v = _t(rng, 5)
    img = _t(rng, 2, 5, 5, 2)
    k = _t(rng, 3, 3, 2, 3)
    hx = _t(rng, 2, 6)
    hh = _t(rng, 2, 4)
    hc = _t(rng, 2, 4)
    hw = _t(rng, 10, 16)
    hb = _t(rng, 16)
    actions = np.array([1, 3, 0])
    cases = {
        "add": ([x, y], lambda: ad.reduce_sum(ad.mul(ad.add(x, y), ad.add(x, y)))),
        "sub": ([x, y], lambda: ad.reduce_sum(ad.mul(ad.sub(x, y), ad.sub(x, y)))),
        "mul": ([x, y], lambda: ad.reduce_sum(ad.mul(x, y))),
        "matmul": ([x, m], lambda: ad.reduce_sum(ad.matmul(x, m))),
        "broadcast-add": ([m, v], lambda: ad.reduce_sum(ad.mul(ad.add(m, v), ad.add(m, v)))),
        "relu": ([x], lambda: ad.reduce_sum(ad.relu(x))),
        "tanh": ([x], lambda: ad.reduce_sum(ad.tanh(x))),
        "sigmoid": ([x], lambda: ad.reduce_sum(ad.sigmoid(x))),
        "softmax": ([x], lambda: ad.reduce_sum(ad.mul(ad.softmax(x, axis=-1), y))),
        "reduce_max": ([x], lambda: ad.reduce_sum(ad.reduce_max(x, axis=1))),
        "reshape": ([x], lambda: ad.reduce_sum(ad.mul(ad.reshape(x, (4, 3)), ad.reshape(x, (4, 3))))),
        "concat": ([x, y], lambda: ad.reduce_sum(ad.mul(ad.concat([x, y], axis=1), ad.concat([x, y], axis=1)))),
        "slice": ([x], lambda: ad.reduce_sum(ad.slice_axis(x, -1, 1, 3))),
        "squared_error": ([x, y], lambda: ad.reduce_sum(ad.squared_error(x, y))),
        "select_actions": ([x], lambda: ad.reduce_sum(ad.select_actions(x, np.array([1, 3, 0])))),
        "conv2d": ([img, k], lambda: ad.reduce_sum(ad.mul(ad.conv2d(img, k, 1, 1), ad.conv2d(img, k, 1, 1)))),
        "lstm_cell": ([hx, hh, hc, hw, hb],
                      lambda: ad.reduce_sum(ad.mul(*ad.lstm_cell(hx, hh, hc, hw, hb)))),
    }
    for name, (tensors, fn) in cases.items():
        err = max_relative_error(fn, tensors)
        assert err < GRAD_TOL, f"{name}: max relative error {err}"

    # stop_gradient is checked analytically (finite differences cannot
    # hold the stopped branch constant): d/dx sum(x * stop(x^2)) = x^2
    with Tape() as tape:
        loss = ad.reduce_sum(ad.mul(x, ad.stop_gradient(ad.mul(x, x))))
    g = ad.backward(tape, loss)[x]
    np.testing.assert_allclose(g, x.data**2, rtol=1e-12)

    # both architectures at toy width, loss = sum of squared heads
    toy_maid = Architecture(variant="maidrqn", obs_shape=(5, 5, 4),
                            conv_filters=(3, 3), conv_paddings=(1, 1), hidden=5)
    p1 = init_params(toy_maid, 3, dtype=np.float64)
    obs = Tensor(np.random.default_rng(0).normal(size=(2, 5, 5, 4)))
    s = init_recurrent(toy_maid, 2, dtype=np.float64)

    def maid_loss():
        q, h, c = maidrqn_forward(p1, "P/", obs, s.h_p, s.c_p)
        q2, _, _ = maidrqn_forward(p1, "P/", obs, h, c)  # through time
        return ad.reduce_sum(ad.add(ad.mul(q, q), ad.mul(q2, q2)))

    p_side = [t for n, t in p1.tensors.items() if n.startswith("P/")]
    err = max_relative_error(maid_loss, p_side)
    assert err < GRAD_TOL, f"maidrqn: max relative error {err}"

    toy_madd = Architecture(variant="maddrqn", obs_shape=(8, 8, 2),
                            conv_filters=(2, 3), conv_kernels=(3, 3),
                            conv_strides=(2, 1), conv_paddings=(1, 1),
                            fc_units=6, hidden=4, task_dim=2,
                            advantage_sub="softmax", use_value=True)
    # seeds chosen so no relu preactivation sits within the FD step of 0
    p2 = init_params(toy_madd, 0, dtype=np.float64)
    obs_p = Tensor(np.random.default_rng(100).normal(size=(2, 8, 8, 2)))
    obs_a = Tensor(np.random.default_rng(200).normal(size=(2, 8, 8, 2)))
    onehot = Tensor(np.tile(np.array([[1.0, 0.0]]), (2, 1)))
    s2 = init_recurrent(toy_madd, 2, dtype=np.float64)

    def madd_loss():
        adv_p, adv_a, val, _ = maddrqn_forward(p2, obs_p, obs_a, onehot, s2)
        return ad.reduce_sum(ad.add(ad.add(ad.mul(adv_p, adv_p), ad.mul(adv_a, adv_a)),
                                    ad.mul(val, val)))

    err = max_relative_error(madd_loss, list(p2.tensors.values()))
    assert err < GRAD_TOL, f"maddrqn: max relative error {err}"
    assert time.monotonic() - start < 120, "gradient suite exceeded 2 minutes"


# -- dueling decomposition ---------------------------------------------------

def test_dueling_decomposition_exact_over_1000_draws():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        v = rng.normal(size=(1,)) * rng.uniform(0.1, 10)
        logits_p = rng.normal(size=(5,)) * rng.uniform(0.1, 10)
        logits_a = rng.normal(size=(5,)) * rng.uniform(0.1, 10)

        def adv(logits):
            e = np.exp(logits - logits.max())
            return logits - e / e.sum()

        adv_p, adv_a = adv(logits_p), adv(logits_a)
        # advantage identity: A + softmax(logits) = logits within 1e-6
        e = np.exp(logits_p - logits_p.max())
        assert np.all(np.abs(adv_p + e / e.sum() - logits_p) < 1e-6)
        # exact argmax decomposition over the 25 joint actions
        best = max(((joint_q(v, adv_p, adv_a, i, j), (i, j))
                    for i in range(5) for j in range(5)), key=lambda t: t[0])
        assert best[1] == (int(adv_p.argmax()), int(adv_a.argmax()))


# -- environment golden suite --------------------------------------------------

def test_environment_golden_suite():
    # five hand-written 8-bit cell encodings (layout documented in envs)
    from test_envs import GOLDEN_TASK
    from tandem.envs import ASSISTANT, PRINCIPAL, encode_bits

    state, _ = env_init(GOLDEN_TASK)
    bits_p = encode_bits(state, GOLDEN_TASK, PRINCIPAL)
    bits_a = encode_bits(state, GOLDEN_TASK, ASSISTANT)
    assert bits_p[1, 1].tolist() == [1, 1, 0, 0, 0, 0, 0, 0]  # principal cell
    assert bits_p[3, 3].tolist() == [1, 0, 1, 0, 0, 0, 0, 0]  # assistant cell
    assert bits_p[0, 0].tolist() == [1, 0, 0, 1, 0, 1, 0, 1]  # target object
    assert bits_p[2, 4].tolist() == [1, 0, 0, 1, 1, 0, 1, 0]  # distractor
    assert bits_a[0, 0].tolist() == [1, 0, 0, 1, 0, 1, 0, 0]  # no collect bits
    assert bits_p[2, 2].tolist() == [1, 0, 0, 0, 0, 0, 0, 0]  # empty floor

    # three golden pixel renders, bit-exact against layer-rule rebuilds
    from test_raster import TASK as PIXEL_TASK, rgb
    from tandem.raster import render_pixels, render_world

    pstate, _ = env_init(PIXEL_TASK)
    world = render_world(pstate, PIXEL_TASK, 4)
    golden = np.tile(rgb("floor"), (12, 12, 1)).astype(np.float32)
    for (cx, cy), color in (((1, 0), "lemon"), ((2, 1), "plum"),
                            ((0, 0), "principal"), ((2, 2), "assistant")):
        golden[cy * 4 + 1 : cy * 4 + 3, cx * 4 + 1 : cx * 4 + 3] = rgb(color)
    np.testing.assert_array_equal(world, golden)

    view_p = render_pixels(pstate, PIXEL_TASK, 0)
    golden_p = np.tile(rgb("background"), (12, 12, 1)).astype(np.float32)
    golden_p[4:, 4:] = golden[:8, :8]  # camera centered on the corner agent
    np.testing.assert_array_equal(view_p, golden_p)

    view_a = render_pixels(pstate, PIXEL_TASK, 1)
    golden_a = np.tile(rgb("background"), (12, 12, 1)).astype(np.float32)
    golden_a[:8, :8] = golden[4:, 4:]
    np.testing.assert_array_equal(view_a, golden_a)

    # reward conservation over 10^4 random episodes
    rng = np.random.default_rng(99)
    presets = [game_spec(p) for p in ("1a", "1b", "2", "3", "4")]
    for i in range(10_000):
        spec = presets[i % len(presets)]
        task = sample_task(spec, i)
        state, _ = env_init(task)
        n_obj = len(task.objects)
        total = 0.0
        for _ in range(spec.horizon):
            state, (r_p, r_a), _c = transition(
                state, task, int(rng.integers(5)), int(rng.integers(5)))
            total += r_p + r_a
        lo = -n_obj + spec.horizon * spec.motion_penalty - 1e-9
        assert lo <= total <= n_obj + 1e-9


# -- oracle equivalence --------------------------------------------------------

def test_oracle_equivalence_50_instances():
    start = time.monotonic()
    for task in small_instances():
        got = brute_force_return(task, 4, 0.9)
        want = dfs_optimal_return(task, 4, 0.9)
        assert got == pytest.approx(want, abs=1e-9)
    assert time.monotonic() - start < 60


# -- desk-scale learning criteria ----------------------------------------------

def _train_preset(preset, seed):
    cfg = train_config(preset, seed=seed)
    t0 = time.monotonic()
    result = train(cfg, game_spec(preset))
    hours = (time.monotonic() - t0) / 3600
    evals = [m for m in result.metrics if "loss" in m]
    return result, evals[-1], hours


@pytest.fixture(scope="module")
def trained_1a():
    return [_train_preset("1a", seed) for seed in (7, 8, 9)]


def test_desk_scale_experiment_1a(trained_1a):
    """3 seeds at batch 32 / 20k steps: mean joint reward >= 4.0 and
    reward-due-to-A >= 0.5 on 100 held-out tasks for >= 2 of 3 seeds,
    <= 4 CPU-hours per seed."""
    passing = 0
    for result, final, hours in trained_1a:
        assert hours <= 4.0, f"seed exceeded CPU budget: {hours:.2f} h"
        assert not result.halted
        if final["eval_joint_reward"] >= 4.0 and final["reward_due_to_a"] >= 0.5:
            passing += 1
    finals = [(f["eval_joint_reward"], f["reward_due_to_a"]) for _, f, _ in trained_1a]
    assert passing >= 2, f"only {passing}/3 seeds passed; finals: {finals}"


def test_desk_scale_experiment_1b():
    """Motion-penalty preset: reward-due-to-A > reward-due-to-P at
    convergence for >= 2 of 3 seeds."""
    passing = 0
    finals = []
    for seed in (7, 8, 9):
        result, final, hours = _train_preset("1b", seed)
        assert hours <= 4.0
        assert not result.halted
        finals.append((final["reward_due_to_p"], final["reward_due_to_a"]))
        if final["reward_due_to_a"] > final["reward_due_to_p"]:
            passing += 1
    assert passing >= 2, f"only {passing}/3 seeds passed; (P, A) finals: {finals}"


def test_experiment4_smoke():
    """Pixel-input centralized model: 2k desk-scale steps with finite loss
    throughout and a final joint reward strictly above the random
    Monte-Carlo baseline."""
    spec = game_spec("4")
    result, final, _hours = _train_preset("4", 7)
    assert not result.halted
    losses = [m["loss"] for m in result.metrics if "loss" in m]
    assert losses and all(np.isfinite(l) for l in losses)
    random_report = evaluate_random(spec, seed=0, n=200)
    assert final["eval_joint_reward"] > random_report.joint_mean, (
        f"trained {final['eval_joint_reward']} vs random {random_report.joint_mean}"
    )


def test_failure_detector_on_synthetic_streams():
    """Fires iff the evaluation reward falls below 0.1 after exceeding it."""
    assert detect_failure([0.0, 0.05, 0.09]) is None  # never exceeded
    assert detect_failure([0.2, 1.5, 4.0, 4.2]) is None  # never fell
    assert detect_failure([0.0, 0.5, 2.0, 0.05]) == 3  # classic collapse
    assert detect_failure([0.5, 0.09, 3.0]) == 1  # transient dip still fires
    assert detect_failure([-0.4, 0.11, 0.1, 0.0999]) == 3  # boundary: >= 0.1 is alive
    assert detect_failure([]) is None


# -- determinism -----------------------------------------------------------------

def test_determinism_500_step_metrics_stream():
    cfg = train_config("1a", seed=13, steps=500)
    spec = game_spec("1a")

    def run():
        res = train(cfg, spec)
        return [{k: v for k, v in m.items() if k != "wall_time"} for m in res.metrics]

    first, second = run(), run()
    assert first == second  # bit-identical losses and rewards, dict equality


# -- protocol parity ---------------------------------------------------------------

def test_protocol_parity_100_episodes(tmp_path, trained_1a):
    """Scripted principal over the websocket protocol vs in-process
    evaluation: mean joint reward within 0.2 on 100 shared-seed episodes."""
    from starlette.testclient import TestClient

    from tandem.checkpoint import save_checkpoint
    from tandem.service import create_app, scripted_principal

    spec = game_spec("1a")
    params = trained_1a[0][0].params
    ckpt = tmp_path / "parity.tandem"
    save_checkpoint(ckpt, params, config={"preset": "1a", "scale": "desk",
                                          "game_spec": spec.to_dict()})

    tasks = heldout_tasks(spec, 100)
    seeds = [10**9 + k for k in range(100)]
    in_process = evaluate(params, tasks)

    client = TestClient(create_app(str(ckpt), seed=0))
    with client.websocket_connect("/ws") as ws:
        results, _ = scripted_principal(ws, params, spec, seeds)
    wire_mean = float(np.mean([r[0] for r in results]))
    assert abs(wire_mean - in_process.joint_mean) <= 0.2, (
        f"wire {wire_mean} vs in-process {in_process.joint_mean}"
    )
