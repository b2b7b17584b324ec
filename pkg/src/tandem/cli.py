"""Command-line entry points: train, eval, trace, oracle, play, serve.

Exit codes: 0 ok, 1 usage error, 2 runtime failure, 3 instability halt.
The default output directory comes from TANDEM_OUT (falls back to ./runs).
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict

import click
import numpy as np

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_INSTABILITY = 3


def _default_out():
    return os.environ.get("TANDEM_OUT", "runs")


@click.group()
def cli():
    """Cooperative two-agent gridworld lab."""


@cli.command()
@click.option("--preset", required=True, type=str, help="experiment preset: 1a 1b 2 3 4")
@click.option("--scale", default="desk", type=click.Choice(["desk", "paper"]))
@click.option("--seed", default=0, type=int)
@click.option("--steps", default=None, type=int, help="override gradient-step count")
@click.option("--batch", default=None, type=int, help="override batch size")
@click.option("--gamma", default=None, type=float)
@click.option("--out", default=None, type=click.Path(), help="output directory")
def train(preset, scale, seed, steps, batch, gamma, out):
    """Train a model; writes metrics.jsonl and checkpoints into OUT."""
    from .checkpoint import save_checkpoint
    from .presets import PresetError, game_spec, train_config
    from .training import train as run_train

    try:
        spec = game_spec(preset, scale)
        overrides = {}
        if steps is not None:
            overrides["steps"] = steps
        if batch is not None:
            overrides["batch_size"] = batch
        if gamma is not None:
            overrides["gamma"] = gamma
        config = train_config(preset, scale, seed=seed, **overrides)
    except PresetError as e:
        raise click.UsageError(str(e))

    out_dir = out or os.path.join(_default_out(), f"{preset}-{scale}-seed{seed}")
    os.makedirs(out_dir, exist_ok=True)
    metrics_path = os.path.join(out_dir, "metrics.jsonl")
    ckpt_path = os.path.join(out_dir, "checkpoint.tandem")
    snapshot = {"preset": preset, "scale": scale, "config": asdict(config),
                "game_spec": spec.to_dict()}

    with open(metrics_path, "w") as mf:
        def sink(record):
            mf.write(json.dumps(record) + "\n")
            mf.flush()
            if "event" in record:
                click.echo(f"[{record['step']}] event: {record['event']}")
            else:
                click.echo(
                    f"[{record['step']}] loss={record['loss']:.3f} "
                    f"eval_joint={record['eval_joint_reward']:.2f} "
                    f"P={record['reward_due_to_p']:.2f} A={record['reward_due_to_a']:.2f}"
                )

        def ckpt_sink(params, adam, step):
            save_checkpoint(ckpt_path, params, adam, step=step, config=snapshot, seed=seed)

        result = run_train(config, spec, metrics_sink=sink, checkpoint_sink=ckpt_sink)
    save_checkpoint(ckpt_path, result.params, result.adam,
                    step=result.halt_step or config.steps, config=snapshot, seed=seed)
    click.echo(f"metrics: {metrics_path}\ncheckpoint: {ckpt_path}")
    if result.halted:
        click.echo(f"instability halt at step {result.halt_step}", err=True)
        sys.exit(EXIT_INSTABILITY)


@cli.command("eval")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--tasks", "n_tasks", default=100, type=int)
@click.option("--seed", default=0, type=int, help="held-out task stream offset")
@click.option("--solo", is_flag=True, help="evaluate the principal alone")
def eval_cmd(ckpt, n_tasks, seed, solo):
    """Evaluate a checkpoint on held-out tasks; prints a reward report."""
    from .checkpoint import load_checkpoint
    from .envs import GameSpec, heldout_tasks
    from .evaluation import evaluate

    params, _, header = load_checkpoint(ckpt)
    spec = GameSpec.from_dict(header["config"]["game_spec"])
    tasks = heldout_tasks(spec, n_tasks, base_seed=seed)
    report = evaluate(params, tasks, solo=solo)
    click.echo(json.dumps(report.to_dict(), indent=2))


@cli.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--task-seed", default=0, type=int)
@click.option("--out", default=None, type=click.Path())
def trace(ckpt, task_seed, out):
    """Greedy episode trace for one sampled task; verifies by replay."""
    from .checkpoint import load_checkpoint
    from .envs import GameSpec, sample_task
    from .traces import export_trace, replay_trace
    from .training import rollout

    params, _, header = load_checkpoint(ckpt)
    spec = GameSpec.from_dict(header["config"]["game_spec"])
    task = sample_task(spec, task_seed)
    record = rollout(task, params, 0.0, None)
    text = export_trace(record)
    replay_trace(text)
    if out:
        with open(out, "w") as f:
            f.write(text)
        click.echo(f"trace written to {out} (replay verified)")
    else:
        click.echo(text, nl=False)


@cli.command()
@click.option("--preset", default="1a", type=str)
@click.option("--grid", default=3, type=int, help="square grid side (<= 3)")
@click.option("--objects", default=3, type=int)
@click.option("--horizon", default=4, type=int)
@click.option("--seed", default=0, type=int)
@click.option("--gamma", default=0.9, type=float)
def oracle(preset, grid, objects, horizon, seed, gamma):
    """Brute-force optimal discounted return on a small instance."""
    from dataclasses import replace

    from .envs import sample_task
    from .evaluation import EvalError, brute_force_return
    from .presets import PresetError, game_spec

    try:
        spec = game_spec(preset)
    except PresetError as e:
        raise click.UsageError(str(e))
    spec = replace(spec, width=grid, height=grid, num_objects=objects,
                   cells=None, object_region=None,
                   start_positions=((0, 0), (grid - 1, grid - 1)))
    task = sample_task(spec, seed)
    try:
        value = brute_force_return(task, horizon, gamma)
    except EvalError as e:
        raise click.UsageError(str(e))
    click.echo(f"optimal discounted return: {value}")


@cli.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--port", default=8000, type=int)
@click.option("--host", default="127.0.0.1", type=str)
@click.option("--seed", default=0, type=int, help="server task-seed stream")
def serve(ckpt, port, host, seed):
    """Serve the live play service (websocket protocol + web UI assets)."""
    import uvicorn

    from .service import create_app

    app = create_app(ckpt, seed=seed)
    uvicorn.run(app, host=host, port=port)


@cli.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--episodes", default=5, type=int)
@click.option("--seed", default=0, type=int)
def play(ckpt, episodes, seed):
    """Play in the terminal as the principal, with the checkpoint assistant.

    Controls: Enter starts an episode; space/a/d/w/s = stay/left/right/up/down.
    """
    from .service import GameSession

    session = GameSession.from_checkpoint(ckpt, seed=seed)
    click.echo("Enter to start an episode; space/a/d/w/s to act; q to quit.")
    while session.scores["episodes"] < episodes:
        line = click.prompt("", default="", show_default=False, prompt_suffix="> ")
        key = {"": "Enter", " ": "Space"}.get(line, line[:1])
        if key == "q":
            break
        for msg in session.handle_key(key):
            click.echo(json.dumps(msg))
    click.echo(json.dumps(session.scores))


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.UsageError as e:
        click.echo(f"usage error: {e.format_message()}", err=True)
        return EXIT_USAGE
    except click.Abort:
        return EXIT_USAGE
    except SystemExit as e:  # instability halt path uses sys.exit(3)
        return int(e.code or 0)
    except Exception as e:  # runtime failure
        click.echo(f"error: {e}", err=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
