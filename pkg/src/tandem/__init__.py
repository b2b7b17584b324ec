"""Cooperative two-agent gridworld laboratory.

Subpackages: autodiff/optim (numerics), envs/raster (task domains),
models (agent architectures), training (episodic loop), evaluation
(reports, baselines, planning oracle), traces, checkpoint, presets,
cli, service (live play over websockets).
"""

__version__ = "0.1.0"
