"""Agent architectures.

Two variants:

* independent recurrent Q-networks, one per agent ("maidrqn"): per-agent
  conv stack -> LSTM -> 5 Q-values.
* centralized dueling variant ("maddrqn"): shared conv stack and
  post-conv dense layer, per-agent LSTMs and 5-output advantage heads
  (the softmax across the head outputs is subtracted elementwise), plus
  a joint value head on the concatenated recurrent outputs. Agents act
  from their advantage head alone; the value head is training-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor

N_ACTIONS = 5


@dataclass(frozen=True)
class Architecture:
    """Shape descriptor for one parameter set; stored in checkpoints."""

    variant: str  # "maidrqn" | "maddrqn"
    obs_shape: tuple  # (h, w, c)
    conv_filters: tuple = (10, 10)
    conv_kernels: tuple = (3, 3)
    conv_strides: tuple = (1, 1)
    conv_paddings: tuple = (0, 0)
    fc_units: int | None = None  # shared post-conv layer (maddrqn only)
    hidden: int = 50
    task_dim: int = 0  # one-hot appended to the principal's recurrent input
    advantage_sub: str = "none"  # "softmax" | "mean" | "none"
    use_value: bool = False
    assistant_feedforward: bool = False

    def conv_out_dim(self):
        h, w, _ = self.obs_shape
        for k, s, p in zip(self.conv_kernels, self.conv_strides, self.conv_paddings):
            h = (h + 2 * p - k) // s + 1
            w = (w + 2 * p - k) // s + 1
            if h < 1 or w < 1:
                raise ShapeError(f"conv stack does not fit observation {self.obs_shape}")
        return h * w * self.conv_filters[-1]

    def feature_dim(self):
        return self.fc_units if self.fc_units is not None else self.conv_out_dim()

    def to_dict(self):
        d = self.__dict__.copy()
        d["obs_shape"] = list(self.obs_shape)
        d["conv_filters"] = list(self.conv_filters)
        d["conv_kernels"] = list(self.conv_kernels)
        d["conv_strides"] = list(self.conv_strides)
        d["conv_paddings"] = list(self.conv_paddings)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("obs_shape", "conv_filters", "conv_kernels", "conv_strides",
                  "conv_paddings"):
            d[k] = tuple(d[k])
        return cls(**d)


def maidrqn_architecture(obs_shape, hidden=50, conv_filters=(10, 10)):
    return Architecture(
        variant="maidrqn",
        obs_shape=tuple(obs_shape),
        conv_filters=tuple(conv_filters),
        conv_kernels=(3, 3),
        conv_strides=(1, 1),
        conv_paddings=(1, 1),
        hidden=hidden,
    )


def maddrqn_architecture(obs_shape, hidden=50, fc_units=256, conv_filters=(16, 32),
                         dueling=True):
    """Pixel-input architecture. dueling=False gives the independent-Q
    ablation: same trunk, no value head, no softmax subtraction."""
    return Architecture(
        variant="maddrqn",
        obs_shape=tuple(obs_shape),
        conv_filters=tuple(conv_filters),
        conv_kernels=(8, 8),
        conv_strides=(4, 2),
        conv_paddings=(2, 3),
        fc_units=fc_units,
        hidden=hidden,
        task_dim=2,
        advantage_sub="softmax" if dueling else "none",
        use_value=dueling,
    )


@dataclass
class ModelParams:
    arch: Architecture
    tensors: dict  # name -> Tensor (requires_grad leaves)

    def __getitem__(self, name):
        return self.tensors[name]


@dataclass
class RecurrentState:
    """Per-agent hidden/cell vectors; zeroed at episode start."""

    h_p: Tensor
    c_p: Tensor
    h_a: Tensor
    c_a: Tensor


def init_recurrent(arch: Architecture, batch: int, dtype=np.float32) -> RecurrentState:
    z = lambda: Tensor(np.zeros((batch, arch.hidden), dtype=dtype))
    return RecurrentState(z(), z(), z(), z())


def _uniform(rng, shape, fan_in, fan_out, dtype):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _orthogonal(rng, rows, cols, dtype):
    a = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return q.astype(dtype)


def _init_lstm_bias(hidden, dtype):
    b = np.zeros(4 * hidden, dtype=dtype)
    b[hidden : 2 * hidden] = 1.0  # forget gate open at init
    return b


def init_params(arch: Architecture, seed: int, dtype=np.float32) -> ModelParams:
    """Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases
    except the LSTM forget-gate bias at 1.0. Deterministic per seed."""
    rng = np.random.default_rng(seed)
    t = {}

    def param(name, shape, fan_in, fan_out):
        t[name] = Tensor(_uniform(rng, shape, fan_in, fan_out, dtype),
                         requires_grad=True, name=name)

    def zeros(name, shape, value=None):
        data = np.zeros(shape, dtype=dtype) if value is None else value
        t[name] = Tensor(data, requires_grad=True, name=name)

    h, w, cin = arch.obs_shape
    k1, k2 = arch.conv_kernels
    f1, f2 = arch.conv_filters
    hid = arch.hidden

    def conv_stack(prefix):
        param(f"{prefix}conv1_w", (k1, k1, cin, f1), k1 * k1 * cin, k1 * k1 * f1)
        zeros(f"{prefix}conv1_b", (f1,))
        param(f"{prefix}conv2_w", (k2, k2, f1, f2), k2 * k2 * f1, k2 * k2 * f2)
        zeros(f"{prefix}conv2_b", (f2,))

    def lstm(prefix, in_dim):
        # Glorot input kernel stacked over an orthogonal recurrent kernel.
        kernel = _uniform(rng, (in_dim, 4 * hid), in_dim, 4 * hid, dtype)
        recurrent = _orthogonal(rng, hid, 4 * hid, dtype)
        t[f"{prefix}lstm_w"] = Tensor(np.vstack([kernel, recurrent]),
                                      requires_grad=True, name=f"{prefix}lstm_w")
        zeros(f"{prefix}lstm_b", (4 * hid,), _init_lstm_bias(hid, dtype))

    def head(prefix):
        param(f"{prefix}head_w", (hid, N_ACTIONS), hid, N_ACTIONS)
        zeros(f"{prefix}head_b", (N_ACTIONS,))

    if arch.variant == "maidrqn":
        for prefix in ("P/", "A/"):
            conv_stack(prefix)
            feat = arch.conv_out_dim()
            if prefix == "A/" and arch.assistant_feedforward:
                param("A/ff_w", (feat, hid), feat, hid)
                zeros("A/ff_b", (hid,))
            else:
                lstm(prefix, feat)
            head(prefix)
    elif arch.variant == "maddrqn":
        conv_stack("shared/")
        param("shared/fc_w", (arch.conv_out_dim(), arch.fc_units), arch.conv_out_dim(), arch.fc_units)
        zeros("shared/fc_b", (arch.fc_units,))
        lstm("P/", arch.fc_units + arch.task_dim)
        if arch.assistant_feedforward:
            param("A/ff_w", (arch.fc_units, hid), arch.fc_units, hid)
            zeros("A/ff_b", (hid,))
        else:
            lstm("A/", arch.fc_units)
        head("P/")
        head("A/")
        if arch.use_value:
            param("V/w", (2 * hid, 1), 2 * hid, 1)
            zeros("V/b", (1,))
    else:
        raise ValueError(f"unknown variant {arch.variant!r}")
    return ModelParams(arch=arch, tensors=t)


def _check_obs(arch, obs):
    if obs.shape[1:] != tuple(arch.obs_shape):
        raise ShapeError(f"observation {obs.shape} does not match architecture {arch.obs_shape}")


def _conv_trunk(params, prefix, obs):
    arch = params.arch
    x = ad.relu(ad.add(ad.conv2d(obs, params[f"{prefix}conv1_w"], arch.conv_strides[0],
                                 arch.conv_paddings[0]),
                       params[f"{prefix}conv1_b"]))
    x = ad.relu(ad.add(ad.conv2d(x, params[f"{prefix}conv2_w"], arch.conv_strides[1],
                                 arch.conv_paddings[1]),
                       params[f"{prefix}conv2_b"]))
    flat = int(np.prod(x.shape[1:]))
    return ad.reshape(x, (x.shape[0], flat))


def maidrqn_forward(params: ModelParams, agent_prefix: str, obs, h, c):
    """Q-values for one agent: (B, 5) plus the next recurrent state.

    The target class reaches the principal through the collect bits of its
    observation; no side input is needed."""
    arch = params.arch
    obs = obs if isinstance(obs, Tensor) else Tensor(obs)
    _check_obs(arch, obs.data)
    feat = _conv_trunk(params, agent_prefix, obs)
    if agent_prefix == "A/" and arch.assistant_feedforward:
        hidden = ad.tanh(ad.add(ad.matmul(feat, params["A/ff_w"]), params["A/ff_b"]))
        h_new, c_new = hidden, c
    else:
        h_new, c_new = ad.lstm_cell(feat, h, c, params[f"{agent_prefix}lstm_w"],
                                    params[f"{agent_prefix}lstm_b"])
        hidden = h_new
    q = ad.add(ad.matmul(hidden, params[f"{agent_prefix}head_w"]),
               params[f"{agent_prefix}head_b"])
    return q, h_new, c_new


def _advantage(arch, logits):
    if arch.advantage_sub == "softmax":
        return ad.sub(logits, ad.softmax(logits, axis=-1))
    if arch.advantage_sub == "mean":
        mean = ad.mul(ad.reduce_sum(logits, axis=-1), Tensor(np.float32(1.0 / N_ACTIONS)))
        return ad.sub(logits, ad.reshape(mean, (logits.shape[0], 1)))
    return logits


def maddrqn_forward(params: ModelParams, obs_p, obs_a, task_onehot, state: RecurrentState):
    """Advantages (B, 5) per agent, joint value (B, 1), next recurrent state.

    The conv trunk and post-conv layer are shared (same tensors) between
    the agents; the principal's recurrent input is the trunk features
    concatenated with the task one-hot.
    """
    arch = params.arch
    obs_p = obs_p if isinstance(obs_p, Tensor) else Tensor(obs_p)
    obs_a = obs_a if isinstance(obs_a, Tensor) else Tensor(obs_a)
    task_onehot = task_onehot if isinstance(task_onehot, Tensor) else Tensor(task_onehot)
    _check_obs(arch, obs_p.data)
    _check_obs(arch, obs_a.data)
    if task_onehot.shape[-1] != arch.task_dim:
        raise ShapeError(f"task one-hot {task_onehot.shape} != task_dim {arch.task_dim}")

    def trunk(obs):
        feat = _conv_trunk(params, "shared/", obs)
        return ad.relu(ad.add(ad.matmul(feat, params["shared/fc_w"]), params["shared/fc_b"]))

    feat_p = ad.concat([trunk(obs_p), task_onehot], axis=-1)
    feat_a = trunk(obs_a)
    h_p, c_p = ad.lstm_cell(feat_p, state.h_p, state.c_p, params["P/lstm_w"], params["P/lstm_b"])
    if arch.assistant_feedforward:
        h_a = ad.tanh(ad.add(ad.matmul(feat_a, params["A/ff_w"]), params["A/ff_b"]))
        c_a = state.c_a
    else:
        h_a, c_a = ad.lstm_cell(feat_a, state.h_a, state.c_a, params["A/lstm_w"],
                                params["A/lstm_b"])
    logits_p = ad.add(ad.matmul(h_p, params["P/head_w"]), params["P/head_b"])
    logits_a = ad.add(ad.matmul(h_a, params["A/head_w"]), params["A/head_b"])
    adv_p = _advantage(arch, logits_p)
    adv_a = _advantage(arch, logits_a)
    if arch.use_value:
        joint = ad.concat([h_p, h_a], axis=-1)
        v = ad.add(ad.matmul(joint, params["V/w"]), params["V/b"])
    else:
        v = Tensor(np.zeros((adv_p.shape[0], 1), dtype=adv_p.dtype))
    return adv_p, adv_a, v, RecurrentState(h_p, c_p, h_a, c_a)


def joint_q(v, adv_p, adv_a, a_p: int, a_a: int) -> float:
    """Joint action value: V + A_P[a_P] + A_A[a_A] (additively separable,
    so the joint argmax is the pair of per-agent argmaxes)."""
    v = np.asarray(v.data if isinstance(v, Tensor) else v).reshape(-1)
    adv_p = np.asarray(adv_p.data if isinstance(adv_p, Tensor) else adv_p).reshape(-1)
    adv_a = np.asarray(adv_a.data if isinstance(adv_a, Tensor) else adv_a).reshape(-1)
    if not (0 <= a_p < N_ACTIONS and 0 <= a_a < N_ACTIONS):
        raise ValueError(f"invalid joint action ({a_p}, {a_a})")
    return float(v[0] + adv_p[a_p] + adv_a[a_a])
