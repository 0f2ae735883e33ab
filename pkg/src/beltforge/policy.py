"""Behavior cloning: demonstration dataset, MSE-trained feedforward policy,
gradient checking, trajectory rollout, and evaluation against references.

States are end-effector positions relative to the target pulley center;
actions are full end-effector poses relative to the robot base. Within a
demonstration the action paired with state t is the pose at waypoint t+1
(the final pair repeats the terminal pose), so the rolled-out policy
advances along the path and holds the goal once reached.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, RolloutError, TrainingDivergedError
from .kernels import adam_step, mlp_loss_grad, mlp_predict, mlp_train_epoch
from .planner import Path
from .robot import Pose

_SCALE_FLOOR = 1e-12


@dataclass
class Hyperparams:
    hidden: tuple = (64, 64)
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 2000
    momentum_decay: float = 0.9
    scale_decay: float = 0.999
    adam_eps: float = 1e-8
    lr_decay: float = 1.0  # per-epoch multiplier; < 1 quiets late-stage noise

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0 or self.learning_rate <= 0:
            raise DomainError("hyperparameters out of range")
        if not (0 < self.lr_decay <= 1):
            raise DomainError("lr_decay must be in (0, 1]")
        if any(h < 1 for h in self.hidden):
            raise DomainError("hidden layer sizes must be >= 1")

    def to_payload(self):
        return {"hidden": list(self.hidden), "learning_rate": self.learning_rate,
                "batch_size": self.batch_size, "epochs": self.epochs,
                "momentum_decay": self.momentum_decay,
                "scale_decay": self.scale_decay, "adam_eps": self.adam_eps,
                "lr_decay": self.lr_decay}

    @classmethod
    def from_payload(cls, d):
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)


@dataclass
class Normalization:
    mean: np.ndarray
    scale: np.ndarray

    def normalize(self, v):
        return (v - self.mean) / self.scale

    def denormalize(self, v):
        return v * self.scale + self.mean

    def to_payload(self):
        return {"mean": [float(x) for x in self.mean],
                "scale": [float(x) for x in self.scale]}

    @classmethod
    def from_payload(cls, d):
        return cls(np.array(d["mean"]), np.array(d["scale"]))

    @classmethod
    def from_data(cls, data):
        mean = data.mean(axis=0)
        scale = data.std(axis=0)
        scale[scale < _SCALE_FLOOR] = 1.0
        return cls(mean, scale)


@dataclass
class DemonstrationDataset:
    """N state/action sequences plus train-time normalization statistics."""

    demos: list                      # [(states (L,3), actions (L,6)), ...]
    state_norm: Normalization
    action_norm: Normalization
    pulley_center: np.ndarray

    @property
    def n_demos(self):
        return len(self.demos)

    @property
    def n_pairs(self):
        return sum(s.shape[0] for s, _ in self.demos)

    def stacked(self):
        states = np.concatenate([s for s, _ in self.demos])
        actions = np.concatenate([a for _, a in self.demos])
        return states, actions

    def to_payload(self):
        return {
            "kind": "dataset",
            "pulley_center": [float(v) for v in self.pulley_center],
            "state_norm": self.state_norm.to_payload(),
            "action_norm": self.action_norm.to_payload(),
            "demos": [{"states": s.tolist(), "actions": a.tolist()}
                      for s, a in self.demos],
        }

    @classmethod
    def from_payload(cls, d):
        demos = [(np.array(x["states"], dtype=np.float64),
                  np.array(x["actions"], dtype=np.float64)) for x in d["demos"]]
        return cls(demos=demos,
                   state_norm=Normalization.from_payload(d["state_norm"]),
                   action_norm=Normalization.from_payload(d["action_norm"]),
                   pulley_center=np.array(d["pulley_center"], dtype=np.float64))


def build_dataset(demos, pulley_center) -> DemonstrationDataset:
    """State/action pairs from corrected paths, one sequence per demo.

    state_t = position_t - pulley_center; the paired action is the pose at
    waypoint t+1 (terminal pose repeated for the last pair), giving T+1
    pairs per demo of length T+1.
    """
    if not demos:
        raise DomainError("need at least one demonstration")
    center = np.asarray(pulley_center, dtype=np.float64).reshape(3)
    sequences = []
    for demo in demos:
        poses = demo.poses
        mat = np.array([p.to_vector() for p in poses])
        states = mat[:, :3] - center[None, :]
        actions = np.vstack([mat[1:], mat[-1:]])
        sequences.append((states, actions))
    all_states = np.concatenate([s for s, _ in sequences])
    all_actions = np.concatenate([a for _, a in sequences])
    return DemonstrationDataset(
        demos=sequences,
        state_norm=Normalization.from_data(all_states),
        action_norm=Normalization.from_data(all_actions),
        pulley_center=center,
    )


def _layer_dims(hidden, d_in=3, d_out=6):
    return np.array([d_in, *hidden, d_out], dtype=np.int64)


def _param_count(dims):
    return int(sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1)))


def init_theta(dims, rng):
    """Glorot-scaled normal weights, zero biases, flattened."""
    parts = []
    for i in range(len(dims) - 1):
        din, dout = int(dims[i]), int(dims[i + 1])
        std = math.sqrt(2.0 / (din + dout))
        parts.append(rng.normal(0.0, std, size=din * dout))
        parts.append(np.zeros(dout))
    return np.concatenate(parts)


@dataclass
class Policy:
    """Feedforward network (tanh hidden, linear output) plus normalization."""

    dims: np.ndarray
    theta: np.ndarray
    state_norm: Normalization
    action_norm: Normalization
    activation: str = "tanh"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dims = np.asarray(self.dims, dtype=np.int64)
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if self.dims[0] != 3 or self.dims[-1] != 6:
            raise DomainError("policy must map 3 state dims to 6 action dims")
        if self.theta.shape[0] != _param_count(self.dims):
            raise DomainError("parameter vector does not match layer dims")

    def predict(self, states) -> np.ndarray:
        """Denormalized actions for raw states, shape (n, 6)."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        xn = np.ascontiguousarray(self.state_norm.normalize(states))
        yn = mlp_predict(self.theta, self.dims, xn)
        return self.action_norm.denormalize(yn)

    def to_payload(self):
        layers = []
        off = 0
        for i in range(len(self.dims) - 1):
            din, dout = int(self.dims[i]), int(self.dims[i + 1])
            w = self.theta[off:off + din * dout].reshape(din, dout)
            off += din * dout
            b = self.theta[off:off + dout]
            off += dout
            layers.append({"weights": w.tolist(), "bias": b.tolist()})
        return {"kind": "policy",
                "dims": [int(v) for v in self.dims],
                "activation": self.activation,
                "layers": layers,
                "state_norm": self.state_norm.to_payload(),
                "action_norm": self.action_norm.to_payload(),
                "metadata": self.metadata}

    @classmethod
    def from_payload(cls, d):
        parts = []
        for layer in d["layers"]:
            parts.append(np.array(layer["weights"], dtype=np.float64).reshape(-1))
            parts.append(np.array(layer["bias"], dtype=np.float64))
        return cls(dims=np.array(d["dims"], dtype=np.int64),
                   theta=np.concatenate(parts),
                   state_norm=Normalization.from_payload(d["state_norm"]),
                   action_norm=Normalization.from_payload(d["action_norm"]),
                   activation=d.get("activation", "tanh"),
                   metadata=d.get("metadata", {}))


def train(dataset: DemonstrationDataset, hyper: Hyperparams = None, seed: int = 0):
    """Minimize MSE between policy outputs and actions in normalized space.

    Returns (Policy, loss_trace); the trace starts with the pre-training
    loss, then one mean-batch-loss entry per epoch. Raises
    TrainingDivergedError if the loss exceeds 1e3x its initial value.
    """
    hyper = hyper or Hyperparams()
    rng = np.random.default_rng(seed)
    dims = _layer_dims(hyper.hidden)
    theta = init_theta(dims, rng)
    states, actions = dataset.stacked()
    xn = np.ascontiguousarray(dataset.state_norm.normalize(states))
    yn = np.ascontiguousarray(dataset.action_norm.normalize(actions))
    grad = np.empty_like(theta)
    initial = mlp_loss_grad(theta, dims, xn, yn, grad)
    trace = [float(initial)]
    mom = np.zeros_like(theta)
    vel = np.zeros_like(theta)
    step = 0
    limit = 1e3 * max(initial, 1e-12)
    lr = hyper.learning_rate
    for _ in range(hyper.epochs):
        perm = rng.permutation(xn.shape[0])
        loss, step = mlp_train_epoch(
            theta, mom, vel, step, dims, xn, yn, perm, hyper.batch_size,
            lr, hyper.momentum_decay, hyper.scale_decay,
            hyper.adam_eps, grad)
        lr *= hyper.lr_decay
        trace.append(float(loss))
        if not np.isfinite(loss) or loss > limit:
            raise TrainingDivergedError(
                f"loss {loss:.3e} exceeded {limit:.3e}", loss_trace=trace)
    policy = Policy(dims=dims, theta=theta, state_norm=dataset.state_norm,
                    action_norm=dataset.action_norm,
                    metadata={"seed": seed, "epochs": hyper.epochs,
                              "final_loss": trace[-1],
                              "hyperparams": hyper.to_payload()})
    return policy, trace


def loss_and_gradient(policy: Policy, states, actions):
    """Normalized-space MSE loss and flat analytic gradient for a batch."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    xn = np.ascontiguousarray(policy.state_norm.normalize(states))
    yn = np.ascontiguousarray(policy.action_norm.normalize(actions))
    grad = np.empty_like(policy.theta)
    loss = mlp_loss_grad(policy.theta, policy.dims, xn, yn, grad)
    return float(loss), grad


def policy_gradient_check(policy: Policy, states, actions, h: float = 1e-6):
    """Max relative deviation between analytic and central-difference gradients."""
    if np.atleast_2d(states).shape[0] == 0:
        raise DomainError("gradient check needs a non-empty batch")
    _, analytic = loss_and_gradient(policy, states, actions)
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    xn = np.ascontiguousarray(policy.state_norm.normalize(states))
    yn = np.ascontiguousarray(policy.action_norm.normalize(actions))
    theta = policy.theta.copy()
    scratch = np.empty_like(theta)
    numeric = np.empty_like(theta)
    for i in range(theta.shape[0]):
        orig = theta[i]
        theta[i] = orig + h
        lp = mlp_loss_grad(theta, policy.dims, xn, yn, scratch)
        theta[i] = orig - h
        lm = mlp_loss_grad(theta, policy.dims, xn, yn, scratch)
        theta[i] = orig
        numeric[i] = (lp - lm) / (2.0 * h)
    denom = max(float(np.max(np.abs(analytic))),
                float(np.max(np.abs(numeric))), 1e-12)
    return float(np.max(np.abs(analytic - numeric))) / denom


def rollout(policy: Policy, start_pose: Pose, pulley_center, steps: int,
            dt: float = 1.0) -> Path:
    """Iterate the policy from a start pose; emits one pose per step.

    s_0 is the start position relative to the pulley center; each action's
    position re-expressed relative to the center becomes the next state.
    """
    if steps < 1:
        raise DomainError("rollout needs steps >= 1")
    center = np.asarray(pulley_center, dtype=np.float64).reshape(3)
    state = start_pose.position - center
    poses = []
    for t in range(steps):
        action = policy.predict(state[None, :])[0]
        if not np.all(np.isfinite(action)):
            raise RolloutError(f"non-finite policy output at step {t}", step=t)
        poses.append(Pose(position=action[:3], rpy=action[3:]))
        state = action[:3] - center
    return Path(poses=poses, dt=dt)


def rollout_trajectory(policy: Policy, start_pose: Pose, pulley_center,
                       count: int, dt: float = 1.0) -> Path:
    """Executed trajectory of ``count`` policy steps, starting pose included.

    Length count+1, index-aligned with a demonstration of the same length
    when started from its first waypoint.
    """
    stepped = rollout(policy, start_pose, pulley_center, steps=count, dt=dt)
    return Path(poses=[start_pose, *stepped.poses], dt=dt)


@dataclass
class EvalMetrics:
    rmse_per_reference: list
    mean_rmse: float
    max_waypoint_deviation: float

    def to_payload(self):
        return {"rmse_per_reference": list(self.rmse_per_reference),
                "mean_rmse": self.mean_rmse,
                "max_waypoint_deviation": self.max_waypoint_deviation}


def _resample_positions(positions, count):
    if positions.shape[0] == count:
        return positions
    src = np.linspace(0.0, 1.0, positions.shape[0])
    dst = np.linspace(0.0, 1.0, count)
    out = np.empty((count, positions.shape[1]))
    for d in range(positions.shape[1]):
        out[:, d] = np.interp(dst, src, positions[:, d])
    return out


def evaluate(learned: Path, references) -> EvalMetrics:
    """Position-space RMSE of a learned path against each reference."""
    references = list(references)
    if not references:
        raise DomainError("need at least one reference path")
    learned_pos = learned.positions()
    rmses = []
    max_dev = 0.0
    for ref in references:
        ref_pos = np.array([p.position for p in ref.poses])
        ref_pos = _resample_positions(ref_pos, learned_pos.shape[0])
        err = np.linalg.norm(learned_pos - ref_pos, axis=1)
        rmses.append(float(np.sqrt(np.mean(err ** 2))))
        max_dev = max(max_dev, float(err.max()))
    return EvalMetrics(rmse_per_reference=rmses,
                       mean_rmse=float(np.mean(rmses)),
                       max_waypoint_deviation=max_dev)


def mean_reference_path(references) -> Path:
    """Waypoint-wise mean of reference paths (positions and orientations)."""
    references = list(references)
    if not references:
        raise DomainError("need at least one reference path")
    length = len(references[0].poses)
    if any(len(r.poses) != length for r in references):
        raise DomainError("references must share a common length")
    mats = np.array([[p.to_vector() for p in r.poses] for r in references])
    mean = mats.mean(axis=0)
    poses = [Pose(position=v[:3], rpy=v[3:]) for v in mean]
    return Path(poses=poses, dt=references[0].dt)
