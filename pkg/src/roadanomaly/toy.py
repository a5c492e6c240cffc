"""A small pixel-wise MLP trained on synthetic scenes.

The model maps the 11 per-pixel features to k+1 logits (k predefined
classes plus the object channel) through two ReLU layers. Training is
plain SGD with momentum, weight decay, and polynomial learning-rate
decay, on the boundary-weighted cross-entropy. Weights are float64 and
updates are deterministic for a fixed config, so two runs that differ
only in ``use_ood`` see byte-identical scene streams and batches.

``use_ood`` controls what happens to void (obstacle) pixels in the
training scenes: with it, they become object-only targets; without it,
they are ignored by the loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import TrainingError, ValidationError
from .labels import assign_ood_labels, boundary_mask, build_schema, remap_labels
from .loss import LossConfig, boundary_loss_flat, boundary_loss_grad_flat
from .synth import VOID_ID, SceneConfig, extract_features, generate_scene
from .tensor_io import LogitMap, ProbMap

FEATURE_DIM = 11
DEFAULT_HIDDEN = (32, 32)


def poly_lr(step: int, max_steps: int, lr0: float = 0.01, power: float = 0.9) -> float:
    """Polynomial decay lr0 * (1 - step/max_steps) ** power; exactly 0 at the end."""
    if max_steps < 1:
        raise ValidationError("max_steps must be >= 1")
    if not 0 <= step <= max_steps:
        raise ValidationError(f"step {step} outside 0..{max_steps}")
    return lr0 * (1.0 - step / max_steps) ** power


@dataclass
class ToyModel:
    """Weights of the per-pixel MLP. ``weights[i]`` has shape (fan_in, fan_out)."""

    weights: list
    biases: list
    k_predefined: int

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0], *(w.shape[1] for w in self.weights))

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Logits for a flat (n, feature_dim) batch."""
        a = np.asarray(x, dtype=np.float64)
        for wmat, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ wmat + b, 0.0)
        return a @ self.weights[-1] + self.biases[-1]

    def _forward_cached(self, x):
        acts = [np.asarray(x, dtype=np.float64)]
        for wmat, b in zip(self.weights[:-1], self.biases[:-1]):
            acts.append(np.maximum(acts[-1] @ wmat + b, 0.0))
        logits = acts[-1] @ self.weights[-1] + self.biases[-1]
        return acts, logits

    def _backward(self, acts, grad_logits):
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        g = grad_logits
        for i in range(len(self.weights) - 1, -1, -1):
            gw[i] = acts[i].T @ g
            gb[i] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (acts[i] > 0)
        return gw, gb

    def save(self, path: str | Path) -> None:
        record = {
            "k_predefined": self.k_predefined,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }
        Path(path).write_text(json.dumps(record))

    @classmethod
    def load(cls, path: str | Path) -> "ToyModel":
        record = json.loads(Path(path).read_text())
        return cls(
            [np.asarray(w, dtype=np.float64) for w in record["weights"]],
            [np.asarray(b, dtype=np.float64) for b in record["biases"]],
            int(record["k_predefined"]),
        )


def init_toy_model(
    k: int,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    feature_dim: int = FEATURE_DIM,
    seed: int = 0,
) -> ToyModel:
    rng = np.random.default_rng([seed, 1])
    sizes = (feature_dim, *hidden, k + 1)
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ToyModel(weights, biases, k)


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    poly_power: float = 0.9
    max_steps: int = 5000
    batch_pixels: int = 4096
    lam: float = 3.0
    use_ood: bool = False
    seed: int = 0
    n_train_scenes: int = 48
    ood_scene_fraction: float = 0.2   # share of training scenes containing obstacles
    boundary_radius: int = 2
    log_every: int = 100

    def __post_init__(self):
        if self.lr0 <= 0 or self.max_steps < 1 or self.batch_pixels < 1:
            raise ValidationError("lr0, max_steps and batch_pixels must be positive")
        if not 0 <= self.momentum < 1:
            raise ValidationError("momentum must be in [0, 1)")
        if self.weight_decay < 0 or self.lam < 0:
            raise ValidationError("weight_decay and lam must be >= 0")
        if not 0 <= self.ood_scene_fraction <= 1:
            raise ValidationError("ood_scene_fraction must be in [0, 1]")
        if self.n_train_scenes < 1:
            raise ValidationError("need at least one training scene")
        if self.boundary_radius < 0 or self.log_every < 1:
            raise ValidationError("boundary_radius >= 0 and log_every >= 1")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")


@dataclass
class TrainingCurve:
    steps: np.ndarray
    losses: np.ndarray


def _prepare_scene(scene_cfg, index, want_obstacles, cfg, schema):
    density = scene_cfg.obstacle_density if want_obstacles else 0.0
    image, ids, obstacle, _ = generate_scene(
        replace(scene_cfg, obstacle_density=density), index
    )
    labels = remap_labels(ids, schema, void_id=VOID_ID)
    if cfg.use_ood and want_obstacles:
        labels = assign_ood_labels(labels, obstacle)
    delta = boundary_mask(labels, cfg.boundary_radius)
    feats = extract_features(image)
    c = schema.k + 1
    return (
        feats.reshape(-1, FEATURE_DIM).astype(np.float64),
        labels.multihot().reshape(-1, c).astype(np.float64),
        delta.reshape(-1).astype(np.float64),
        ~labels.ignore().reshape(-1),
    )


def train_toy(
    scene_cfg: SceneConfig,
    cfg: TrainConfig = TrainConfig(),
    schema_name: str = "grouped7",
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
) -> tuple[ToyModel, TrainingCurve]:
    """Train on scenes 0..n_train_scenes-1 of the configured stream.

    The first ceil(fraction * n) scenes contain obstacles, the rest are
    generated with obstacle density zero. Which supervision those
    obstacle pixels get depends on ``cfg.use_ood``; everything else,
    including every random draw, is identical across that switch.
    """
    schema = build_schema(schema_name)
    n_ood = int(np.ceil(cfg.ood_scene_fraction * cfg.n_train_scenes))
    scenes = [
        _prepare_scene(scene_cfg, i, i < n_ood, cfg, schema)
        for i in range(cfg.n_train_scenes)
    ]

    model = init_toy_model(schema.k, hidden=hidden, seed=cfg.seed)
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    loss_cfg = LossConfig(lam=cfg.lam)
    rng = np.random.default_rng([cfg.seed, 2])

    steps = []
    losses = []
    for step in range(cfg.max_steps):
        lr = poly_lr(step, cfg.max_steps, cfg.lr0, cfg.poly_power)
        feats, targets, delta, counted = scenes[int(rng.integers(0, len(scenes)))]
        pick = rng.integers(0, feats.shape[0], size=cfg.batch_pixels)
        x = feats[pick]
        y = targets[pick]
        d = delta[pick]
        m = counted[pick]
        if not m.any():
            continue
        acts, logits = model._forward_cached(x)
        grad_logits = boundary_loss_grad_flat(logits, y, d, m, loss_cfg)
        gw, gb = model._backward(acts, grad_logits)
        for i in range(len(model.weights)):
            vel_w[i] = cfg.momentum * vel_w[i] + gw[i] + cfg.weight_decay * model.weights[i]
            vel_b[i] = cfg.momentum * vel_b[i] + gb[i]
            model.weights[i] -= lr * vel_w[i]
            model.biases[i] -= lr * vel_b[i]
        if step % cfg.log_every == 0 or step == cfg.max_steps - 1:
            value = boundary_loss_flat(expit(logits), y, d, m, loss_cfg).total
            if not np.isfinite(value):
                raise TrainingError(f"non-finite loss at step {step}")
            steps.append(step)
            losses.append(value)
    return model, TrainingCurve(np.asarray(steps), np.asarray(losses))


def predict(model: ToyModel, features: np.ndarray) -> tuple[ProbMap, LogitMap]:
    """Run the model over an (H, W, feature_dim) feature image.

    The probability map is the sigmoid of the stored float32 logits, so
    the two returned maps are consistent to the last bit.
    """
    feats = np.asarray(features)
    if feats.ndim != 3 or feats.shape[2] != model.weights[0].shape[0]:
        raise ValidationError(
            f"expected (H, W, {model.weights[0].shape[0]}) features, got {feats.shape}"
        )
    h, w = feats.shape[:2]
    z = model.forward(feats.reshape(-1, feats.shape[2]))
    logits = z.reshape(h, w, -1).astype(np.float32)
    return ProbMap(expit(logits)), LogitMap(logits)
