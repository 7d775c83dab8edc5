"""Feedforward meta-learner for stacked ensembles.

Architecture: dense+ReLU -> batch norm -> dropout -> dense+ReLU ->
dense+ReLU -> dense+sigmoid, trained with adaptive-moment gradient
descent on mean binary cross-entropy. Dropout and batch statistics are
active only during training; inference uses the running statistics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class BlendNetConfig:
    layer_widths: tuple = (128, 64, 32)
    dropout_rate: float = 0.3
    epochs: int = 50
    batch_size: int = 512
    learning_rate: float = 1e-3
    seed: int = 0
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def validate(self):
        if len(self.layer_widths) != 3 or min(self.layer_widths) < 1:
            raise ValueError("layer_widths must be three positive integers")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("bad batch_size or learning_rate")


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _bce(z, y):
    """Mean BCE of logits z against labels y, computed stably."""
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


@dataclass
class BlendNetModel:
    config: BlendNetConfig
    input_dim: int
    params: dict  # W1,b1,gamma,beta,W2,b2,W3,b3,W4,b4
    running_mean: np.ndarray
    running_var: np.ndarray
    loss_trace: np.ndarray | None = None

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())

    # ------------------------------------------------------------------
    def _forward(self, X, training: bool, rng=None, bn_stats=None):
        """Full forward pass; returns (logits, cache for backprop).

        bn_stats optionally freezes the batch statistics to a given
        (mean, var) pair, used by the consistency checks.
        """
        p = self.params
        cfg = self.config
        z1 = X @ p["W1"] + p["b1"]
        a1 = np.maximum(z1, 0.0)
        if training:
            if bn_stats is not None:
                mu, var = bn_stats
            else:
                mu = a1.mean(axis=0)
                var = a1.var(axis=0)
                self.running_mean = cfg.bn_momentum * self.running_mean + (1 - cfg.bn_momentum) * mu
                self.running_var = cfg.bn_momentum * self.running_var + (1 - cfg.bn_momentum) * var
        else:
            mu, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + cfg.bn_eps)
        xhat = (a1 - mu) * inv_std
        bn = p["gamma"] * xhat + p["beta"]
        if training and cfg.dropout_rate > 0.0 and rng is not None:
            mask = (rng.random(bn.shape) >= cfg.dropout_rate) / (1.0 - cfg.dropout_rate)
        else:
            mask = None
        d1 = bn * mask if mask is not None else bn
        z2 = d1 @ p["W2"] + p["b2"]
        a2 = np.maximum(z2, 0.0)
        z3 = a2 @ p["W3"] + p["b3"]
        a3 = np.maximum(z3, 0.0)
        z4 = a3 @ p["W4"] + p["b4"]
        cache = {
            "X": X, "z1": z1, "a1": a1, "xhat": xhat, "inv_std": inv_std,
            "mask": mask, "d1": d1, "z2": z2, "a2": a2, "z3": z3, "a3": a3,
            "training": training, "batch_stats": bn_stats is None and training,
        }
        return z4.ravel(), cache

    def loss_and_gradients(self, X, y, training: bool = False, rng=None, bn_stats=None):
        """Mean BCE and its analytic gradients for every parameter."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        z4, c = self._forward(X, training=training, rng=rng, bn_stats=bn_stats)
        loss = _bce(z4, y)
        p = self.params
        m = y.size

        dz4 = ((_sigmoid(z4) - y) / m)[:, None]
        gW4 = c["a3"].T @ dz4
        gb4 = dz4.sum(axis=0)
        da3 = dz4 @ p["W4"].T
        dz3 = da3 * (c["z3"] > 0)
        gW3 = c["a2"].T @ dz3
        gb3 = dz3.sum(axis=0)
        da2 = dz3 @ p["W3"].T
        dz2 = da2 * (c["z2"] > 0)
        gW2 = c["d1"].T @ dz2
        gb2 = dz2.sum(axis=0)
        dd1 = dz2 @ p["W2"].T
        dbn = dd1 * c["mask"] if c["mask"] is not None else dd1
        dgamma = (dbn * c["xhat"]).sum(axis=0)
        dbeta = dbn.sum(axis=0)
        dxhat = dbn * p["gamma"]
        if c["batch_stats"]:
            # gradients flow through the batch mean and variance
            n_rows = X.shape[0]
            da1 = (c["inv_std"] / n_rows) * (
                n_rows * dxhat
                - dxhat.sum(axis=0)
                - c["xhat"] * (dxhat * c["xhat"]).sum(axis=0)
            )
        else:
            da1 = dxhat * c["inv_std"]
        dz1 = da1 * (c["z1"] > 0)
        gW1 = c["X"].T @ dz1
        gb1 = dz1.sum(axis=0)
        grads = {
            "W1": gW1, "b1": gb1, "gamma": dgamma, "beta": dbeta,
            "W2": gW2, "b2": gb2, "W3": gW3, "b3": gb3,
            "W4": gW4, "b4": gb4,
        }
        return loss, grads


def build(input_dim: int, config: BlendNetConfig | None = None) -> BlendNetModel:
    """Seeded fan-in-scaled initialisation of the full architecture."""
    if config is None:
        config = BlendNetConfig()
    config.validate()
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    h1, h2, h3 = config.layer_widths
    rng = np.random.default_rng([config.seed, 0])

    def dense(fan_in, fan_out):
        return rng.standard_normal((fan_in, fan_out)) * math.sqrt(2.0 / fan_in)

    params = {
        "W1": dense(input_dim, h1), "b1": np.zeros(h1),
        "gamma": np.ones(h1), "beta": np.zeros(h1),
        "W2": dense(h1, h2), "b2": np.zeros(h2),
        "W3": dense(h2, h3), "b3": np.zeros(h3),
        "W4": dense(h3, 1), "b4": np.zeros(1),
    }
    return BlendNetModel(
        config=config,
        input_dim=input_dim,
        params=params,
        running_mean=np.zeros(h1),
        running_var=np.ones(h1),
    )


def train(model: BlendNetModel, X, y, config: BlendNetConfig | None = None) -> BlendNetModel:
    """Adam on mean binary cross-entropy; per-epoch loss recorded.

    Falls back to a single full batch when there are fewer rows than the
    batch size. Raises TrainingDiverged on a non-finite loss.
    """
    if config is None:
        config = model.config
    config.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} meta-features")
    n = X.shape[0]
    batch = min(config.batch_size, n)
    rng = np.random.default_rng([config.seed, 1])

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m_state = {k: np.zeros_like(v) for k, v in model.params.items()}
    v_state = {k: np.zeros_like(v) for k, v in model.params.items()}
    t = 0
    trace = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch):
            rows = order[start:start + batch]
            loss, grads = model.loss_and_gradients(X[rows], y[rows], training=True, rng=rng)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite training loss at step {t}")
            t += 1
            for k, g in grads.items():
                m_state[k] = beta1 * m_state[k] + (1 - beta1) * g
                v_state[k] = beta2 * v_state[k] + (1 - beta2) * g * g
                mhat = m_state[k] / (1 - beta1**t)
                vhat = v_state[k] / (1 - beta2**t)
                model.params[k] = model.params[k] - config.learning_rate * mhat / (np.sqrt(vhat) + eps)
            losses.append(loss)
        trace.append(float(np.mean(losses)))
    model.loss_trace = np.asarray(trace)
    return model


def predict_proba(model: BlendNetModel, X) -> np.ndarray:
    """Inference mode: no dropout, running batch-norm statistics.

    Logits are clamped to +/-36 so outputs stay strictly inside (0, 1).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} meta-features")
    z, _ = model._forward(X, training=False)
    return _sigmoid(np.clip(z, -36.0, 36.0))


def classify(model: BlendNetModel, X) -> np.ndarray:
    return (predict_proba(model, X) >= 0.5).astype(np.int64)


def save_model(path, model: BlendNetModel):
    header = {
        "format_version": 1,
        "input_dim": model.input_dim,
        "config": {
            "layer_widths": list(model.config.layer_widths),
            "dropout_rate": model.config.dropout_rate,
            "epochs": model.config.epochs,
            "batch_size": model.config.batch_size,
            "learning_rate": model.config.learning_rate,
            "seed": model.config.seed,
            "bn_momentum": model.config.bn_momentum,
            "bn_eps": model.config.bn_eps,
        },
    }
    payload = {f"p_{k}": v for k, v in model.params.items()}
    payload["running_mean"] = model.running_mean
    payload["running_var"] = model.running_var
    payload["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    if model.loss_trace is not None:
        payload["loss_trace"] = model.loss_trace
    np.savez(path, **payload)


def load_model(path) -> BlendNetModel:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(bytes(data["header"]).decode())
        cfg = header["config"]
        config = BlendNetConfig(
            layer_widths=tuple(cfg["layer_widths"]),
            dropout_rate=cfg["dropout_rate"],
            epochs=cfg["epochs"],
            batch_size=cfg["batch_size"],
            learning_rate=cfg["learning_rate"],
            seed=cfg["seed"],
            bn_momentum=cfg["bn_momentum"],
            bn_eps=cfg["bn_eps"],
        )
        params = {k[2:]: data[k] for k in data.files if k.startswith("p_")}
        model = BlendNetModel(
            config=config,
            input_dim=header["input_dim"],
            params=params,
            running_mean=data["running_mean"],
            running_var=data["running_var"],
            loss_trace=data["loss_trace"] if "loss_trace" in data.files else None,
        )
    return model
