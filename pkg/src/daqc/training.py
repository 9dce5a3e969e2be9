"""Hybrid training: circuit expectations, linear readout, cross-entropy.

Training gradients come from one forward and one adjoint sweep per sample.
Parameter-shift gradients are available for diagnostics and as a
cross-check.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp

from . import statevector as sv
from .builder import CircuitSpec, EncodedSample
from .circuit import Circuit, adjoint_backward, check_memory, parameter_shift_gradient, simulate, wire_mask
from .errors import ConfigError, DataError, LabelError, ShapeError
from .metrics import MetricsReport, classification_report, roc_auc

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "daqc-checkpoint"
CHECKPOINT_VERSION = 1
TRACE_FIELDS = ("epoch", "train_loss", "val_loss", "val_auc", "grad_l2")


@dataclass
class ModelParams:
    theta: np.ndarray
    readout_W: np.ndarray
    readout_b: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.readout_W = np.atleast_2d(np.asarray(self.readout_W, dtype=float))
        self.readout_b = np.asarray(self.readout_b, dtype=float)
        if self.readout_W.shape[0] != self.readout_b.shape[0]:
            raise ShapeError("readout_W rows and readout_b length differ")
        for arr in (self.theta, self.readout_W, self.readout_b):
            if not np.all(np.isfinite(arr)):
                raise ShapeError("model parameters must be finite")

    @property
    def n_classes(self) -> int:
        return self.readout_b.shape[0]

    def check(self, spec: Circuit) -> None:
        if self.theta.shape != (spec.n_params,):
            raise ShapeError(f"theta has {self.theta.size} entries, circuit needs {spec.n_params}")
        if self.readout_W.shape != (self.n_classes, spec.n_qubits):
            raise ShapeError(f"readout_W must be {self.n_classes}x{spec.n_qubits}")

    def copy(self) -> "ModelParams":
        return ModelParams(self.theta.copy(), self.readout_W.copy(), self.readout_b.copy())

    def to_json(self) -> dict:
        return {"theta": self.theta.tolist(), "readout_W": self.readout_W.tolist(),
                "readout_b": self.readout_b.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "ModelParams":
        return cls(d["theta"], d["readout_W"], d["readout_b"])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.005
    weight_decay: float = 1e-4
    epochs: int = 250
    batch_size: int = 64
    early_stop_patience: int = 20
    init_seed: int = 0
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate and weight_decay must be non-negative")
        if self.epochs < 1 or self.batch_size < 1 or self.early_stop_patience < 1:
            raise ConfigError("epochs, batch_size and early_stop_patience must be positive")
        if self.early_stop_patience > self.epochs:
            raise ConfigError("early_stop_patience cannot exceed epochs")
        if not 0 <= int(self.init_seed) < 2**64:
            raise ConfigError("init_seed must be an unsigned 64-bit integer")

    def to_json(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown training config fields: {sorted(extra)}")
        d = dict(d)
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d)


def init_params(spec: Circuit, n_classes: int, seed: int = 0) -> ModelParams:
    """theta ~ U(0, 2 pi); readout entries ~ U(-1/sqrt(n), 1/sqrt(n))."""
    if n_classes < 2:
        raise ConfigError("need at least two classes")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    bound = 1.0 / math.sqrt(spec.n_qubits)
    theta = rng.uniform(0.0, 2.0 * np.pi, spec.n_params)
    w = rng.uniform(-bound, bound, (n_classes, spec.n_qubits))
    b = rng.uniform(-bound, bound, n_classes)
    return ModelParams(theta, w, b)


# ---------------------------------------------------------------------------
# forward / loss


def _angles(sample) -> np.ndarray:
    return np.asarray(sample.angles if isinstance(sample, EncodedSample) else sample, dtype=float)


def _chunk_size(spec: Circuit, copies: int = 2) -> int:
    per = copies * (16 << spec.n_qubits)
    return max(1, (256 << 20) // per)


def expectations_batch(spec: Circuit, angles, theta) -> np.ndarray:
    """``<Z_q>`` for a stack of angle vectors, processed in memory-bounded chunks."""
    angles = np.atleast_2d(angles)
    step = _chunk_size(spec, 1)
    out = [sv.expect_z_all_batch(simulate(spec, angles[i:i + step], theta), spec.n_qubits)
           for i in range(0, angles.shape[0], step)]
    return np.concatenate(out, axis=0)


def forward(spec: Circuit, sample, params: ModelParams):
    """Logits ``W m + b`` and the expectation vector ``m`` for one sample
    (or a stack of samples, giving ``(batch, C)`` and ``(batch, n)``)."""
    params.check(spec)
    angles = _angles(sample)
    m = expectations_batch(spec, angles, params.theta)
    logits = m @ params.readout_W.T + params.readout_b
    if angles.ndim == 1:
        return logits[0], m[0]
    return logits, m


def softmax(logits) -> np.ndarray:
    logits = np.asarray(logits, dtype=float)
    return np.exp(logits - logsumexp(logits, axis=-1, keepdims=True))


def loss(logits, labels) -> float:
    """Mean cross-entropy of ``softmax(logits)`` against integer labels."""
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    labels = np.atleast_1d(np.asarray(labels))
    if labels.shape[0] != logits.shape[0]:
        raise ShapeError(f"{logits.shape[0]} logit rows for {labels.shape[0]} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise LabelError(f"labels must lie in [0, {logits.shape[1]})")
    labels = labels.astype(np.int64)
    lse = logsumexp(logits, axis=1)
    return float(np.mean(lse - logits[np.arange(labels.size), labels]))


# ---------------------------------------------------------------------------
# gradients


def cost_mask(cost, n_qubits: int) -> int:
    """Wire mask for a cost: ``"global"`` -> all wires, an int ``i`` -> ``Z_i``,
    or an iterable of wires."""
    if isinstance(cost, str):
        if cost == "global":
            return (1 << n_qubits) - 1
        if cost == "local":
            return 1
        raise ConfigError(f"unknown cost {cost!r}")
    if isinstance(cost, (int, np.integer)):
        return wire_mask([cost])
    return wire_mask(cost)


def grad_parameter_shift(spec: Circuit, sample, cost, theta) -> np.ndarray:
    """Parameter-shift gradient of a Pauli-Z cost for one sample."""
    mask = cost_mask(cost, spec.n_qubits)
    return parameter_shift_gradient(spec, _angles(sample), theta, [mask])[0]


def grad_adjoint(spec: Circuit, samples, params: ModelParams, labels):
    """Mean cross-entropy over ``samples`` and its exact gradient.

    Returns ``(loss, grads)`` with ``grads`` a :class:`ModelParams` holding
    the derivatives with respect to theta, readout_W and readout_b.
    """
    params.check(spec)
    angles = np.atleast_2d(_angles(samples))
    labels = np.atleast_1d(np.asarray(labels)).astype(np.int64)
    nb = angles.shape[0]
    if labels.shape[0] != nb:
        raise ShapeError(f"{nb} samples but {labels.shape[0]} labels")
    if labels.min() < 0 or labels.max() >= params.n_classes:
        raise LabelError(f"labels must lie in [0, {params.n_classes})")
    g_theta = np.zeros(spec.n_params)
    g_w = np.zeros_like(params.readout_W)
    g_b = np.zeros_like(params.readout_b)
    total = 0.0
    step = _chunk_size(spec, 2)
    for lo in range(0, nb, step):
        a = angles[lo:lo + step]
        y = labels[lo:lo + step]
        psi = simulate(spec, a, params.theta)
        m = sv.expect_z_all_batch(psi, spec.n_qubits)
        logits = m @ params.readout_W.T + params.readout_b
        lse = logsumexp(logits, axis=1)
        total += float(np.sum(lse - logits[np.arange(y.size), y]))
        dlogits = np.exp(logits - lse[:, None])
        dlogits[np.arange(y.size), y] -= 1.0
        dlogits /= nb
        g_w += dlogits.T @ m
        g_b += dlogits.sum(axis=0)
        dm = dlogits @ params.readout_W
        lam = np.empty_like(psi)
        sv.weighted_z_apply_batch(psi, np.ascontiguousarray(dm), lam)
        g_theta += adjoint_backward(spec, a, params.theta, psi, lam).sum(axis=0)
    return total / nb, ModelParams(g_theta, g_w, g_b)


# ---------------------------------------------------------------------------
# optimisation


class AdamW:
    """Adam with decoupled weight decay over a list of arrays (updated in place)."""

    def __init__(self, arrays, lr: float, weight_decay: float = 0.0,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.arrays = arrays
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]

    def step(self, grads) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for a, g, m, v in zip(self.arrays, grads, self.m, self.v):
            a *= 1.0 - self.lr * self.weight_decay
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def cosine_lr(base: float, epoch: int, epochs: int) -> float:
    """Cosine annealing from ``base`` at epoch 0 towards 0 at ``epochs``."""
    return 0.5 * base * (1.0 + math.cos(math.pi * epoch / epochs))


def predict_proba(spec: Circuit, params: ModelParams, angles) -> np.ndarray:
    logits, _ = forward(spec, np.atleast_2d(angles), params)
    return softmax(logits)


def _check_split(split, name: str):
    angles, labels = split
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    labels = np.asarray(labels).astype(np.int64)
    if labels.size == 0:
        raise DataError(f"{name} split is empty")
    if angles.shape[0] != labels.size:
        raise ShapeError(f"{name} split has {angles.shape[0]} samples but {labels.size} labels")
    return angles, labels


def train(spec: Circuit, train_split, val_split, config: TrainConfig,
          n_classes: int | None = None, params: ModelParams | None = None):
    """Mini-batch AdamW with cosine annealing and early stopping on val AUC.

    The returned parameters are those of the epoch with the highest
    validation AUC, the lowest validation loss breaking ties.

    ``train_split`` and ``val_split`` are ``(angles, labels)`` pairs.  Returns
    the parameters of the best validation-AUC epoch and a per-epoch trace of
    dicts with keys :data:`TRACE_FIELDS` (plus ``lr``).
    """
    x_tr, y_tr = _check_split(train_split, "train")
    x_val, y_val = _check_split(val_split, "validation")
    if n_classes is None:
        n_classes = int(max(y_tr.max(), y_val.max())) + 1
    check_memory(min(config.batch_size, _chunk_size(spec, 2)) * 2, spec.n_qubits)
    seeds = np.random.SeedSequence(int(config.init_seed)).spawn(2)
    if params is None:
        params = init_params(spec, n_classes, int(seeds[0].generate_state(1, np.uint64)[0]))
    params = params.copy()
    params.check(spec)
    order_rng = np.random.Generator(np.random.PCG64(seeds[1]))
    opt = AdamW([params.theta, params.readout_W, params.readout_b], config.learning_rate,
                config.weight_decay, config.betas, config.eps)

    best_auc = -np.inf
    best_key = (-np.inf, -np.inf)
    best = params.copy()
    wait = 0
    trace = []
    for epoch in range(config.epochs):
        opt.lr = cosine_lr(config.learning_rate, epoch, config.epochs)
        perm = order_rng.permutation(y_tr.size)
        losses, norms, sizes = [], [], []
        for lo in range(0, perm.size, config.batch_size):
            idx = perm[lo:lo + config.batch_size]
            batch_loss, g = grad_adjoint(spec, x_tr[idx], params, y_tr[idx])
            opt.step([g.theta, g.readout_W, g.readout_b])
            losses.append(batch_loss)
            sizes.append(idx.size)
            norms.append(float(np.linalg.norm(g.theta)))
        logits, _ = forward(spec, x_val, params)
        val_loss = loss(logits, y_val)
        val_auc = roc_auc(softmax(logits), y_val, n_classes)
        row = {
            "epoch": epoch + 1,
            "train_loss": float(np.average(losses, weights=sizes)),
            "val_loss": val_loss,
            "val_auc": val_auc,
            "grad_l2": float(np.mean(norms)),
            "lr": opt.lr,
        }
        trace.append(row)
        log.info("epoch %d train_loss %.4f val_loss %.4f val_auc %.4f grad_l2 %.3g",
                 row["epoch"], row["train_loss"], val_loss, val_auc, row["grad_l2"])
        # ties in AUC go to the lower validation loss; patience only resets
        # on a strict AUC gain
        if (val_auc, -val_loss) > best_key:
            best_key = (val_auc, -val_loss)
            best = params.copy()
        if val_auc > best_auc:
            best_auc = val_auc
            wait = 0
        else:
            wait += 1
            if wait >= config.early_stop_patience:
                log.info("early stop after epoch %d (best val AUC %.4f)", epoch + 1, best_auc)
                break
    return best, trace


def evaluate(spec: Circuit, params: ModelParams, split) -> MetricsReport:
    angles, labels = _check_split(split, "evaluation")
    return classification_report(predict_proba(spec, params, angles), labels)


# ---------------------------------------------------------------------------
# persistence


def checkpoint_document(spec: CircuitSpec, params: ModelParams, trace=(), train_config=None,
                        extra: dict | None = None) -> dict:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "circuit": spec.to_json(),
        "n_classes": params.n_classes,
        "params": params.to_json(),
        "trace": list(trace),
    }
    if train_config is not None:
        doc["train_config"] = train_config.to_json()
    if extra:
        doc.update(extra)
    return doc


def save_checkpoint(path, spec: CircuitSpec, params: ModelParams, trace=(), train_config=None,
                    extra: dict | None = None) -> None:
    doc = checkpoint_document(spec, params, trace, train_config, extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_checkpoint(path):
    """Returns ``(spec, params, document)``."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {doc.get('version')}")
    spec = CircuitSpec.from_json(doc["circuit"])
    params = ModelParams.from_json(doc["params"])
    params.check(spec)
    return spec, params, doc


def write_trace_csv(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_FIELDS)
        for row in trace:
            writer.writerow([row["epoch"]] + [repr(float(row[k])) for k in TRACE_FIELDS[1:]])
