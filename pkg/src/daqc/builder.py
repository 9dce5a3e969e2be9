"""Domain-aware circuit construction.

Images are average-pooled to an ``N x M`` grid, cut into non-overlapping
``p x q`` windows, each window is read in JPEG zigzag order, and the
windows are concatenated in raster order.  The resulting ``N*M`` features
are min-max mapped onto ``[0, pi]`` per image.

The circuit runs ``T = ceil(N*M / n)`` cycles.  Cycle ``t`` (0-based)
encodes features ``t*n .. t*n + n - 1`` with one rotation per wire, applies
a ring of ECR gates when ``t % entangle_period == 0``, then two columns of
trainable rotations.  ``entangle_period = 0`` builds the ring-free
(product-state) variant used as an entanglement baseline.  All rotation axes are drawn uniformly from
``{x, y, z}``.

Axis stream layout: a ``numpy.random.Generator(PCG64(axis_seed))`` draws
``integers(0, 3, size=(T, 3, n))`` in one call; row ``[t, 0]`` holds the
embedding axes of cycle ``t`` and rows ``[t, 1]``, ``[t, 2]`` the axes of
its two trainable columns (0 = x, 1 = y, 2 = z).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import statevector as sv
from .circuit import Circuit, Feature, GateOp, Param, expectations
from .errors import ConfigError, ShapeError

FORMAT_NAME = "daqc-circuit"
FORMAT_VERSION = 1
TRAINABLE_LAYERS_PER_CYCLE = 2


@dataclass(frozen=True)
class DaqcConfig:
    n_qubits: int = 16
    pooled_rows: int = 16
    pooled_cols: int = 16
    window_rows: int = 4
    window_cols: int = 4
    entangle_period: int = 4
    axis_seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("n_qubits", "pooled_rows", "pooled_cols", "window_rows",
                     "window_cols", "entangle_period"):
            value = getattr(self, name)
            floor = 0 if name == "entangle_period" else 1
            if not isinstance(value, (int, np.integer)) or value < floor:
                raise ConfigError(f"{name} must be an integer >= {floor}, got {value!r}")
        if not 2 <= self.n_qubits <= sv.MAX_QUBITS:
            raise ConfigError(f"n_qubits must lie in [2, {sv.MAX_QUBITS}], got {self.n_qubits}")
        if self.pooled_rows % self.window_rows or self.pooled_cols % self.window_cols:
            raise ConfigError(
                f"window {self.window_rows}x{self.window_cols} does not tile the "
                f"{self.pooled_rows}x{self.pooled_cols} pooled grid"
            )
        if not 0 <= int(self.axis_seed) < 2**64:
            raise ConfigError(f"axis_seed must be an unsigned 64-bit integer, got {self.axis_seed}")

    @property
    def n_features(self) -> int:
        return self.pooled_rows * self.pooled_cols

    @property
    def n_cycles(self) -> int:
        return math.ceil(self.n_features / self.n_qubits)

    @property
    def n_params(self) -> int:
        return TRAINABLE_LAYERS_PER_CYCLE * self.n_qubits * self.n_cycles

    @property
    def entangling_cycles(self) -> list[int]:
        if self.entangle_period == 0:
            return []
        return [t for t in range(self.n_cycles) if t % self.entangle_period == 0]

    def n_trainables(self, n_classes: int) -> int:
        """Circuit angles plus the ``C x n`` readout and its bias."""
        return self.n_params + n_classes * self.n_qubits + n_classes

    def to_json(self) -> dict:
        d = asdict(self)
        d["axis_seed"] = int(d["axis_seed"])
        return d

    @classmethod
    def from_json(cls, d: dict) -> "DaqcConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown circuit config fields: {sorted(extra)}")
        return cls(**known)


@dataclass
class EncodedSample:
    angles: np.ndarray
    label: int | None = None


# ---------------------------------------------------------------------------
# image preprocessing


def _pool_matrix(size_in: int, size_out: int) -> np.ndarray:
    mat = np.zeros((size_out, size_in))
    for i in range(size_out):
        lo = (i * size_in) // size_out
        hi = -((-(i + 1) * size_in) // size_out)
        mat[i, lo:hi] = 1.0 / (hi - lo)
    return mat


def adaptive_avg_pool(image, out_rows: int, out_cols: int) -> np.ndarray:
    """Average-pool a ``(..., H, W)`` array to ``(..., out_rows, out_cols)``.

    Output cell ``(i, j)`` averages rows ``[floor(i H / N), ceil((i+1) H / N))``
    and the analogous column range, so windows may overlap by one pixel when
    ``H`` is not a multiple of ``N``.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim < 2:
        raise ShapeError(f"expected at least a 2-D image, got shape {img.shape}")
    h, w = img.shape[-2:]
    if out_rows < 1 or out_cols < 1 or h < out_rows or w < out_cols:
        raise ShapeError(f"cannot pool a {h}x{w} image to {out_rows}x{out_cols}")
    if not np.all(np.isfinite(img)):
        raise ShapeError("image contains non-finite pixels")
    rows = _pool_matrix(h, out_rows)
    cols = _pool_matrix(w, out_cols)
    return np.einsum("ih,...hw,jw->...ij", rows, img, cols)


def zigzag_order(p: int, q: int) -> np.ndarray:
    """Flat indices (``r * q + c``) of a ``p x q`` window in JPEG zigzag order."""
    if p < 1 or q < 1:
        raise ShapeError(f"window must be at least 1x1, got {p}x{q}")
    out = []
    for s in range(p + q - 1):
        rows = range(max(0, s - q + 1), min(s, p - 1) + 1)
        # odd diagonals run top-right to bottom-left, even ones the reverse
        if s % 2 == 0:
            rows = reversed(rows)
        out.extend(r * q + (s - r) for r in rows)
    return np.array(out, dtype=np.int64)


def feature_order(config: DaqcConfig) -> np.ndarray:
    """Flat pooled-grid index of each feature position."""
    n_r, n_c = config.pooled_rows, config.pooled_cols
    p, q = config.window_rows, config.window_cols
    zz = zigzag_order(p, q)
    order = []
    for u in range(n_r // p):
        for v in range(n_c // q):
            for z in zz:
                r, c = divmod(int(z), q)
                order.append((u * p + r) * n_c + v * q + c)
    return np.array(order, dtype=np.int64)


def normalize_angles(features) -> np.ndarray:
    """Per-row min-max map onto ``[0, pi]``; constant rows map to 0."""
    f = np.atleast_2d(np.asarray(features, dtype=float))
    lo = f.min(axis=1, keepdims=True)
    span = f.max(axis=1, keepdims=True) - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, np.pi * (f - lo) / safe, 0.0)
    return np.clip(out, 0.0, np.pi)


def encode_images(images, config: DaqcConfig) -> np.ndarray:
    """Angle vectors for a stack of images, shape ``(batch, N*M)``."""
    imgs = np.asarray(images, dtype=float)
    if imgs.ndim == 2:
        imgs = imgs[None]
    pooled = adaptive_avg_pool(imgs, config.pooled_rows, config.pooled_cols)
    flat = pooled.reshape(pooled.shape[0], -1)[:, feature_order(config)]
    return normalize_angles(flat)


def encode_sample(image, config: DaqcConfig, label: int | None = None) -> EncodedSample:
    return EncodedSample(encode_images(image, config)[0], label)


# ---------------------------------------------------------------------------
# circuit


class CircuitSpec(Circuit):
    """The materialised DAQC program together with its axis tables."""

    def __init__(self, config: DaqcConfig, embed_axes: np.ndarray, train_axes: np.ndarray):
        n, n_cycles = config.n_qubits, config.n_cycles
        embed_axes = np.asarray(embed_axes, dtype=np.int64)
        train_axes = np.asarray(train_axes, dtype=np.int64)
        if embed_axes.shape != (n_cycles, n) or train_axes.shape != (n_cycles, 2, n):
            raise ConfigError("axis tables do not match the configuration")
        if embed_axes.min(initial=0) < 0 or max(embed_axes.max(initial=0), train_axes.max(initial=0)) > 2:
            raise ConfigError("axis codes must be 0, 1 or 2")
        self.config = config
        self.embed_axes = embed_axes
        self.train_axes = train_axes
        kinds = [f"R{a.upper()}" for a in sv.AXES]
        ops = []
        for t in range(n_cycles):
            for q in range(n):
                k = t * n + q
                if k < config.n_features:
                    ops.append(GateOp(kinds[embed_axes[t, q]], q, source=Feature(k)))
            if config.entangle_period and t % config.entangle_period == 0:
                ops.extend(GateOp("ECR", q, (q + 1) % n) for q in range(n))
            for layer in range(TRAINABLE_LAYERS_PER_CYCLE):
                for q in range(n):
                    ops.append(GateOp(kinds[train_axes[t, layer, q]], q,
                                      source=Param(self.param_slot(t, layer, q))))
        super().__init__(n, ops, n_features=config.n_features, n_params=config.n_params)

    def param_slot(self, cycle: int, layer: int, qubit: int) -> int:
        return (cycle * TRAINABLE_LAYERS_PER_CYCLE + layer) * self.config.n_qubits + qubit

    def param_layer(self) -> np.ndarray:
        """Trainable-column index (0 .. 2T-1) of every parameter."""
        return np.arange(self.n_params) // self.config.n_qubits

    def to_json(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "config": self.config.to_json(),
            "n_cycles": self.config.n_cycles,
            "n_features": self.n_features,
            "n_params": self.n_params,
            "entangling_cycles": self.config.entangling_cycles,
            "ring_edges": [[q, (q + 1) % self.n_qubits] for q in range(self.n_qubits)],
            "embed_axes": self.embed_axes.tolist(),
            "train_axes": self.train_axes.tolist(),
            "gate_counts": self.gate_counts(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, d: dict) -> "CircuitSpec":
        if d.get("format") != FORMAT_NAME:
            raise ConfigError(f"not a {FORMAT_NAME} document")
        if d.get("version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported circuit format version {d.get('version')}")
        return cls(DaqcConfig.from_json(d["config"]), d["embed_axes"], d["train_axes"])


def sample_axes(config: DaqcConfig) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.PCG64(int(config.axis_seed)))
    draws = rng.integers(0, 3, size=(config.n_cycles, 3, config.n_qubits))
    return draws[:, 0].copy(), draws[:, 1:].copy()


def build_circuit(config: DaqcConfig) -> CircuitSpec:
    config.validate()
    embed, train = sample_axes(config)
    return CircuitSpec(config, embed, train)


def run_circuit(spec: Circuit, sample, params) -> np.ndarray:
    """``(<Z_0>, ..., <Z_{n-1}>)`` for one encoded sample."""
    angles = sample.angles if isinstance(sample, EncodedSample) else sample
    angles = np.asarray(angles, dtype=float)
    params = np.asarray(params, dtype=float)
    if angles.shape != (spec.n_features,):
        raise ShapeError(f"sample has {angles.size} angles, circuit expects {spec.n_features}")
    if params.shape != (spec.n_params,):
        raise ShapeError(f"got {params.size} parameters, circuit expects {spec.n_params}")
    return expectations(spec, angles, params)[0]
