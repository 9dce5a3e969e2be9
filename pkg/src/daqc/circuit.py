"""Gate programs and their simulation.

A :class:`Circuit` is an ordered list of :class:`GateOp`.  Rotation angles
come from one of three sources: a feature of the encoded input, a trainable
parameter, or a fixed value.  Simulation never walks the op list gate by
gate; instead the program is compiled once into *steps*, where every run of
single-qubit rotations on a wire between two entanglers is fused into one
2x2 unitary.  The fused program is what the forward pass, the adjoint
sweep and the parameter-shift evaluator execute.

All simulation entry points are batched: ``features`` may be ``(n_features,)``
or ``(batch, n_features)`` and ``theta`` ``(n_params,)`` or
``(batch, n_params)``; the two broadcast along the batch axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence, Union

import numpy as np

from . import statevector as sv
from .errors import CapacityError, ConfigError, QubitIndexError, ShapeError

ROTATIONS = ("RX", "RY", "RZ")
GATE_KINDS = ROTATIONS + ("ECR",)

# memory ceiling for one batched statevector array
DEFAULT_MEMORY_CAP = 2 << 30


class Feature(NamedTuple):
    index: int


class Param(NamedTuple):
    index: int


class Fixed(NamedTuple):
    value: float


AngleSource = Union[Feature, Param, Fixed]

_FIXED, _FEATURE, _PARAM = 0, 1, 2


@dataclass(frozen=True)
class GateOp:
    """One gate of a program.

    ``partner`` is only used by ECR, where ``target`` is the gate's first
    (least significant) wire.  Rotations carry exactly one ``source``.
    """

    kind: str
    target: int
    partner: int | None = None
    source: AngleSource | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ConfigError(f"unknown gate kind {self.kind!r}")
        if self.kind == "ECR":
            if self.partner is None or self.source is not None:
                raise ConfigError("ECR takes a partner wire and no angle source")
            if self.partner == self.target:
                raise QubitIndexError(f"ECR wires coincide: {self.target}")
        else:
            if self.partner is not None:
                raise ConfigError(f"{self.kind} acts on a single wire")
            if not isinstance(self.source, (Feature, Param, Fixed)):
                raise ConfigError(f"{self.kind} needs a Feature, Param or Fixed source")

    @property
    def axis(self) -> str:
        return self.kind[1].lower()

    def to_json(self) -> dict:
        d = {"kind": self.kind, "target": self.target}
        if self.kind == "ECR":
            d["partner"] = self.partner
        else:
            src = self.source
            d["source"] = type(src).__name__.lower()
            d["value" if isinstance(src, Fixed) else "index"] = src[0]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "GateOp":
        if d["kind"] == "ECR":
            return cls("ECR", d["target"], d["partner"])
        src_type = {"feature": Feature, "param": Param, "fixed": Fixed}[d["source"]]
        arg = d["value"] if src_type is Fixed else d["index"]
        return cls(d["kind"], d["target"], source=src_type(arg))


@dataclass(frozen=True)
class _Fused:
    qubit: int
    codes: np.ndarray  # rotation axis codes, application order
    kinds: np.ndarray  # _FIXED / _FEATURE / _PARAM
    index: np.ndarray  # feature or parameter index (0 for fixed)
    value: np.ndarray  # fixed angle (0 otherwise)

    @property
    def has_params(self) -> bool:
        return bool(np.any(self.kinds == _PARAM))


@dataclass(frozen=True)
class _Entangle:
    a: int
    b: int


def _fuse(qubit: int, ops: list[GateOp]) -> _Fused:
    codes = np.array([sv.AXIS_CODE[op.axis] for op in ops], dtype=np.int64)
    kinds = np.empty(len(ops), dtype=np.int64)
    index = np.zeros(len(ops), dtype=np.int64)
    value = np.zeros(len(ops))
    for r, op in enumerate(ops):
        src = op.source
        if isinstance(src, Fixed):
            kinds[r] = _FIXED
            value[r] = src.value
        elif isinstance(src, Feature):
            kinds[r] = _FEATURE
            index[r] = src.index
        else:
            kinds[r] = _PARAM
            index[r] = src.index
    return _Fused(qubit, codes, kinds, index, value)


class Circuit:
    """A gate program on ``n_qubits`` wires."""

    def __init__(self, n_qubits: int, ops: Sequence[GateOp], n_features: int | None = None,
                 n_params: int | None = None):
        self.n_qubits = sv.check_qubit_count(n_qubits)
        self.ops = tuple(ops)
        max_feature = max_param = -1
        for op in self.ops:
            for w in (op.target, op.partner):
                if w is not None and not 0 <= w < self.n_qubits:
                    raise QubitIndexError(f"wire {w} out of range in {op}")
            if isinstance(op.source, Feature):
                max_feature = max(max_feature, op.source.index)
            elif isinstance(op.source, Param):
                max_param = max(max_param, op.source.index)
        self.n_features = max_feature + 1 if n_features is None else int(n_features)
        self.n_params = max_param + 1 if n_params is None else int(n_params)
        if max_feature >= self.n_features or max_param >= self.n_params:
            raise ConfigError("angle source index exceeds declared feature/parameter count")

    def gate_counts(self) -> dict:
        counts = {"feature": 0, "param": 0, "fixed": 0, "ecr": 0}
        for op in self.ops:
            if op.kind == "ECR":
                counts["ecr"] += 1
            else:
                counts[type(op.source).__name__.lower()] += 1
        return counts

    @cached_property
    def program(self) -> tuple:
        steps = []
        pending: dict[int, list[GateOp]] = {q: [] for q in range(self.n_qubits)}
        for op in self.ops:
            if op.kind == "ECR":
                for w in (op.target, op.partner):
                    if pending[w]:
                        steps.append(_fuse(w, pending[w]))
                        pending[w] = []
                steps.append(_Entangle(op.target, op.partner))
            else:
                pending[op.target].append(op)
        for q in range(self.n_qubits):
            if pending[q]:
                steps.append(_fuse(q, pending[q]))
        return tuple(steps)


# ---------------------------------------------------------------------------
# helpers


def _as_batch(features, theta, circuit: Circuit):
    f = np.atleast_2d(np.asarray(features, dtype=float))
    t = np.atleast_2d(np.asarray(theta, dtype=float))
    if f.shape[1] != circuit.n_features:
        raise ShapeError(f"expected {circuit.n_features} features, got {f.shape[1]}")
    if t.shape[1] != circuit.n_params:
        raise ShapeError(f"expected {circuit.n_params} parameters, got {t.shape[1]}")
    nb = max(f.shape[0], t.shape[0])
    if f.shape[0] not in (1, nb) or t.shape[0] not in (1, nb):
        raise ShapeError(f"batch sizes {f.shape[0]} and {t.shape[0]} do not broadcast")
    return f, t, nb


def _step_angles(step: _Fused, f: np.ndarray, t: np.ndarray) -> np.ndarray:
    uses_f = bool(np.any(step.kinds == _FEATURE))
    uses_t = bool(np.any(step.kinds == _PARAM))
    nb = max(f.shape[0] if uses_f else 1, t.shape[0] if uses_t else 1)
    angles = np.broadcast_to(step.value, (nb, step.codes.size)).copy()
    for kind, src in ((_FEATURE, f), (_PARAM, t)):
        cols = np.nonzero(step.kinds == kind)[0]
        if cols.size:
            angles[:, cols] = src[:, step.index[cols]]
    return angles


def _chain(rots: np.ndarray) -> np.ndarray:
    """Product ``R_m ... R_1`` over axis 1 of ``rots`` (batch, m, 2, 2)."""
    out = rots[:, 0]
    for r in range(1, rots.shape[1]):
        out = rots[:, r] @ out
    return np.ascontiguousarray(out)


def _step_matrices(step: _Fused, f, t):
    angles = _step_angles(step, f, t)
    rots = sv.rotation_matrices(step.codes[None, :], angles)
    return rots, _chain(rots)


def check_memory(n_states: int, n_qubits: int, cap: int = DEFAULT_MEMORY_CAP) -> None:
    need = n_states * (16 << n_qubits)
    if need > cap:
        raise CapacityError(
            f"{n_states} states of {n_qubits} qubits need {need / 2**20:.0f} MiB "
            f"(cap {cap / 2**20:.0f} MiB)"
        )


def zero_states(n_states: int, n_qubits: int) -> np.ndarray:
    check_memory(n_states, n_qubits)
    psi = np.zeros((n_states, 1 << n_qubits), dtype=np.complex128)
    psi[:, 0] = 1.0
    return psi


def _run_steps(circuit: Circuit, psi: np.ndarray, f, t, start: int = 0, mats=None):
    for s in range(start, len(circuit.program)):
        step = circuit.program[s]
        if isinstance(step, _Entangle):
            sv.apply_ecr_batch(psi, step.a, step.b)
        else:
            m = mats[s] if mats is not None else _step_matrices(step, f, t)[1]
            sv.apply_1q_batch(psi, step.qubit, m)
    return psi


# ---------------------------------------------------------------------------
# forward


def simulate(circuit: Circuit, features, theta) -> np.ndarray:
    """Final states ``U(features, theta)|0>`` as a ``(batch, 2**n)`` array."""
    f, t, nb = _as_batch(features, theta, circuit)
    psi = zero_states(nb, circuit.n_qubits)
    return _run_steps(circuit, psi, f, t)


def simulate_gatewise(circuit: Circuit, features, theta) -> sv.StateVector:
    """Unfused single-sample reference path: one kernel call per gate."""
    features = np.asarray(features, dtype=float)
    theta = np.asarray(theta, dtype=float)
    state = sv.new_zero_state(circuit.n_qubits)
    for op in circuit.ops:
        if op.kind == "ECR":
            sv.apply_ecr(state, op.target, op.partner)
            continue
        src = op.source
        if isinstance(src, Fixed):
            angle = src.value
        elif isinstance(src, Feature):
            angle = features[src.index]
        else:
            angle = theta[src.index]
        sv.apply_rotation(state, op.axis, op.target, float(angle))
    return state


def expectations(circuit: Circuit, features, theta) -> np.ndarray:
    """``<Z_q>`` for every wire; shape ``(batch, n_qubits)``."""
    psi = simulate(circuit, features, theta)
    return sv.expect_z_all_batch(psi, circuit.n_qubits)


def wire_mask(wires) -> int:
    mask = 0
    for w in wires:
        mask |= 1 << int(w)
    return mask


# ---------------------------------------------------------------------------
# adjoint differentiation


def adjoint_backward(circuit: Circuit, features, theta, psi: np.ndarray, lam: np.ndarray,
                     want_features: bool = False):
    """Reverse sweep returning ``d<psi_b|O_b|psi_b>/d theta`` per sample.

    ``psi`` must hold the final states of :func:`simulate` for the same
    inputs and ``lam`` the states ``O_b psi_b``; both are overwritten.
    Returns ``(batch, n_params)`` gradients, plus ``(batch, n_features)``
    when ``want_features`` is set.
    """
    f, t, nb = _as_batch(features, theta, circuit)
    if psi.shape != lam.shape or psi.shape[0] != nb:
        raise ShapeError("psi and lam must both hold one state per batch entry")
    g_theta = np.zeros((nb, circuit.n_params))
    g_feat = np.zeros((nb, circuit.n_features)) if want_features else None
    macc = np.empty((nb, 2, 2), dtype=np.complex128)
    eye = np.eye(2, dtype=np.complex128)
    for step in reversed(circuit.program):
        if isinstance(step, _Entangle):
            sv.apply_ecr_batch(psi, step.a, step.b)
            sv.apply_ecr_batch(lam, step.a, step.b)
            continue
        rots, v = _step_matrices(step, f, t)
        vdag = np.ascontiguousarray(np.conj(np.swapaxes(v, -1, -2)))
        sv.adjoint_1q_batch(psi, lam, step.qubit, vdag, macc)
        mt = np.swapaxes(macc, -1, -2)
        m = rots.shape[1]
        # prefix[r] = R_{r-1} ... R_0, suffix[r] = R_{m-1} ... R_{r+1}
        prefix = [np.broadcast_to(eye, rots[:, 0].shape)]
        for r in range(m - 1):
            prefix.append(rots[:, r] @ prefix[-1])
        suffix = [None] * m
        suffix[m - 1] = np.broadcast_to(eye, rots[:, 0].shape)
        for r in range(m - 1, 0, -1):
            suffix[r - 1] = suffix[r] @ rots[:, r]
        for r in range(m):
            kind = step.kinds[r]
            if kind == _FIXED or (kind == _FEATURE and not want_features):
                continue
            x = -0.5j * (sv.PAULI[step.codes[r]] @ rots[:, r])
            y = prefix[r] @ mt @ suffix[r]
            d = 2.0 * np.real(np.einsum("bij,bji->b", x, y))
            target = g_theta if kind == _PARAM else g_feat
            target[:, step.index[r]] += d
    if want_features:
        return g_theta, g_feat
    return g_theta


def adjoint_gradient(circuit: Circuit, features, theta, weights=None, mask: int | None = None):
    """Convenience wrapper: value and gradient of a diagonal observable.

    Either ``weights`` (``(batch, n)`` or ``(n,)``) selects
    ``O = sum_q w_q Z_q``, or ``mask`` selects the Z-string on those wires.
    Returns ``(values (batch,), grads (batch, n_params))``.
    """
    f, t, nb = _as_batch(features, theta, circuit)
    psi = simulate(circuit, f, t)
    lam = np.empty_like(psi)
    if mask is not None:
        sv.parity_apply_batch(psi, mask, lam)
    else:
        w = np.broadcast_to(np.atleast_2d(np.asarray(weights, dtype=float)),
                            (nb, circuit.n_qubits)).copy()
        sv.weighted_z_apply_batch(psi, w, lam)
    values = np.einsum("bi,bi->b", psi.conj(), lam).real
    grads = adjoint_backward(circuit, f, t, psi, lam)
    return values, grads


# ---------------------------------------------------------------------------
# parameter shift


def parameter_shift_gradient(circuit: Circuit, features, theta, masks: Sequence[int],
                             memory_cap: int = 512 << 20) -> np.ndarray:
    """Parameter-shift gradients of Z-string expectations for one sample.

    ``masks`` lists the observables as wire bitmasks (``1 << i`` for
    ``<Z_i>``, all bits for ``<Z^{(x)n}>``).  Every trainable rotation is
    re-evaluated at ``theta_j +/- pi/2`` from a cached checkpoint of the
    state entering its fused step.  Returns ``(len(masks), n_params)``.
    """
    f, t, nb = _as_batch(features, theta, circuit)
    if nb != 1:
        raise ShapeError("parameter_shift_gradient takes a single sample")
    masks = [int(m) for m in masks]
    program = circuit.program
    mats = [None if isinstance(s, _Entangle) else _step_matrices(s, f, t)[1] for s in program]
    n = circuit.n_qubits
    per_state = 16 << n
    shift_steps = [s for s, step in enumerate(program)
                   if isinstance(step, _Fused) and step.has_params]
    stride = max(1, -(-len(shift_steps) * per_state // memory_cap))
    keep = set(shift_steps[::stride])

    checkpoints = {}
    psi = zero_states(1, n)
    for s, step in enumerate(program):
        if s in keep:
            checkpoints[s] = psi.copy()
        _run_steps_range(circuit, psi, mats, s, s + 1)

    grad = np.zeros((len(masks), circuit.n_params))
    max_batch = max(2, memory_cap // per_state)
    ordered = sorted(checkpoints)
    for s in shift_steps:
        step = program[s]
        base_s = max(c for c in ordered if c <= s)
        base = checkpoints[base_s]
        if base_s < s:
            base = base.copy()
            _run_steps_range(circuit, base, mats, base_s, s)
        cols = np.nonzero(step.kinds == _PARAM)[0]
        angles = _step_angles(step, f, t)[0]
        jobs = [(r, sign) for r in cols for sign in (1.0, -1.0)]
        for lo in range(0, len(jobs), max_batch):
            chunk = jobs[lo:lo + max_batch]
            shifted = np.repeat(angles[None, :], len(chunk), axis=0)
            for row, (r, sign) in enumerate(chunk):
                shifted[row, r] += sign * np.pi / 2
            rots = sv.rotation_matrices(step.codes[None, :], shifted)
            batch = np.repeat(base, len(chunk), axis=0)
            sv.apply_1q_batch(batch, step.qubit, _chain(rots))
            _run_steps_range(circuit, batch, mats, s + 1, len(program))
            for o, mask in enumerate(masks):
                vals = sv.parity_expectation_batch(batch, mask)
                for row, (r, sign) in enumerate(chunk):
                    grad[o, step.index[r]] += 0.5 * sign * vals[row]
    return grad


def _run_steps_range(circuit: Circuit, psi, mats, start: int, stop: int):
    for s in range(start, stop):
        step = circuit.program[s]
        if isinstance(step, _Entangle):
            sv.apply_ecr_batch(psi, step.a, step.b)
        else:
            sv.apply_1q_batch(psi, step.qubit, mats[s])


def cost_values(circuit: Circuit, features, theta, masks: Sequence[int]) -> np.ndarray:
    """Z-string expectations ``(len(masks), batch)``."""
    psi = simulate(circuit, features, theta)
    return np.array([sv.parity_expectation_batch(psi, int(m)) for m in masks])
