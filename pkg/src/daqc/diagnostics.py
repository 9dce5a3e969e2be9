"""Expressibility, entangling capability and gradient-variance analyses.

Expressibility compares the distribution of pairwise fidelities of states
produced by random inputs against the Haar fidelity density
``P(F) = (d - 1)(1 - F)^(d - 2)`` with ``d = 2**n``, via a binned KL
divergence.  Haar bin masses use the exact CDF ``1 - (1 - F)^(d - 1)``.

Entangling capability is the ensemble mean of the Meyer-Wallach measure
``Q = 2 (1 - mean_q Tr rho_q^2)``.

The gradient-variance sweep draws random circuit instances of growing
width at a fixed per-qubit depth and records, per parameter, the variance
of cost gradients over random weight vectors.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import statevector as sv
from .builder import DaqcConfig, build_circuit
from .circuit import Circuit, adjoint_gradient, check_memory, parameter_shift_gradient, simulate
from .errors import CapacityError, ConfigError, DomainError

log = logging.getLogger(__name__)

DESK_QUBIT_CAP = 16


# ---------------------------------------------------------------------------
# Haar reference


def haar_fidelity_density(F, n_qubits: int):
    """Analytic density of ``|<a|b>|^2`` for Haar-random ``n_qubits`` states."""
    F_arr = np.asarray(F, dtype=float)
    if np.any((F_arr < 0) | (F_arr > 1)) or not np.all(np.isfinite(F_arr)):
        raise DomainError("fidelity must lie in [0, 1]")
    d = 2.0 ** n_qubits
    out = (d - 1.0) * np.power(1.0 - F_arr, d - 2.0)
    return float(out) if np.ndim(F) == 0 else out


def _log_survival(F, n_qubits: int):
    F = np.clip(np.asarray(F, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        return (2.0 ** n_qubits - 1.0) * np.log1p(-F)


def haar_fidelity_cdf(F, n_qubits: int):
    return -np.expm1(_log_survival(F, n_qubits))


def haar_bin_masses(edges, n_qubits: int) -> np.ndarray:
    """Exact Haar probability of each bin.

    Bins below the median are differenced on the CDF and the rest on the
    survival function ``(1 - F)^(d - 1)``, so that tail bins far past the
    bulk keep their tiny but nonzero mass instead of cancelling to 0.
    """
    log_s = _log_survival(edges, n_qubits)
    cdf = -np.expm1(log_s)
    surv = np.exp(log_s)
    head = np.diff(cdf)
    tail = surv[:-1] - surv[1:]
    return np.where(cdf[:-1] < 0.5, head, tail)


def sample_haar_fidelities(size: int, n_qubits: int, rng) -> np.ndarray:
    """Inverse-CDF draws from the Haar fidelity density."""
    u = rng.random(size)
    return -np.expm1(np.log1p(-u) / (2.0 ** n_qubits - 1.0))


def haar_random_states(size: int, n_qubits: int, rng) -> np.ndarray:
    """Haar-random pure states from normalised complex Gaussian vectors."""
    z = rng.normal(size=(size, 1 << n_qubits)) + 1j * rng.normal(size=(size, 1 << n_qubits))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def haar_mean_q(n_qubits: int) -> float:
    d = 2.0 ** n_qubits
    return (d - 2.0) / (d + 1.0)


def kl_divergence(counts, q) -> float:
    """``sum_b p_b ln(p_b / q_b)`` with ``p`` the normalised counts; empty
    bins contribute nothing."""
    counts = np.asarray(counts, dtype=float)
    q = np.asarray(q, dtype=float)
    p = counts / counts.sum()
    nz = p > 0
    if np.any(q[nz] <= 0):
        return float("inf")
    return float(max(0.0, np.sum(p[nz] * (np.log(p[nz]) - np.log(q[nz])))))


@dataclass
class FidelityHistogram:
    edges: np.ndarray
    counts: np.ndarray
    haar_mass: np.ndarray

    def rows(self):
        for lo, hi, c, h in zip(self.edges[:-1], self.edges[1:], self.counts, self.haar_mass):
            yield float(lo), float(hi), int(c), float(h)


def fidelity_histogram(fidelities, n_qubits: int, n_bins: int = 75,
                       fidelity_range: str = "unit") -> FidelityHistogram:
    """Equal-width histogram of fidelities with matching Haar bin masses.

    ``fidelity_range="unit"`` bins ``[0, 1]``.  ``"observed"`` bins
    ``[0, max(fidelities)]`` and renormalises the Haar masses to that
    interval, which keeps the histogram informative for wide registers
    where nearly all Haar mass sits below ``1 / n_bins``.
    """
    f = np.asarray(fidelities, dtype=float)
    if fidelity_range == "unit":
        top = 1.0
    elif fidelity_range == "observed":
        top = float(f.max()) if f.size and f.max() > 0 else 1.0
    else:
        raise ConfigError(f"unknown fidelity_range {fidelity_range!r}")
    edges = np.linspace(0.0, top, n_bins + 1)
    counts, _ = np.histogram(np.clip(f, 0.0, top), bins=edges)
    mass = haar_bin_masses(edges, n_qubits)
    if fidelity_range == "observed":
        mass = mass / mass.sum()
    return FidelityHistogram(edges, counts.astype(np.int64), mass)


# ---------------------------------------------------------------------------
# state ensembles


@dataclass(frozen=True)
class ExpressibilityConfig:
    n_states: int = 2000
    n_pairs: int = 5000
    n_bins: int = 75
    embed_range: tuple = (0.0, np.pi)
    param_range: tuple = (0.0, 2 * np.pi)
    fidelity_range: str = "unit"
    seed: int = 0

    def __post_init__(self):
        if self.n_states < 2 or self.n_pairs < 1 or self.n_bins < 2:
            raise ConfigError("need n_states >= 2, n_pairs >= 1 and n_bins >= 2")
        if self.fidelity_range not in ("unit", "observed"):
            raise ConfigError(f"unknown fidelity_range {self.fidelity_range!r}")

    def to_json(self) -> dict:
        d = asdict(self)
        d["embed_range"] = list(self.embed_range)
        d["param_range"] = list(self.param_range)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ExpressibilityConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown expressibility config fields: {sorted(extra)}")
        d = dict(d)
        for k in ("embed_range", "param_range"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class DiagnosticsReport:
    histogram: FidelityHistogram | None = None
    d_kl: float | None = None
    mean_q: float | None = None
    q_values: np.ndarray | None = None
    fidelities: np.ndarray | None = None
    grad_variance: list = field(default_factory=list)

    def summary(self) -> dict:
        out = {}
        if self.d_kl is not None:
            out["d_kl"] = self.d_kl
        if self.mean_q is not None:
            out["mean_q"] = self.mean_q
        if self.histogram is not None:
            out["n_pairs"] = int(self.histogram.counts.sum())
        return out


def _ensemble_inputs(spec: Circuit, config: ExpressibilityConfig):
    rng = np.random.Generator(np.random.PCG64(int(config.seed)))
    lo, hi = config.embed_range
    feats = rng.uniform(lo, hi, (config.n_states, spec.n_features))
    lo, hi = config.param_range
    thetas = rng.uniform(lo, hi, (config.n_states, spec.n_params))
    first = rng.integers(0, config.n_states, config.n_pairs)
    second = rng.integers(0, config.n_states - 1, config.n_pairs)
    second = second + (second >= first)
    return feats, thetas, first, second


def _chunk(n_qubits: int) -> int:
    return max(1, (128 << 20) // (16 << n_qubits))


def sample_states(spec: Circuit, config: ExpressibilityConfig,
                  memory_cap: int = 3 << 30) -> np.ndarray:
    """The ``n_states`` ensemble as a ``(n_states, 2**n)`` array."""
    check_memory(config.n_states, spec.n_qubits, memory_cap)
    feats, thetas, _, _ = _ensemble_inputs(spec, config)
    states = np.empty((config.n_states, 1 << spec.n_qubits), dtype=np.complex128)
    step = _chunk(spec.n_qubits)
    for lo in range(0, config.n_states, step):
        states[lo:lo + step] = simulate(spec, feats[lo:lo + step], thetas[lo:lo + step])
    return states


def meyer_wallach_q(state) -> float:
    """Twice the mean linear entropy of the single-qubit reduced states."""
    if isinstance(state, sv.StateVector):
        amps, n = state.amplitudes, state.n_qubits
    else:
        amps = np.asarray(state, dtype=np.complex128).ravel()
        n = int(round(np.log2(amps.size)))
    purity = sv.single_qubit_purities(amps, n)
    return float(np.clip(2.0 * (1.0 - purity.mean()), 0.0, 1.0))


def pair_fidelities(states: np.ndarray, first, second) -> np.ndarray:
    return np.abs(np.einsum("ij,ij->i", states[first].conj(), states[second])) ** 2


def state_ensemble_report(spec: Circuit, config: ExpressibilityConfig = ExpressibilityConfig(),
                          entangling: bool = True, expressive: bool = True) -> DiagnosticsReport:
    """Expressibility and/or mean Q over one shared random ensemble."""
    states = sample_states(spec, config)
    report = DiagnosticsReport()
    if expressive:
        _, _, first, second = _ensemble_inputs(spec, config)
        fids = np.empty(config.n_pairs)
        for lo in range(0, config.n_pairs, 256):
            fids[lo:lo + 256] = pair_fidelities(states, first[lo:lo + 256], second[lo:lo + 256])
        hist = fidelity_histogram(fids, spec.n_qubits, config.n_bins, config.fidelity_range)
        report.fidelities = fids
        report.histogram = hist
        report.d_kl = kl_divergence(hist.counts, hist.haar_mass)
    if entangling:
        report.q_values = np.array([meyer_wallach_q(s) for s in states])
        report.mean_q = float(report.q_values.mean())
    return report


def expressibility(spec: Circuit, config: ExpressibilityConfig = ExpressibilityConfig()):
    """``(histogram, d_kl)`` for the circuit's random-input ensemble."""
    report = state_ensemble_report(spec, config, entangling=False)
    return report.histogram, report.d_kl


def mean_q_ensemble(spec: Circuit, config: ExpressibilityConfig = ExpressibilityConfig()) -> float:
    return state_ensemble_report(spec, config, expressive=False).mean_q


def depth_setting(n_ecr_layers: int, n_qubits: int = 16, entangle_period: int = 4,
                  axis_seed: int = 0) -> DaqcConfig:
    """DAQC configuration with ``entangle_period * n_ecr_layers`` cycles on
    ``n_qubits`` wires (16 qubits: 64/128/192/256 embedding gates for 1..4
    ECR rings).  Zero layers keeps one period of cycles and drops the rings."""
    if n_ecr_layers < 0 or entangle_period < 1:
        raise ConfigError("need n_ecr_layers >= 0 and entangle_period >= 1")
    n_cycles = entangle_period * max(n_ecr_layers, 1)
    return DaqcConfig(n_qubits=n_qubits, pooled_rows=n_cycles, pooled_cols=n_qubits,
                      window_rows=1, window_cols=1,
                      entangle_period=entangle_period if n_ecr_layers else 0,
                      axis_seed=axis_seed)


# ---------------------------------------------------------------------------
# barren-plateau sweep


@dataclass(frozen=True)
class BpSweepConfig:
    qubit_list: tuple = (4, 6, 8, 10, 12, 14, 16)
    instances_per_config: int = 5
    weight_samples: int = 50
    costs: tuple = ("global", "local")
    cycles: int = 16
    entangle_period: int = 4
    method: str = "parameter-shift"
    allow_large: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.qubit_list or min(self.qubit_list) < 2:
            raise ConfigError("qubit_list needs widths of at least 2")
        if self.instances_per_config < 1 or self.weight_samples < 2:
            raise ConfigError("need at least one instance and two weight samples")
        if set(self.costs) - {"global", "local"} or not self.costs:
            raise ConfigError(f"costs must be drawn from global/local, got {self.costs}")
        if self.method not in ("parameter-shift", "adjoint"):
            raise ConfigError(f"unknown gradient method {self.method!r}")
        if max(self.qubit_list) > sv.MAX_QUBITS:
            raise CapacityError(f"widths above {sv.MAX_QUBITS} qubits are not supported")
        if max(self.qubit_list) > DESK_QUBIT_CAP and not self.allow_large:
            raise CapacityError(
                f"widths above {DESK_QUBIT_CAP} qubits need allow_large=True"
            )

    def to_json(self) -> dict:
        d = asdict(self)
        d["qubit_list"] = list(self.qubit_list)
        d["costs"] = list(self.costs)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "BpSweepConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown bp-sweep config fields: {sorted(extra)}")
        d = dict(d)
        for k in ("qubit_list", "costs"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def bp_template(n_qubits: int, config: BpSweepConfig, axis_seed: int) -> DaqcConfig:
    """Per-qubit depth stays fixed: ``cycles * n`` embedding gates,
    ``2 * cycles * n`` trainable gates, ``ceil(cycles / period)`` ECR rings."""
    return DaqcConfig(n_qubits=n_qubits, pooled_rows=config.cycles, pooled_cols=n_qubits,
                      window_rows=1, window_cols=1, entangle_period=config.entangle_period,
                      axis_seed=axis_seed)


def cost_masks(costs, n_qubits: int) -> list[int]:
    return [(1 << n_qubits) - 1 if c == "global" else 1 for c in costs]


def gradient_samples(spec: Circuit, x: np.ndarray, thetas: np.ndarray, masks, method: str):
    """Gradients of each cost for each weight vector: ``(n_costs, n_samples, n_params)``."""
    out = np.empty((len(masks), thetas.shape[0], spec.n_params))
    for s, theta in enumerate(thetas):
        if method == "parameter-shift":
            out[:, s] = parameter_shift_gradient(spec, x, theta, masks)
        else:
            for c, mask in enumerate(masks):
                out[c, s] = adjoint_gradient(spec, x, theta, mask=mask)[1][0]
    return out


def bp_sweep(config: BpSweepConfig = BpSweepConfig(), progress=None) -> list[dict]:
    """Gradient variances per width and cost.

    Each returned row holds ``n_qubits``, ``cost``, ``n_params``,
    ``variance`` (mean over parameters and instances), ``layer_variance``
    (mean per trainable column) and ``instance_variance``.
    """
    root = np.random.SeedSequence(int(config.seed))
    rows = []
    for n, width_seed in zip(config.qubit_list, root.spawn(len(config.qubit_list))):
        check_memory(2, n)
        per_cost = {c: [] for c in config.costs}
        for inst_seed in width_seed.spawn(config.instances_per_config):
            rng = np.random.Generator(np.random.PCG64(inst_seed))
            axis_seed = int(rng.integers(0, 2**63))
            spec = build_circuit(bp_template(n, config, axis_seed))
            x = rng.uniform(0.0, np.pi, spec.n_features)
            thetas = rng.uniform(0.0, 2 * np.pi, (config.weight_samples, spec.n_params))
            grads = gradient_samples(spec, x, thetas, cost_masks(config.costs, n), config.method)
            for c, cost in enumerate(config.costs):
                per_cost[cost].append(np.var(grads[c], axis=0, ddof=1))
            if progress:
                progress(n)
        layer = spec.param_layer()
        for cost in config.costs:
            var = np.array(per_cost[cost])  # (instances, params)
            per_param = var.mean(axis=0)
            rows.append({
                "n_qubits": n,
                "cost": cost,
                "n_params": spec.n_params,
                "variance": float(per_param.mean()),
                "layer_variance": [float(per_param[layer == k].mean())
                                   for k in range(layer.max() + 1)],
                "instance_variance": [float(v.mean()) for v in var],
            })
            log.info("n=%d cost=%s variance=%.3e", n, cost, rows[-1]["variance"])
    return rows


def decay_fit(widths, variances):
    """Least-squares fit of ``log(variance) = a + b n``; returns ``(b, r2)``."""
    x = np.asarray(widths, dtype=float)
    y = np.log(np.asarray(variances, dtype=float))
    b, a = np.polyfit(x, y, 1)
    resid = y - (a + b * x)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return float(b), float(r2)


# ---------------------------------------------------------------------------
# report files


def write_histogram_csv(path, hist: FidelityHistogram) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count", "haar_mass"])
        for lo, hi, c, h in hist.rows():
            w.writerow([repr(lo), repr(hi), c, repr(h)])


def write_bp_csv(path, rows) -> None:
    """One line per (width, cost, layer); layer ``all`` carries the global mean."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "cost", "layer", "variance"])
        for row in rows:
            w.writerow([row["n_qubits"], row["cost"], "all", repr(row["variance"])])
            for k, v in enumerate(row["layer_variance"]):
                w.writerow([row["n_qubits"], row["cost"], k, repr(v)])


def write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
