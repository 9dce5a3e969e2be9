"""A short tour of the circuit diagnostics on a small register.

Builds DAQC circuits with 0 to 4 ECR rings on 8 qubits and prints, for each,
the KL divergence of the pair-fidelity histogram to the Haar reference and
the mean Meyer-Wallach entanglement.  It then runs a small gradient-variance
sweep for the global and local Z costs.  Runs in under a minute::

    python demos/diagnostics_tour.py
"""
import numpy as np

from daqc.builder import build_circuit
from daqc.diagnostics import (BpSweepConfig, ExpressibilityConfig, bp_sweep, decay_fit,
                              depth_setting, haar_mean_q, state_ensemble_report)

N_QUBITS = 8


def ensembles():
    cfg = ExpressibilityConfig(n_states=400, n_pairs=1000, n_bins=40,
                               fidelity_range="observed", seed=0)
    print(f"{N_QUBITS} qubits, Haar mean Q = {haar_mean_q(N_QUBITS):.4f}")
    print("rings  gates(feature/param/ecr)  D_KL      mean Q")
    for rings in range(5):
        spec = build_circuit(depth_setting(rings, n_qubits=N_QUBITS))
        counts = spec.gate_counts()
        report = state_ensemble_report(spec, cfg)
        print(f"{rings:5d}  {counts['feature']:6d}/{counts['param']:4d}/{counts['ecr']:3d}"
              f"            {report.d_kl:8.4f}  {report.mean_q:.4f}")


def plateau():
    cfg = BpSweepConfig(qubit_list=(4, 6, 8), instances_per_config=3, weight_samples=20,
                        method="adjoint")
    rows = bp_sweep(cfg)
    print("\nn   cost    mean gradient variance")
    for r in rows:
        print(f"{r['n_qubits']:<3d} {r['cost']:<7s} {r['variance']:.3e}")
    for cost in cfg.costs:
        sel = [r for r in rows if r["cost"] == cost]
        slope, r2 = decay_fit([r["n_qubits"] for r in sel], [r["variance"] for r in sel])
        print(f"{cost}: variance ~ exp({slope:.3f} n), R2 {r2:.3f}, "
              f"halving every {np.log(2) / -slope:.2f} qubits")


if __name__ == "__main__":
    ensembles()
    plateau()
