"""Domain-aware quantum circuit (DAQC) classifiers on a batched statevector
simulator, with expressibility, entanglement and gradient-variance
diagnostics.

Modules: :mod:`statevector` (gate kernels), :mod:`circuit` (gate programs and
gradients), :mod:`builder` (image encoding and the DAQC layout),
:mod:`training` and :mod:`metrics`, :mod:`diagnostics`, :mod:`datasets`
(IDX files) and :mod:`cli`.
"""
import os as _os

# The bundled TBB is too old for numba's parallel backend; pick OpenMP
# before any parallel kernel is compiled.
_os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")
