import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from daqc import statevector as sv
from daqc.circuit import Circuit, Feature, Fixed, GateOp, Param, simulate, simulate_gatewise
from daqc.errors import CapacityError, NumericError, QubitIndexError, ShapeError

import oracles


def random_state(n, rng):
    z = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return sv.StateVector(n, z / np.linalg.norm(z))


def bell():
    return sv.StateVector(2, np.array([1, 0, 0, 1]) / math.sqrt(2))


class TestZeroState:
    @pytest.mark.parametrize("n,expected", [(1, [1, 0]), (2, [1, 0, 0, 0])])
    def test_small(self, n, expected):
        np.testing.assert_array_equal(sv.new_zero_state(n).amplitudes, expected)

    def test_sixteen_qubits(self):
        s = sv.new_zero_state(16)
        assert s.amplitudes.shape == (65536,)
        assert s.norm() == 1.0

    @pytest.mark.parametrize("n", [0, 25, -3])
    def test_out_of_range(self, n):
        with pytest.raises(CapacityError):
            sv.new_zero_state(n)


class TestRotation:
    def test_rx_zero_is_identity(self):
        s = random_state(3, np.random.default_rng(1))
        before = s.amplitudes.copy()
        sv.apply_rotation(s, "x", 1, 0.0)
        np.testing.assert_allclose(s.amplitudes, before, atol=1e-15)

    def test_rx_pi_flips_with_phase(self):
        s = sv.apply_rotation(sv.new_zero_state(1), "x", 0, math.pi)
        np.testing.assert_allclose(s.amplitudes, [0, -1j], atol=1e-15)

    def test_ry_half_pi(self):
        s = sv.apply_rotation(sv.new_zero_state(1), "y", 0, math.pi / 2)
        np.testing.assert_allclose(s.amplitudes, oracles.rotation("y", math.pi / 2)[:, 0], atol=1e-15)
        np.testing.assert_allclose(s.amplitudes, [0.70710678, 0.70710678], atol=1e-8)

    @pytest.mark.parametrize("angle", [math.nan, math.inf, -math.inf])
    def test_non_finite_angle(self, angle):
        with pytest.raises(NumericError):
            sv.apply_rotation(sv.new_zero_state(2), "z", 0, angle)

    @pytest.mark.parametrize("target", [-1, 2, 7])
    def test_bad_target(self, target):
        with pytest.raises(QubitIndexError):
            sv.apply_rotation(sv.new_zero_state(2), "y", target, 0.3)

    @pytest.mark.parametrize("axis", "xyz")
    def test_matches_matrix_exponential(self, axis):
        for angle in np.linspace(-7, 7, 15):
            np.testing.assert_allclose(sv.rotation_matrix(axis, angle),
                                       oracles.rotation(axis, angle), atol=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(st.sampled_from("xyz"), st.floats(-10, 10), st.floats(-10, 10))
    def test_composition(self, axis, a, b):
        s1 = sv.apply_rotation(sv.apply_rotation(sv.new_zero_state(2), axis, 1, a), axis, 1, b)
        s1 = sv.apply_rotation(s1, "y", 0, 0.4)
        s2 = sv.apply_rotation(sv.apply_rotation(sv.new_zero_state(2), axis, 1, a + b), "y", 0, 0.4)
        np.testing.assert_allclose(s1.amplitudes, s2.amplitudes, atol=1e-12)

    def test_vectorised_matrices(self):
        rng = np.random.default_rng(3)
        codes = rng.integers(0, 3, 20)
        angles = rng.uniform(-5, 5, 20)
        mats = sv.rotation_matrices(codes, angles)
        for c, a, m in zip(codes, angles, mats):
            np.testing.assert_allclose(m, sv.rotation_matrix(int(c), a), atol=1e-15)


class TestEcr:
    def test_matrix_is_unitary(self):
        m = sv.ECR_MATRIX
        np.testing.assert_allclose(m.conj().T @ m, np.eye(4), atol=1e-15)
        np.testing.assert_allclose(m, oracles.ECR, atol=1e-15)

    def test_on_zero_state(self):
        s = sv.apply_ecr(sv.new_zero_state(2), 0, 1)
        np.testing.assert_allclose(s.amplitudes, np.array([0, 1, 0, -1j]) / math.sqrt(2), atol=1e-15)

    @pytest.mark.parametrize("col", range(4))
    def test_basis_columns(self, col):
        amps = np.zeros(4, dtype=complex)
        amps[col] = 1
        s = sv.apply_ecr(sv.StateVector(2, amps), 0, 1)
        np.testing.assert_allclose(s.amplitudes, oracles.ECR[:, col], atol=1e-15)

    def test_round_trip(self):
        s = random_state(5, np.random.default_rng(7))
        before = s.amplitudes.copy()
        sv.apply_ecr(s, 3, 1)
        sv.apply_ecr(s, 3, 1, inverse=True)
        np.testing.assert_allclose(s.amplitudes, before, atol=1e-12)

    @pytest.mark.parametrize("a,b", [(0, 0), (2, 2), (0, 3), (-1, 1)])
    def test_bad_wires(self, a, b):
        with pytest.raises(QubitIndexError):
            sv.apply_ecr(sv.new_zero_state(3), a, b)

    @pytest.mark.parametrize("a,b", oracles.all_pairs(4) + [(3, 0), (2, 1)])
    def test_every_wire_pair(self, a, b):
        s = random_state(4, np.random.default_rng(a * 5 + b))
        expected = oracles.embed_2q(oracles.ECR, a, b, 4) @ s.amplitudes
        np.testing.assert_allclose(sv.apply_ecr(s, a, b).amplitudes, expected, atol=1e-13)


class TestExpectations:
    def test_zero_state(self):
        s = sv.new_zero_state(3)
        assert all(sv.expect_z(s, q) == 1.0 for q in range(3))
        np.testing.assert_array_equal(sv.expect_z_all(s), [1, 1, 1])

    def test_after_flip(self):
        s = sv.apply_rotation(sv.new_zero_state(3), "x", 2, math.pi)
        assert sv.expect_z(s, 2) == pytest.approx(-1.0, abs=1e-15)
        assert sv.expect_z(s, 0) == 1.0

    def test_after_ry_half_pi(self):
        s = sv.apply_rotation(sv.new_zero_state(2), "y", 1, math.pi / 2)
        assert abs(sv.expect_z(s, 1)) < 1e-12

    def test_bad_index(self):
        with pytest.raises(QubitIndexError):
            sv.expect_z(sv.new_zero_state(2), 2)
        with pytest.raises(QubitIndexError):
            sv.expect_z_product(sv.new_zero_state(2), [0, 5])

    def test_products(self):
        assert sv.expect_z_product(sv.new_zero_state(4), range(4)) == 1.0
        assert sv.expect_z_product(random_state(3, np.random.default_rng(0)), []) == pytest.approx(1.0)
        assert sv.expect_z_product(bell(), [0, 1]) == pytest.approx(1.0, abs=1e-15)

    def test_against_dense_observables(self):
        rng = np.random.default_rng(11)
        for n in (1, 3, 5):
            s = random_state(n, rng)
            for q in range(n):
                assert sv.expect_z(s, q) == pytest.approx(
                    oracles.expect(s.amplitudes, oracles.z_string([q], n)), abs=1e-13)
            wires = [q for q in range(n) if rng.random() < 0.6]
            assert sv.expect_z_product(s, wires) == pytest.approx(
                oracles.expect(s.amplitudes, oracles.z_string(wires, n)), abs=1e-13)
            np.testing.assert_allclose(sv.expect_z_all(s), [sv.expect_z(s, q) for q in range(n)],
                                       atol=1e-13)


class TestFidelityAndReducedStates:
    def test_fidelity_examples(self):
        psi = random_state(3, np.random.default_rng(2))
        assert sv.fidelity(psi, psi) == pytest.approx(1.0)
        one = sv.apply_rotation(sv.new_zero_state(1), "x", 0, math.pi)
        assert sv.fidelity(sv.new_zero_state(1), one) == pytest.approx(0.0, abs=1e-30)
        plus = sv.apply_rotation(sv.new_zero_state(1), "y", 0, math.pi / 2)
        assert abs(sv.fidelity(sv.new_zero_state(1), plus) - 0.5) < 1e-12

    def test_fidelity_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sv.fidelity(sv.new_zero_state(2), sv.new_zero_state(3))

    def test_product_state(self):
        rho = sv.reduced_density_1q(sv.new_zero_state(4), 2)
        np.testing.assert_allclose(rho, [[1, 0], [0, 0]])

    @pytest.mark.parametrize("q", [0, 1])
    def test_bell(self, q):
        np.testing.assert_allclose(sv.reduced_density_1q(bell(), q), 0.5 * np.eye(2), atol=1e-15)

    def test_random_states_against_explicit_trace(self):
        rng = np.random.default_rng(5)
        for n in (2, 3, 4):
            s = random_state(n, rng)
            for q in range(n):
                rho = sv.reduced_density_1q(s, q)
                np.testing.assert_allclose(rho, oracles.partial_trace_1q(s.amplitudes, q, n), atol=1e-13)
                np.testing.assert_allclose(rho, rho.conj().T, atol=1e-12)
                assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)
                ev = np.linalg.eigvalsh(rho)
                assert ev.min() > -1e-12 and ev.max() < 1 + 1e-12

    def test_bad_index(self):
        with pytest.raises(QubitIndexError):
            sv.reduced_density_1q(sv.new_zero_state(2), 3)

    def test_amplitude_count_checked(self):
        with pytest.raises(ShapeError):
            sv.StateVector(3, np.zeros(4))
        with pytest.raises(ShapeError):
            sv.StateVector.from_amplitudes(np.ones(6))


# ---------------------------------------------------------------------------
# random gate programs against the dense oracle


def random_ops(n, n_gates, rng, n_features=4, n_params=4):
    ops = []
    for _ in range(n_gates):
        if n > 1 and rng.random() < 0.25:
            a, b = rng.choice(n, 2, replace=False)
            ops.append(GateOp("ECR", int(a), int(b)))
        else:
            kind = f"R{'XYZ'[rng.integers(3)]}"
            r = rng.random()
            src = (Feature(int(rng.integers(n_features))) if r < 0.3 else
                   Param(int(rng.integers(n_params))) if r < 0.8 else
                   Fixed(float(rng.uniform(-4, 4))))
            ops.append(GateOp(kind, int(rng.integers(n)), source=src))
    return ops


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 40), st.integers(0, 2**32 - 1))
def test_programs_match_dense_oracle(n, n_gates, seed):
    rng = np.random.default_rng(seed)
    ops = random_ops(n, n_gates, rng)
    circ = Circuit(n, ops, n_features=4, n_params=4)
    f = rng.uniform(0, np.pi, 4)
    t = rng.uniform(0, 2 * np.pi, 4)
    expected = oracles.circuit_state(ops, n, f, t)
    np.testing.assert_allclose(simulate(circ, f, t)[0], expected, atol=1e-12)
    np.testing.assert_allclose(simulate_gatewise(circ, f, t).amplitudes, expected, atol=1e-12)


def test_long_sequences_keep_norm():
    rng = np.random.default_rng(9)
    s = sv.new_zero_state(6)
    for _ in range(1000):
        if rng.random() < 0.3:
            a, b = rng.choice(6, 2, replace=False)
            sv.apply_ecr(s, int(a), int(b))
        else:
            sv.apply_rotation(s, "xyz"[rng.integers(3)], int(rng.integers(6)), rng.uniform(-10, 10))
    assert abs(s.norm() - 1.0) < 1e-9


def test_batched_kernels_match_single_states():
    rng = np.random.default_rng(4)
    states = np.stack([random_state(4, rng).amplitudes for _ in range(5)])
    mats = sv.rotation_matrices(rng.integers(0, 3, 5), rng.uniform(-3, 3, 5))
    batch = states.copy()
    sv.apply_1q_batch(batch, 2, mats)
    for b in range(5):
        expected = oracles.embed_1q(mats[b], 2, 4) @ states[b]
        np.testing.assert_allclose(batch[b], expected, atol=1e-14)
