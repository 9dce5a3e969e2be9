import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from daqc.builder import (CircuitSpec, DaqcConfig, adaptive_avg_pool, build_circuit,
                          encode_images, encode_sample, feature_order, normalize_angles,
                          run_circuit, zigzag_order)
from daqc.errors import ConfigError, ShapeError

import oracles

ZIGZAG_4X4 = [(0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2), (0, 3), (1, 2),
              (2, 1), (3, 0), (3, 1), (2, 2), (1, 3), (2, 3), (3, 2), (3, 3)]


class TestPooling:
    def test_constant_image(self):
        out = adaptive_avg_pool(np.full((28, 28), 7.0), 16, 16)
        np.testing.assert_allclose(out, 7.0)

    def test_exact_blocks(self):
        img = np.arange(16.0).reshape(4, 4)
        expected = [[img[:2, :2].mean(), img[:2, 2:].mean()],
                    [img[2:, :2].mean(), img[2:, 2:].mean()]]
        np.testing.assert_allclose(adaptive_avg_pool(img, 2, 2), expected)

    def test_window_rule(self):
        img = np.random.default_rng(0).uniform(0, 255, (28, 28))
        out = adaptive_avg_pool(img, 16, 16)
        for i in range(16):
            for j in range(16):
                r0, r1 = (i * 28) // 16, math.ceil((i + 1) * 28 / 16)
                c0, c1 = (j * 28) // 16, math.ceil((j + 1) * 28 / 16)
                assert out[i, j] == pytest.approx(img[r0:r1, c0:c1].mean(), rel=1e-12)
        assert out[0, 0] == pytest.approx(img[0:2, 0:2].mean())

    def test_batched(self):
        imgs = np.random.default_rng(1).uniform(size=(3, 10, 12))
        out = adaptive_avg_pool(imgs, 5, 4)
        for k in range(3):
            np.testing.assert_allclose(out[k], adaptive_avg_pool(imgs[k], 5, 4))

    @pytest.mark.parametrize("shape,rows,cols", [((4, 4), 5, 2), ((4, 4), 0, 2), ((4,), 1, 1)])
    def test_degenerate(self, shape, rows, cols):
        with pytest.raises(ShapeError):
            adaptive_avg_pool(np.ones(shape), rows, cols)

    def test_non_finite(self):
        img = np.ones((4, 4))
        img[1, 2] = np.nan
        with pytest.raises(ShapeError):
            adaptive_avg_pool(img, 2, 2)


class TestZigzag:
    def test_small(self):
        assert zigzag_order(1, 1).tolist() == [0]
        assert zigzag_order(2, 2).tolist() == [0, 1, 2, 3]

    def test_four_by_four(self):
        assert zigzag_order(4, 4).tolist() == [r * 4 + c for r, c in ZIGZAG_4X4]

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 9), st.integers(1, 9))
    def test_permutation_and_adjacency(self, p, q):
        order = zigzag_order(p, q)
        assert sorted(order.tolist()) == list(range(p * q))
        cells = [divmod(int(k), q) for k in order]
        for (r0, c0), (r1, c1) in zip(cells, cells[1:]):
            diagonal = r1 - r0 == -(c1 - c0) and abs(r1 - r0) == 1
            boundary = abs(r1 - r0) + abs(c1 - c0) == 1
            assert diagonal or boundary

    def test_brute_force_enumeration(self):
        # sort cells by anti-diagonal, alternating direction per diagonal
        for p, q in [(3, 5), (5, 3), (4, 4), (2, 7)]:
            cells = sorted(((r, c) for r in range(p) for c in range(q)),
                           key=lambda rc: (rc[0] + rc[1], rc[0] if (rc[0] + rc[1]) % 2 else -rc[0]))
            assert zigzag_order(p, q).tolist() == [r * q + c for r, c in cells]


class TestEncoding:
    def test_endpoints(self):
        img = np.random.default_rng(2).integers(1, 255, (16, 16)).astype(float)
        img[0, 0], img[15, 15] = 0, 255
        s = encode_sample(img, DaqcConfig())
        order = feature_order(DaqcConfig())
        lo = int(np.nonzero(order == 0)[0][0])
        hi = int(np.nonzero(order == 255)[0][0])
        assert s.angles[lo] == 0.0
        assert s.angles[hi] == pytest.approx(np.pi)
        assert s.angles.min() >= 0 and s.angles.max() <= np.pi

    def test_constant_image(self):
        np.testing.assert_array_equal(encode_sample(np.full((28, 28), 9.0), DaqcConfig()).angles, 0.0)

    def test_zigzag_composition(self):
        order = feature_order(DaqcConfig())
        assert order.size == 256
        assert order[:3].tolist() == [0, 1, 16]
        # second window starts at pooled column 4 of row 0
        assert order[16] == 4
        # window (1, 0) starts at pooled row 4
        assert order[64] == 4 * 16

    def test_angles_follow_pixels(self):
        pooled = np.random.default_rng(3).uniform(0, 1, (16, 16))
        angles = encode_images(pooled, DaqcConfig())[0]
        flat = pooled.ravel()[feature_order(DaqcConfig())]
        np.testing.assert_allclose(angles, np.pi * (flat - flat.min()) / (flat.max() - flat.min()))

    def test_normalize_rows_independently(self):
        f = np.array([[0.0, 1.0, 2.0], [5.0, 5.0, 5.0], [-1.0, 3.0, 1.0]])
        out = normalize_angles(f)
        np.testing.assert_allclose(out[0], [0, np.pi / 2, np.pi])
        np.testing.assert_array_equal(out[1], 0.0)
        np.testing.assert_allclose(out[2], [0, np.pi, np.pi / 2])

    def test_locality(self):
        # ring-adjacent wires in one cycle read neighbouring pooled pixels
        cfg = DaqcConfig()
        order = feature_order(cfg)
        for t in range(cfg.n_cycles):
            for q in range(cfg.n_qubits - 1):
                a, b = divmod(int(order[t * 16 + q]), 16), divmod(int(order[t * 16 + q + 1]), 16)
                assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1


class TestConfig:
    def test_defaults(self):
        cfg = DaqcConfig()
        assert (cfg.n_features, cfg.n_cycles, cfg.n_params) == (256, 16, 512)
        assert cfg.entangling_cycles == [0, 4, 8, 12]

    @pytest.mark.parametrize("c,total", [(2, 546), (4, 580), (10, 682)])
    def test_trainable_counts(self, c, total):
        assert DaqcConfig().n_trainables(c) == total

    @pytest.mark.parametrize("kwargs", [
        {"pooled_rows": 15}, {"window_cols": 3}, {"n_qubits": 1}, {"n_qubits": 25},
        {"entangle_period": -1}, {"window_rows": 0}, {"axis_seed": -1},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            DaqcConfig(**kwargs)

    def test_json_round_trip(self):
        cfg = DaqcConfig(n_qubits=6, axis_seed=2**63 + 5)
        assert DaqcConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg
        with pytest.raises(ConfigError):
            DaqcConfig.from_json({"n_qubits": 4, "bogus": 1})


class TestCircuit:
    def test_default_counts(self):
        spec = build_circuit(DaqcConfig())
        assert spec.gate_counts() == {"feature": 256, "param": 512, "fixed": 0, "ecr": 64}
        ecr_cycles = []
        cycle = -1
        for op in spec.ops:
            if op.kind != "ECR" and type(op.source).__name__ == "Feature" and op.target == 0:
                cycle += 1
            if op.kind == "ECR" and op.target == 0:
                ecr_cycles.append(cycle)
        assert ecr_cycles == [0, 4, 8, 12]

    def test_every_cycle_entangled(self):
        assert build_circuit(DaqcConfig(entangle_period=1)).gate_counts()["ecr"] == 256

    def test_no_rings(self):
        assert build_circuit(DaqcConfig(n_qubits=4, pooled_rows=4, pooled_cols=4,
                                        entangle_period=0)).gate_counts()["ecr"] == 0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 7), st.integers(1, 4), st.integers(1, 4), st.integers(1, 3),
           st.integers(1, 3), st.integers(1, 5), st.integers(0, 1000))
    def test_count_identities(self, n, u, v, p, q, period, seed):
        cfg = DaqcConfig(n_qubits=n, pooled_rows=u * p, pooled_cols=v * q, window_rows=p,
                         window_cols=q, entangle_period=period, axis_seed=seed)
        spec = build_circuit(cfg)
        T = math.ceil(cfg.n_features / n)
        counts = spec.gate_counts()
        assert counts["feature"] == cfg.n_features
        assert counts["param"] == 2 * n * T == spec.n_params
        assert counts["ecr"] == n * math.ceil(T / period)
        params = sorted(op.source.index for op in spec.ops if type(op.source).__name__ == "Param")
        assert params == list(range(2 * n * T))
        feats = [op.source.index for op in spec.ops if type(op.source).__name__ == "Feature"]
        assert feats == list(range(cfg.n_features))

    def test_cycle_order_and_ring(self):
        spec = build_circuit(DaqcConfig(n_qubits=3, pooled_rows=2, pooled_cols=3,
                                        window_rows=1, window_cols=1, entangle_period=1))
        kinds = [("E" if op.kind == "ECR" else type(op.source).__name__[0]) for op in spec.ops]
        assert "".join(kinds) == ("FFF" + "EEE" + "PPP" * 2) * 2
        ring = [(op.target, op.partner) for op in spec.ops if op.kind == "ECR"][:3]
        assert ring == [(0, 1), (1, 2), (2, 0)]

    def test_partial_final_cycle(self):
        cfg = DaqcConfig(n_qubits=5, pooled_rows=3, pooled_cols=4, window_rows=1, window_cols=1)
        spec = build_circuit(cfg)
        assert cfg.n_cycles == 3
        last = [op for op in spec.ops if type(op.source).__name__ == "Feature"][-2:]
        assert [op.source.index for op in last] == [10, 11]
        assert [op.target for op in last] == [0, 1]

    def test_determinism(self):
        a = build_circuit(DaqcConfig(axis_seed=42))
        b = build_circuit(DaqcConfig(axis_seed=42))
        assert a.dumps() == b.dumps()
        assert a.ops == b.ops
        assert a.dumps() != build_circuit(DaqcConfig(axis_seed=43)).dumps()

    def test_axes_roughly_uniform(self):
        spec = build_circuit(DaqcConfig(axis_seed=1))
        counts = np.bincount(np.concatenate([spec.embed_axes.ravel(), spec.train_axes.ravel()]),
                             minlength=3)
        assert counts.sum() == 768
        assert np.all(np.abs(counts - 256) < 60)

    def test_json_round_trip(self):
        spec = build_circuit(DaqcConfig(n_qubits=4, pooled_rows=4, pooled_cols=8, axis_seed=9))
        again = CircuitSpec.from_json(json.loads(spec.dumps()))
        assert again.ops == spec.ops
        assert again.dumps() == spec.dumps()
        doc = spec.to_json()
        doc["format"] = "other"
        with pytest.raises(ConfigError):
            CircuitSpec.from_json(doc)


class TestRunCircuit:
    def test_identity_without_rings(self):
        cfg = DaqcConfig(n_qubits=4, pooled_rows=4, pooled_cols=4, window_rows=2, window_cols=2,
                         entangle_period=0)
        spec = build_circuit(cfg)
        np.testing.assert_allclose(run_circuit(spec, np.zeros(16), np.zeros(spec.n_params)), 1.0)

    def test_zero_angles_with_rings_match_oracle(self):
        cfg = DaqcConfig(n_qubits=4, pooled_rows=4, pooled_cols=8, window_rows=2, window_cols=2,
                         entangle_period=2)
        spec = build_circuit(cfg)
        out = run_circuit(spec, np.zeros(32), np.zeros(spec.n_params))
        psi = oracles.circuit_state(spec.ops, 4, np.zeros(32), np.zeros(spec.n_params))
        np.testing.assert_allclose(out, [oracles.expect(psi, oracles.z_string([q], 4))
                                         for q in range(4)], atol=1e-12)

    def test_random_inputs_match_oracle(self):
        rng = np.random.default_rng(8)
        cfg = DaqcConfig(n_qubits=4, pooled_rows=4, pooled_cols=6, window_rows=2, window_cols=3,
                         entangle_period=2, axis_seed=5)
        spec = build_circuit(cfg)
        f = rng.uniform(0, np.pi, 24)
        t = rng.uniform(0, 2 * np.pi, spec.n_params)
        out = run_circuit(spec, f, t)
        psi = oracles.circuit_state(spec.ops, 4, f, t)
        np.testing.assert_allclose(out, [oracles.expect(psi, oracles.z_string([q], 4))
                                         for q in range(4)], atol=1e-12)
        assert np.all(np.abs(out) <= 1)

    def test_length_mismatch(self):
        spec = build_circuit(DaqcConfig(n_qubits=4, pooled_rows=4, pooled_cols=4))
        with pytest.raises(ShapeError):
            run_circuit(spec, np.zeros(15), np.zeros(spec.n_params))
        with pytest.raises(ShapeError):
            run_circuit(spec, np.zeros(16), np.zeros(spec.n_params + 1))
