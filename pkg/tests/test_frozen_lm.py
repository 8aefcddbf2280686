"""Tests for the frozen-encoder Q-network parameterization."""

import numpy as np
import pytest

from seqopt import frozen_lm as flm
from seqopt import numkit
from seqopt.errors import ConfigError, InputError
from seqopt.frozen_lm import LmHead, QFunctionModel


def small_model(vocab=40, state_dim=8, hidden=24, encoder_seed=3, adapter_seed=4, lr=1e-3):
    return flm.make_q_model(vocab, state_dim=state_dim, hidden=hidden,
                            encoder_seed=encoder_seed, adapter_seed=adapter_seed,
                            learning_rate=lr)


def perturb_adapter(model, seed, scale=0.2):
    rng = np.random.default_rng(seed)
    model.adapter.w2 += scale * rng.standard_normal(model.adapter.w2.shape)
    model.adapter.b2 += scale * rng.standard_normal(model.adapter.b2.shape)


class TestEncoder:
    def test_empty_prefix_is_initial_state(self):
        enc = flm.make_encoder(10, 4, 6, seed=1)
        np.testing.assert_array_equal(flm.encode_prefix(enc, ()), enc.initial_state)

    def test_deterministic_across_instances(self):
        a = flm.make_encoder(10, 4, 6, seed=9)
        b = flm.make_encoder(10, 4, 6, seed=9)
        assert np.array_equal(flm.encode_prefix(a, (3, 1, 2)), flm.encode_prefix(b, (3, 1, 2)))

    def test_one_step_matches_hand_recurrence(self):
        enc = flm.make_encoder(10, 4, 6, seed=2)
        z = 7
        stacked = np.concatenate([enc.initial_state, enc.embedding[z]])
        by_hand = np.tanh(enc.rec_w @ stacked + enc.rec_b)
        np.testing.assert_allclose(flm.encode_prefix(enc, (z,)), by_hand, atol=0)

    def test_token_out_of_range(self):
        enc = flm.make_encoder(10, 4, 6, seed=2)
        with pytest.raises(InputError):
            flm.encode_prefix(enc, (10,))
        with pytest.raises(InputError):
            flm.encode_prefix(enc, (-1,))

    def test_cache_returns_same_values_as_fresh_encoder(self):
        warm = flm.make_encoder(12, 4, 6, seed=5)
        for prefix in [(1,), (1, 2), (1, 2, 3), (4, 4)]:
            flm.encode_prefix(warm, prefix)
        cold = flm.make_encoder(12, 4, 6, seed=5)
        for prefix in [(1, 2, 3), (4, 4), (1,)]:
            assert np.array_equal(flm.encode_prefix(warm, prefix),
                                  flm.encode_prefix(cold, prefix))


class TestBaseLogits:
    def test_identity_head_basis_vector(self):
        model = flm.make_tabular_model(4, hidden=8, state_dim=6, adapter_seed=1)
        e = np.zeros(6)
        e[2] = 1.0
        logits = flm.base_logits(model, e)
        np.testing.assert_array_equal(logits, np.array([0.0, 0.0, 1.0, 0.0]))

    def test_two_by_two_hand_case(self):
        model = small_model(vocab=2, state_dim=2)
        model.head.matrix = np.array([[1.0, 0.0], [0.0, 2.0]])
        np.testing.assert_array_equal(flm.base_logits(model, np.array([3.0, 4.0])), [3.0, 8.0])

    def test_matches_dot_product_loop(self):
        model = small_model()
        e = np.random.default_rng(11).standard_normal(model.state_dim)
        logits = flm.base_logits(model, e)
        for i in range(model.vocab_size):
            assert abs(logits[i] - sum(model.head.matrix[i, j] * e[j]
                                       for j in range(model.state_dim))) < 1e-12


class TestQValues:
    def test_zero_adapter_output_gives_zero_q(self):
        model = small_model()
        # freshly initialized adapter has a zero output layer
        np.testing.assert_array_equal(flm.q_values(model, (1, 2)), np.zeros(model.vocab_size))

    def test_identity_adapter_matches_base_logits(self):
        model = small_model(state_dim=6, hidden=12)
        dim, hidden = 6, 12
        w1 = np.zeros((hidden, dim)); w1[:dim, :dim] = np.eye(dim)
        w2 = np.zeros((dim, hidden)); w2[:dim, :dim] = np.eye(dim)
        model.adapter = numkit.MlpParams(w1, np.zeros(hidden), w2, np.zeros(dim), "linear")
        prefix = (3, 5)
        e = flm.encode_prefix(model.encoder, prefix)
        np.testing.assert_allclose(flm.q_values(model, prefix),
                                   flm.base_logits(model, e), atol=0)

    def test_matches_stepwise_pipeline(self):
        model = small_model()
        perturb_adapter(model, seed=13)
        prefix = (7, 1, 0)
        e = flm.encode_prefix(model.encoder, prefix)
        adapted, _ = numkit.mlp_forward(model.adapter, e)
        np.testing.assert_array_equal(flm.q_values(model, prefix), model.head.matrix @ adapted)


class TestIgnorableSet:
    def _model_with_logits(self, logits):
        """Tabular-style model whose root base logits equal the given vector."""
        vocab = len(logits)
        model = flm.make_tabular_model(vocab, hidden=8, state_dim=vocab, adapter_seed=0)
        # identity head reads the state directly, so the initial state IS the root logits
        model.encoder.initial_state = np.asarray(logits, dtype=np.float64)
        model.encoder._cache.clear()
        return model

    def test_small_enumeration(self):
        model = self._model_with_logits([3.0, 1.0, 2.0, 0.0])
        ign = flm.ignorable_set(model, (), 2)
        assert sorted(np.flatnonzero(ign.mask)) == [1, 3]

    def test_tie_with_kth_largest_retained(self):
        model = self._model_with_logits([3.0, 2.0, 2.0, 0.0])
        ign = flm.ignorable_set(model, (), 2)
        assert sorted(np.flatnonzero(ign.mask)) == [3]
        assert np.count_nonzero(~ign.mask) >= 2

    def test_k_equals_vocab_ignores_nothing(self):
        model = small_model()
        ign = flm.ignorable_set(model, (2,), model.vocab_size)
        assert not ign.mask.any()

    def test_k_out_of_range(self):
        model = small_model()
        with pytest.raises(ConfigError):
            flm.ignorable_set(model, (), 0)
        with pytest.raises(ConfigError):
            flm.ignorable_set(model, (), model.vocab_size + 1)

    def test_strict_boundary(self):
        model = small_model(vocab=60)
        e = flm.encode_prefix(model.encoder, (4,))
        logits = flm.base_logits(model, e)
        ign = flm.ignorable_set(model, (4,), 13)
        retained = logits[~ign.mask]
        dropped = logits[ign.mask]
        assert retained.min() > dropped.max()

    def test_constant_across_training(self):
        model = small_model()
        before = flm.ignorable_set(model, (1, 2), 5).mask.copy()
        for step in range(20):
            flm.train_adapter_step(model, (1, 2), step % model.vocab_size, 0.37)
        after = flm.ignorable_set(model, (1, 2), 5).mask
        np.testing.assert_array_equal(before, after)


class TestTrainAdapterStep:
    def test_target_equals_current_q_is_fixed_point(self):
        model = small_model()
        perturb_adapter(model, seed=21)
        prefix, action = (3,), 11
        target = float(flm.q_values(model, prefix)[action])
        before = [a.copy() for a in (model.adapter.w1, model.adapter.b1,
                                     model.adapter.w2, model.adapter.b2)]
        loss = flm.train_adapter_step(model, prefix, action, target)
        assert loss == 0.0
        after = (model.adapter.w1, model.adapter.b1, model.adapter.w2, model.adapter.b2)
        assert all(np.array_equal(b, a) for b, a in zip(before, after))

    def test_gradients_match_finite_differences(self):
        model = small_model()
        perturb_adapter(model, seed=22)
        prefix, action, target = (5, 9), 17, -0.4
        _, grads = flm.td_grads(model, prefix, action, target)
        flat = np.concatenate([a.ravel() for a in grads.arrays()])
        arrays = (model.adapter.w1, model.adapter.b1, model.adapter.w2, model.adapter.b2)
        rng = np.random.default_rng(23)
        w_a = model.head.matrix[action]

        def loss_value():
            e = flm.encode_prefix(model.encoder, prefix)
            out, _ = numkit.mlp_forward(model.adapter, e)
            return (float(w_a @ out) - target) ** 2

        worst = 0.0
        for idx in rng.choice(flat.size, size=20, replace=False):
            offset = 0
            for arr in arrays:
                if idx < offset + arr.size:
                    local = int(idx - offset)
                    orig = arr.flat[local]
                    step = 1e-5
                    arr.flat[local] = orig + step
                    up = loss_value()
                    arr.flat[local] = orig - step
                    down = loss_value()
                    arr.flat[local] = orig
                    numeric = (up - down) / (2 * step)
                    scale = max(abs(numeric), abs(flat[idx]), 1e-8)
                    worst = max(worst, abs(numeric - flat[idx]) / scale)
                    break
                offset += arr.size
        assert worst < 1e-5

    def test_overfits_single_sample(self):
        model = small_model(lr=0.02)
        perturb_adapter(model, seed=24)
        prefix, action, target = (2, 2), 31, 1.7
        initial = (float(flm.q_values(model, prefix)[action]) - target) ** 2
        loss = initial
        for _ in range(200):
            loss = flm.train_adapter_step(model, prefix, action, target)
        assert loss < 1e-3 * initial

    def test_nonfinite_target_rejected(self):
        model = small_model()
        from seqopt.errors import NumericError
        with pytest.raises(NumericError):
            flm.train_adapter_step(model, (0,), 1, float("nan"))


class TestFrozenness:
    def test_frozen_bytes_unchanged_by_training(self):
        model = small_model()
        before = flm.frozen_bytes(model)
        rng = np.random.default_rng(31)
        for _ in range(50):
            flm.train_adapter_step(model, (int(rng.integers(0, 40)),),
                                   int(rng.integers(0, 40)), float(rng.standard_normal()))
        assert flm.frozen_bytes(model) == before


class TestBatchEquivalence:
    def test_accumulated_grads_match_batched(self):
        model = small_model()
        perturb_adapter(model, seed=41)
        rng = np.random.default_rng(42)
        cases = [((int(rng.integers(0, 40)), int(rng.integers(0, 40))),
                  int(rng.integers(0, 40)), float(rng.standard_normal()))
                 for _ in range(12)]
        # sequential: average the per-case grads and losses
        total = numkit.grads_zeros(model.adapter)
        losses = []
        for prefix, action, target in cases:
            loss, grads = flm.td_grads(model, prefix, action, target)
            total.add_(grads)
            losses.append(loss)
        mean_seq = total.scaled(1.0 / len(cases))
        # batched: matrix path over stacked encodings
        e_rows = np.stack([flm.encode_prefix(model.encoder, p) for p, _, _ in cases])
        out, cache = numkit.mlp_forward_batch(model.adapter, e_rows)
        w_rows = model.head.matrix[[a for _, a, _ in cases]]
        residuals = np.sum(out * w_rows, axis=1) - np.array([t for _, _, t in cases])
        grad_rows = (2.0 / len(cases)) * residuals[:, None] * w_rows
        batched = numkit.mlp_backward_batch(model.adapter, cache, grad_rows)
        for a, b in zip(mean_seq.arrays(), batched.arrays()):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
        assert abs(np.mean(residuals ** 2) - np.mean(losses)) < 1e-12


class TestOverdeterminedWitness:
    def test_least_squares_floor_not_beaten(self):
        # |V| >> dim(E): the head system has no exact solution, and training
        # (which can only move within the head's column space) cannot beat the
        # direct solve's residual floor.
        vocab, dim = 300, 8
        model = flm.make_q_model(vocab, state_dim=dim, hidden=32,
                                 encoder_seed=7, adapter_seed=8, learning_rate=5e-3)
        rng = np.random.default_rng(9)
        target = rng.standard_normal(vocab)
        w = model.head.matrix
        _, residual_ss, rank, _ = np.linalg.lstsq(w, target, rcond=None)
        floor = float(residual_ss[0]) / vocab
        assert rank == dim
        assert floor > 0.0
        e = flm.encode_prefix(model.encoder, (3, 1))
        for _ in range(400):
            out, cache = numkit.mlp_forward(model.adapter, e)
            residual = w @ out - target
            loss = float(residual @ residual) / vocab
            assert loss >= floor - 1e-6
            grads = numkit.mlp_backward(model.adapter, cache, (2.0 / vocab) * (w.T @ residual))
            numkit.adam_step(model.adapter_optimizer, model.adapter, grads)
        assert loss < 10 * floor  # training actually approached the floor


class TestCheckpoint:
    def test_roundtrip_reproduces_q_bitwise(self, tmp_path):
        model = small_model()
        perturb_adapter(model, seed=51)
        for step in range(10):
            flm.train_adapter_step(model, (step % 5,), step % 40, 0.1 * step)
        path = tmp_path / "model.npz"
        flm.save_model(model, path)
        loaded = flm.load_model(path)
        for prefix in [(), (1,), (4, 2, 7)]:
            assert np.array_equal(flm.q_values(model, prefix), flm.q_values(loaded, prefix))
        assert loaded.adapter_optimizer.step_count == model.adapter_optimizer.step_count
        assert loaded.encoder.seed == model.encoder.seed

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.npz"
        np.savez(path, meta=np.frombuffer(b'{"kind":"other"}', dtype=np.uint8))
        with pytest.raises(ConfigError):
            flm.load_model(path)


class TestTabularMode:
    def test_head_is_identity_padded(self):
        model = flm.make_tabular_model(5, state_dim=12)
        np.testing.assert_array_equal(model.head.matrix, np.eye(5, 12))

    def test_state_dim_below_vocab_rejected(self):
        with pytest.raises(ConfigError):
            flm.make_identity_head(6, 4)

    def test_optimistic_init_sets_initial_q(self):
        model = flm.make_tabular_model(5, optimistic_init=0.3, adapter_seed=2)
        np.testing.assert_allclose(flm.q_values(model, (1, 2)), np.full(5, 0.3), atol=0)

    def test_any_target_vector_is_reachable(self):
        # identity head: regressing the full vector can hit it exactly
        model = flm.make_tabular_model(4, hidden=32, learning_rate=0.02, adapter_seed=6)
        target = np.array([0.3, -0.2, 0.9, 0.05])
        e = flm.encode_prefix(model.encoder, (2,))
        w = model.head.matrix
        for _ in range(400):
            out, cache = numkit.mlp_forward(model.adapter, e)
            residual = w @ out - target
            grads = numkit.mlp_backward(model.adapter, cache, 2.0 * (w.T @ residual))
            numkit.adam_step(model.adapter_optimizer, model.adapter, grads)
        np.testing.assert_allclose(flm.q_values(model, (2,)), target, atol=1e-3)


class TestVocabSpec:
    def test_validation(self):
        with pytest.raises(ConfigError):
            flm.VocabSpec(1)
        with pytest.raises(ConfigError):
            flm.VocabSpec(3, labels=("a",))
        spec = flm.VocabSpec(3, labels=("a", "b", "c"))
        assert spec.size == 3
