"""LSTM classifier tests: BPTT gradients, dropout statistics, planted rules."""

import numpy as np
import pytest

from conftest import finite_diff_grads, max_rel_grad_error
from somnoscope.ingest import SATISFIED, UNSATISFIED
from somnoscope.lstm import (
    LstmConfig,
    LstmError,
    _batch_loss_and_grads,
    _forward_batch,
    evaluate,
    init_lstm,
    load_lstm,
    lstm_forward,
    save_lstm,
    train_lstm,
)
from somnoscope.sequence import NightSequence
from somnoscope.synth import SynthSpec, generate_posterior_nights


def _zero_model(input_dim=3, hidden=4):
    model = init_lstm(LstmConfig(input_dim=input_dim, hidden=hidden, dropout=0.0))
    for k in model.params:
        model.params[k] = np.zeros_like(model.params[k])
    return model


class TestForward:
    def test_zero_model_outputs_half(self):
        model = _zero_model()
        prob = lstm_forward(model, np.random.default_rng(0).random((7, 3)))
        assert prob == pytest.approx(0.5, abs=1e-12)

    def test_deterministic_eval(self):
        model = init_lstm(LstmConfig(input_dim=3, hidden=5, seed=1))
        seq = np.random.default_rng(2).random((9, 3))
        assert lstm_forward(model, seq) == lstm_forward(model, seq)

    def test_order_sensitivity(self):
        model = init_lstm(LstmConfig(input_dim=2, hidden=8, seed=3))
        seq = np.random.default_rng(4).random((6, 2))
        assert lstm_forward(model, seq) != lstm_forward(model, seq[::-1])

    def test_shape_checks(self):
        model = init_lstm(LstmConfig(input_dim=3, hidden=4))
        with pytest.raises(LstmError):
            lstm_forward(model, np.zeros((5, 2)))
        with pytest.raises(LstmError):
            lstm_forward(model, np.zeros((0, 3)))

    def test_forget_gate_bias(self):
        model = init_lstm(LstmConfig(input_dim=3, hidden=4))
        assert np.all(model.params["b"][4:8] == 1.0)
        assert np.all(model.params["b"][:4] == 0.0)


class TestGradients:
    def test_matches_finite_differences(self):
        cfg = LstmConfig(input_dim=3, hidden=4, dropout=0.0, seed=5)
        model = init_lstm(cfg)
        rng = np.random.default_rng(6)
        X = rng.random((2, 6, 3))
        y = np.array([1.0, 0.0])
        _, analytic = _batch_loss_and_grads(model, X, y)
        numeric = finite_diff_grads(
            lambda: _batch_loss_and_grads(model, X, y)[0], model.params
        )
        assert max_rel_grad_error(analytic, numeric) < 1e-4

    def test_single_step_sequence(self):
        cfg = LstmConfig(input_dim=2, hidden=3, dropout=0.0, seed=7)
        model = init_lstm(cfg)
        X = np.random.default_rng(8).random((1, 1, 2))
        y = np.array([1.0])
        _, analytic = _batch_loss_and_grads(model, X, y)
        numeric = finite_diff_grads(
            lambda: _batch_loss_and_grads(model, X, y)[0], model.params
        )
        assert max_rel_grad_error(analytic, numeric) < 1e-4


class TestDropout:
    def test_inverted_mask_statistics(self):
        cfg = LstmConfig(input_dim=2, hidden=50, dropout=0.2, seed=0)
        model = init_lstm(cfg)
        rng = np.random.default_rng(1)
        X = np.random.default_rng(2).random((1, 3, 2))
        masks = []
        for _ in range(2000):
            cache = []
            _forward_batch(model, X, train_mode=True, rng=rng, cache=cache)
            masks.append(cache[-1])
        masks = np.concatenate(masks).ravel()
        # inverted dropout keeps the expectation at 1
        assert abs(masks.mean() - 1.0) < 0.02
        zero_frac = np.mean(masks == 0.0)
        assert abs(zero_frac - 0.2) < 0.02
        kept = masks[masks > 0]
        np.testing.assert_allclose(kept, 1.0 / 0.8, atol=1e-12)

    def test_train_mode_needs_rng(self):
        model = init_lstm(LstmConfig(input_dim=2, hidden=3, dropout=0.5))
        with pytest.raises(LstmError):
            _forward_batch(model, np.zeros((1, 2, 2)), train_mode=True)

    def test_invalid_dropout(self):
        with pytest.raises(LstmError):
            LstmConfig(input_dim=2, dropout=1.0)


def _planted_nights(n_nights, seed):
    spec = SynthSpec(
        n_nights=n_nights,
        events_per_night=(45, 55),
        K_true=4,
        peak_freqs=(200.0, 800.0, 3000.0, 9000.0),
        rule_threshold=0.3,
        rule_cluster=3,
        high_rate=0.5,
        low_rate=0.1,
        seed=seed,
    )
    return generate_posterior_nights(spec)


class TestTraining:
    def test_planted_rule_accuracy(self):
        from somnoscope.sequence import AugmentConfig, augment

        train_nights = _planted_nights(30, seed=0)
        test_nights = _planted_nights(12, seed=100)
        train_set = augment(train_nights, AugmentConfig(sample_size=40, factor=15, seed=0))
        cfg = LstmConfig(input_dim=4, hidden=50, epochs=10, seed=0)
        model, history = train_lstm(init_lstm(cfg), train_set)
        assert history[-1] < history[0]
        assert evaluate(model, test_nights, sample_size=40) >= 0.95

    def test_zero_lr_leaves_params_unchanged(self):
        nights = _planted_nights(8, seed=1)
        cfg = LstmConfig(input_dim=4, hidden=6, epochs=2, learning_rate=0.0, seed=1)
        model = init_lstm(cfg)
        before = {k: v.copy() for k, v in model.params.items()}
        train_lstm(model, nights)
        for k in before:
            np.testing.assert_array_equal(model.params[k], before[k])

    def test_identical_seeds_identical_params(self):
        nights = _planted_nights(8, seed=2)
        cfg = LstmConfig(input_dim=4, hidden=6, epochs=2, seed=3)
        m1, h1 = train_lstm(init_lstm(cfg), nights)
        m2, h2 = train_lstm(init_lstm(cfg), nights)
        assert h1 == h2
        for k in m1.params:
            np.testing.assert_array_equal(m1.params[k], m2.params[k])

    def test_mixed_lengths_batched_correctly(self):
        rng = np.random.default_rng(4)
        nights = [
            NightSequence(f"n{i}", rng.random((int(rng.integers(3, 9)), 2)),
                          SATISFIED if i % 2 else UNSATISFIED)
            for i in range(12)
        ]
        cfg = LstmConfig(input_dim=2, hidden=4, epochs=2, batch_size=4, seed=5)
        _, history = train_lstm(init_lstm(cfg), nights)
        assert len(history) == 2
        assert all(np.isfinite(h) for h in history)

    def test_grad_clip_smoke(self):
        nights = _planted_nights(8, seed=5)
        cfg = LstmConfig(input_dim=4, hidden=6, epochs=2, seed=6, grad_clip=0.5)
        _, history = train_lstm(init_lstm(cfg), nights)
        assert all(np.isfinite(h) for h in history)

    def test_single_label_rejected(self):
        nights = [
            NightSequence("n0", np.ones((3, 2)), SATISFIED),
            NightSequence("n1", np.ones((4, 2)), SATISFIED),
        ]
        with pytest.raises(LstmError):
            train_lstm(init_lstm(LstmConfig(input_dim=2, hidden=3)), nights)


class TestEvaluate:
    def test_zero_model_predicts_positive(self):
        model = _zero_model(input_dim=2)
        nights = [
            NightSequence("a", np.ones((3, 2)), SATISFIED),
            NightSequence("b", np.ones((3, 2)), UNSATISFIED),
        ]
        assert evaluate(model, nights) == 0.5

    def test_subsample_fixed_per_night(self):
        model = init_lstm(LstmConfig(input_dim=2, hidden=4, seed=0))
        nights = [NightSequence("a", np.random.default_rng(1).random((30, 2)), SATISFIED),
                  NightSequence("b", np.random.default_rng(2).random((30, 2)), UNSATISFIED)]
        a1 = evaluate(model, nights, sample_size=5, eval_seed=3)
        a2 = evaluate(model, nights, sample_size=5, eval_seed=3)
        assert a1 == a2

    def test_empty_test_set(self):
        with pytest.raises(LstmError):
            evaluate(_zero_model(), [])


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        cfg = LstmConfig(input_dim=3, hidden=5, seed=9)
        model = init_lstm(cfg)
        save_lstm(tmp_path / "lstm.bin", model)
        loaded = load_lstm(tmp_path / "lstm.bin")
        assert loaded.config == cfg
        seq = np.random.default_rng(10).random((6, 3))
        assert lstm_forward(loaded, seq) == pytest.approx(lstm_forward(model, seq), abs=1e-5)
