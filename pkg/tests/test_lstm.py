import math

import numpy as np
import pytest

from rffcomm import lstm
from rffcomm.errors import (
    DataError,
    DegenerateLabelsError,
    NumericError,
    ParameterError,
    TrainingDivergenceError,
)
from rffcomm.features import sample_feature_map
from rffcomm.lstm import (
    LstmParameters,
    SequenceBatch,
    evaluate,
    evaluate_probabilities,
    init_parameters,
    lstm_forward,
    lstm_gradients,
    predict,
    train,
)


def zero_params(n_in, n_h):
    p = init_parameters(n_in, n_h, seed=0)
    return p.with_tensors({k: np.zeros_like(v) for k, v in p.tensors().items()})


def random_batch(rng, n_in, lengths):
    return SequenceBatch([rng.normal(size=(t, n_in)) for t in lengths],
                         [rng.integers(0, 2, t) for t in lengths])


def finite_difference_check(params, batch, step=1e-5):
    grads, _ = lstm_gradients(params, batch)
    worst = 0.0
    for name, value in params.tensors().items():
        g = grads.tensors()[name].reshape(-1)
        flat = value.reshape(-1)
        for k in range(flat.size):
            up, down = flat.copy(), flat.copy()
            up[k] += step
            down[k] -= step
            lp = lstm_gradients(params.with_tensors({name: up.reshape(value.shape)}), batch)[1]
            lm = lstm_gradients(params.with_tensors({name: down.reshape(value.shape)}), batch)[1]
            fd = (lp - lm) / (2 * step)
            rel = abs(fd - g[k]) / max(abs(fd), abs(g[k]), 1e-6)
            worst = max(worst, rel)
    return worst


class TestForward:
    def test_zero_parameters(self):
        states, probs = lstm_forward(zero_params(3, 4), np.random.default_rng(0).normal(size=(6, 3)))
        np.testing.assert_array_equal(probs, 0.5)
        for s in states:
            np.testing.assert_array_equal(s.cell, 0.0)
            np.testing.assert_array_equal(s.hidden, 0.0)

    def test_table_dimensions(self):
        p = init_parameters(200, 50, seed=1)
        states, probs = lstm_forward(p, np.zeros((3, 200)))
        assert states[0].hidden.shape == (50,) and states[0].cell.shape == (50,)
        assert probs.shape == (3,)

    def test_single_step_closed_form(self):
        p = zero_params(1, 1).with_tensors({
            "wi": np.array([[0.5]]), "wf": np.array([[-0.3]]), "wo": np.array([[0.8]]), "wc": np.array([[1.2]]),
            "bi": np.array([0.1]), "bf": np.array([1.0]), "bo": np.array([-0.2]), "bc": np.array([0.05]),
            "w_out": np.array([2.0]), "c_out": -0.4,
        })
        x = 0.7
        sig = lambda z: 1 / (1 + math.exp(-z))
        i, o = sig(0.5 * x + 0.1), sig(0.8 * x - 0.2)
        c = i * math.tanh(1.2 * x + 0.05)
        h = o * math.tanh(c)
        states, probs = lstm_forward(p, [[x]])
        assert states[0].cell[0] == pytest.approx(c, rel=1e-14)
        assert states[0].hidden[0] == pytest.approx(h, rel=1e-14)
        assert probs[0] == pytest.approx(sig(2.0 * h - 0.4), rel=1e-14)

    def test_gate_and_hidden_ranges(self):
        p = init_parameters(5, 6, seed=3)
        states, probs = lstm_forward(p, np.random.default_rng(3).normal(scale=20, size=(40, 5)))
        assert all(np.all(np.abs(s.hidden) < 1) for s in states)
        assert np.all((probs > 0) & (probs < 1))

    def test_dimension_mismatch(self):
        with pytest.raises(ParameterError):
            lstm_forward(init_parameters(3, 2, seed=0), np.zeros((4, 5)))

    def test_non_finite_input(self):
        x = np.zeros((4, 3))
        x[2, 1] = np.nan
        with pytest.raises(DataError):
            lstm_forward(init_parameters(3, 2, seed=0), x)

    def test_long_test_sequence(self):
        p = init_parameters(4, 3, seed=0)
        _, probs = lstm_forward(p, np.random.default_rng(0).normal(size=(6000, 4)))
        assert probs.shape == (6000,)

    def test_predict_matches_forward(self):
        rng = np.random.default_rng(5)
        p = init_parameters(3, 4, seed=5)
        seqs = [rng.normal(size=(t, 3)) for t in (4, 7, 4)]
        for seq, probs in zip(seqs, predict(p, seqs)):
            np.testing.assert_allclose(probs, lstm_forward(p, seq)[1], rtol=1e-13)


class TestGradients:
    def test_loss_at_zero_parameters(self):
        batch = SequenceBatch([np.ones((4, 2))], [np.array([0, 1, 0, 1])])
        _, loss = lstm_gradients(zero_params(2, 3), batch)
        assert abs(loss - math.log(2)) < 1e-12

    def test_finite_differences(self):
        rng = np.random.default_rng(21)
        params = init_parameters(6, 4, seed=21)
        assert finite_difference_check(params, random_batch(rng, 6, (5, 5, 5))) < 1e-4

    def test_finite_differences_mixed_lengths(self):
        rng = np.random.default_rng(22)
        assert finite_difference_check(init_parameters(3, 3, seed=22), random_batch(rng, 3, (2, 6, 4))) < 1e-4

    def test_finite_differences_with_extra_stage(self):
        rng = np.random.default_rng(23)
        params = init_parameters(3, 3, seed=23, fc_map=sample_feature_map(2, 5, 1.0, seed=23))
        assert finite_difference_check(params, random_batch(rng, 3, (4, 4))) < 1e-4

    def test_duplicating_batch_keeps_gradients(self):
        rng = np.random.default_rng(2)
        p = init_parameters(3, 4, seed=2)
        b = random_batch(rng, 3, (5, 3))
        doubled = SequenceBatch(b.features * 2, b.labels * 2)
        g1, l1 = lstm_gradients(p, b)
        g2, l2 = lstm_gradients(p, doubled)
        assert l1 == pytest.approx(l2, rel=1e-12)
        for name, v in g1.tensors().items():
            np.testing.assert_allclose(g2.tensors()[name], v, rtol=1e-9, atol=1e-15)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        p = init_parameters(3, 4, seed=4)
        b = random_batch(rng, 3, (5, 5, 2, 5))
        order = [2, 0, 3, 1]
        shuffled = SequenceBatch([b.features[k] for k in order], [b.labels[k] for k in order])
        g1, l1 = lstm_gradients(p, b)
        g2, l2 = lstm_gradients(p, shuffled)
        assert l1 == pytest.approx(l2, rel=1e-12)
        for name, v in g1.tensors().items():
            np.testing.assert_allclose(g2.tensors()[name], v, rtol=1e-9, atol=1e-15)

    def test_non_finite_intermediate_names_sequence(self, monkeypatch):
        rng = np.random.default_rng(6)
        b = SequenceBatch([rng.normal(size=(3, 2)), rng.normal(size=(5, 2)), rng.normal(size=(5, 2))],
                          [np.zeros(3), np.zeros(5), np.ones(5)])
        real = lstm._forward_batch

        def poisoned(params, X):
            out = list(real(params, X))
            if X.shape[1] == 5:
                out[4] = out[4].copy()
                out[4][1, 2, 0] = np.nan  # second row of the length-5 group is sequence 2
            return tuple(out)

        monkeypatch.setattr(lstm, "_forward_batch", poisoned)
        with pytest.raises(NumericError) as info:
            lstm_gradients(init_parameters(2, 2, seed=0), b)
        assert info.value.index == 2

    def test_misaligned_batch(self):
        with pytest.raises(ParameterError):
            SequenceBatch([np.zeros((3, 2))], [np.zeros(4)])


class TestTraining:
    def toy_stream(self, seed, length=200):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(length, 3))
        return x, (x[:, 0] > 0).astype(int)

    def test_separable_stream(self):
        x, y = self.toy_stream(0)
        batch = SequenceBatch.from_stream(x, y, 20)
        history = []
        p = train(init_parameters(3, 8, seed=0), batch, learning_rate=0.5, epochs=200, seed=0, history=history)
        assert history[-1] < history[0]
        assert evaluate(p, batch)["f1"] >= 0.95

    def test_zero_learning_rate_is_identity(self):
        x, y = self.toy_stream(1, 40)
        p0 = init_parameters(3, 4, seed=1)
        p1 = train(p0, SequenceBatch.from_stream(x, y, 10), learning_rate=0.0, epochs=5)
        for name, v in p0.tensors().items():
            assert np.array_equal(p1.tensors()[name], v)

    def test_repeatable(self):
        x, y = self.toy_stream(2, 60)
        batch = SequenceBatch.from_stream(x, y, 10)
        runs = [train(init_parameters(3, 4, seed=2), batch, epochs=10, seed=9, batch_size=2) for _ in range(2)]
        for name, v in runs[0].tensors().items():
            assert np.array_equal(runs[1].tensors()[name], v)

    def test_divergence_detected(self):
        x, y = self.toy_stream(3, 20)
        with pytest.raises(TrainingDivergenceError):
            train(init_parameters(3, 4, seed=0), SequenceBatch([10 * x], [y]), learning_rate=1e9,
                  gradient_clip=1e12, epochs=50)

    @pytest.mark.parametrize("kwargs", [{"epochs": 0}, {"learning_rate": -1.0}, {"gradient_clip": 0.0}])
    def test_bad_hyperparameters(self, kwargs):
        x, y = self.toy_stream(4, 10)
        with pytest.raises(ParameterError):
            train(init_parameters(3, 2, seed=0), SequenceBatch([x], [y]), **kwargs)


class TestEvaluation:
    def test_perfect_predictor(self):
        y = np.array([0, 1, 1, 0, 1])
        res = evaluate_probabilities([y.astype(float)], [y])
        assert res["f1"] == 1.0 and res["accuracy"] == 1.0
        assert any(fpr == 0.0 and tpr == 1.0 for _, fpr, tpr in res["roc"])

    def test_constant_predictor_is_diagonal(self):
        y = np.tile([0, 1], 50)
        roc = evaluate_probabilities([np.full(100, 0.5)], [y])["roc"]
        pts = sorted({(f, t) for _, f, t in roc})
        area = sum((f2 - f1) * (t1 + t2) / 2 for (f1, t1), (f2, t2) in zip(pts, pts[1:]))
        assert area == pytest.approx(0.5)

    def test_roc_shape(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 2, 300)
        roc = evaluate_probabilities([rng.random(300)], [y])["roc"]
        assert len(roc) >= 101
        thresholds = [t for t, _, _ in roc]
        assert thresholds[0] == 0.0 and thresholds[-1] == 1.0
        by_fpr = sorted(roc, key=lambda r: (r[1], r[2]))
        assert all(b[2] >= a[2] for a, b in zip(by_fpr, by_fpr[1:]))

    def test_single_class_still_gives_roc(self):
        with pytest.raises(DegenerateLabelsError) as info:
            evaluate_probabilities([np.linspace(0, 1, 10)], [np.zeros(10)])
        assert len(info.value.roc) == 101

    def test_f1_counts(self):
        p = np.array([0.9, 0.8, 0.2, 0.6, 0.1])
        y = np.array([1, 0, 1, 1, 0])
        # tp = 2, fp = 1, fn = 1
        assert evaluate_probabilities([p], [y])["f1"] == pytest.approx(2 * 2 / (2 * 2 + 1 + 1))


class TestSerialization:
    def test_round_trip(self):
        p = init_parameters(7, 5, seed=3)
        back = LstmParameters.from_bytes(p.to_bytes())
        for name, v in p.tensors().items():
            assert np.array_equal(back.tensors()[name], v)

    def test_round_trip_with_extra_stage(self):
        p = init_parameters(4, 3, seed=3, fc_map=sample_feature_map(6, 9, 0.5, seed=1))
        back = LstmParameters.from_bytes(p.to_bytes())
        assert back.fc_map.n_features == 9
        np.testing.assert_array_equal(back.fc_map.omegas, p.fc_map.omegas)
        for name, v in p.tensors().items():
            assert np.array_equal(back.tensors()[name], v)

    def test_layout(self):
        p = init_parameters(2, 3, seed=0)
        blob = p.to_bytes()
        n_values = 4 * 3 * 2 + 4 * 3 * 3 + 4 * 3 + 3 + 1
        assert len(blob) == 32 + 8 * n_values
        first = np.frombuffer(blob, dtype="<f8", count=6, offset=32).reshape(3, 2)
        np.testing.assert_array_equal(first, p.wi)

    def test_truncated(self):
        with pytest.raises(ParameterError):
            LstmParameters.from_bytes(init_parameters(2, 3, seed=0).to_bytes()[:-8])

    def test_csv_writers(self, tmp_path):
        lstm.write_roc_csv([(0.0, 1.0, 1.0), (1.0, 0.0, 0.0)], tmp_path / "roc.csv")
        lstm.write_loss_csv([0.7, 0.5], tmp_path / "loss.csv")
        assert (tmp_path / "roc.csv").read_text().splitlines()[0] == "threshold,fpr,tpr"
        assert (tmp_path / "loss.csv").read_text().splitlines() == ["epoch,loss", "1,0.7", "2,0.5"]
