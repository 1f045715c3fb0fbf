import csv
import math

import numpy as np
import pytest
from scipy import stats

from rffcomm.errors import ParameterError
from rffcomm.losnlos import (
    generate_sequence,
    los_probability,
    path_gain,
    random_walk,
    write_sequence_csv,
)


class TestRandomWalk:
    def test_start_and_length(self):
        trace = random_walk((200.0, 120.0), 500, seed=0)
        assert trace.positions.shape == (501, 2)
        np.testing.assert_array_equal(trace.positions[0], [200.0, 120.0])

    @pytest.mark.parametrize("step", [1.0, 0.25, 3.0])
    def test_step_length(self, step):
        trace = random_walk((0.0, 0.0), 1000, step_size=step, seed=1)
        np.testing.assert_allclose(np.linalg.norm(np.diff(trace.positions, axis=0), axis=1), step, rtol=1e-12)

    def test_mean_displacement(self):
        # a 2-D walk of n unit steps ends Rayleigh-distributed with mean sqrt(n pi) / 2
        n = 10_000
        ends = [np.linalg.norm(random_walk((0.0, 0.0), n, seed=s).positions[-1]) for s in range(100)]
        expected = math.sqrt(n) * math.sqrt(math.pi) / 2
        assert abs(np.mean(ends) - expected) < 0.1 * expected

    def test_seeded(self):
        a = random_walk((1.0, 2.0), 50, seed=7).positions
        assert np.array_equal(a, random_walk((1.0, 2.0), 50, seed=7).positions)

    @pytest.mark.parametrize("kwargs", [{"steps": 0}, {"steps": 5, "step_size": 0.0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterError):
            random_walk((0.0, 0.0), **kwargs)


class TestLosProbability:
    def test_values(self):
        assert los_probability(200.0, "C1") == pytest.approx(math.exp(-1))
        assert los_probability(500.0, "D1") == pytest.approx(math.exp(-1))

    def test_d1_more_los_than_c1(self):
        d = np.linspace(1, 2000, 200)
        assert np.all(los_probability(d, "C1") <= los_probability(d, "D1"))

    def test_unknown_scenario(self):
        with pytest.raises(ParameterError):
            los_probability(100.0, "B4")

    def test_nonpositive_distance(self):
        with pytest.raises(ParameterError):
            los_probability(0.0)


class TestPathGain:
    def test_reference_distance(self):
        assert path_gain(10.0, True) == pytest.approx(1.0)
        assert path_gain(10.0, False) == pytest.approx(1.0)

    def test_exponents(self):
        assert path_gain(100.0, True) == pytest.approx(1e-2)
        assert path_gain(100.0, False) == pytest.approx(10 ** -3.5)


class TestSequences:
    def test_shapes_and_labels(self):
        seq = generate_sequence(random_walk((300.0, 250.0), 999, seed=2), n_sc=16, seed=3)
        assert seq.features.shape == (1000, 32)
        assert seq.n_subcarriers == 16
        assert set(np.unique(seq.labels)) <= {0, 1}

    def test_labels_constant_within_coherence_block(self):
        seq = generate_sequence(random_walk((300.0, 250.0), 999, seed=2), n_sc=4, coherence=10, seed=4)
        blocks = seq.labels.reshape(100, 10)
        assert np.all(blocks == blocks[:, :1])

    def test_specular_los_is_deterministic(self):
        trace = random_walk((60.0, 160.0), 200, seed=5)
        a = generate_sequence(trace, n_sc=8, rician_k=math.inf, seed=6)
        b = generate_sequence(trace, n_sc=8, rician_k=math.inf, seed=99)
        both_los = (a.labels == 0) & (b.labels == 0)
        assert both_los.any()
        np.testing.assert_allclose(a.features[both_los], b.features[both_los], rtol=1e-12)

    def test_near_start_has_more_los(self):
        near = far = 0.0
        for s in range(20):
            near += np.mean(generate_sequence(random_walk((60.0, 200.0), 999, seed=s), n_sc=2, seed=s).labels == 0)
            far += np.mean(generate_sequence(random_walk((450.0, 500.0), 999, seed=s), n_sc=2, seed=s).labels == 0)
        assert near > far

    def test_balanced_start_has_both_classes(self):
        seq = generate_sequence(random_walk((200.0, 120.0), 5999, seed=8), n_sc=2, seed=8)
        assert 0 < seq.labels.mean() < 1

    def _envelopes(self, label, rician_k, seed):
        # tiny steps pin the distance, so the path gain is the same at every step
        distance = 10.0 if label == 0 else 1000.0
        trace = random_walk((50.0 + distance, 150.0), 19_999, step_size=1e-9, seed=seed)
        seq = generate_sequence(trace, n_sc=1, rician_k=rician_k, coherence=1, seed=seed)
        gain = path_gain(distance, label == 0)
        h = (seq.features[:, 0] + 1j * seq.features[:, 1])[seq.labels == label]
        return np.abs(h) / math.sqrt(gain), seq

    def test_nlos_envelope_is_rayleigh(self):
        env, _ = self._envelopes(1, 10 ** 0.6, seed=10)
        assert env.size > 5000
        assert stats.kstest(env, stats.rayleigh(scale=math.sqrt(0.5)).cdf).pvalue > 0.05

    def test_los_envelope_is_rician(self):
        k = 10 ** 0.6
        env, _ = self._envelopes(0, k, seed=11)
        assert env.size > 5000
        # unit total power: specular amplitude sqrt(k/(k+1)), diffuse per-dimension std sqrt(1/(2(k+1)))
        scale = math.sqrt(1 / (2 * (k + 1)))
        nu = math.sqrt(k / (k + 1))
        assert stats.kstest(env, stats.rice(nu / scale, scale=scale).cdf).pvalue > 0.05

    def test_power_falls_with_distance(self):
        def mean_power(x):
            seq = generate_sequence(random_walk((x, 150.0), 2999, step_size=1e-6, seed=12), n_sc=8, seed=12)
            return np.mean(seq.features ** 2) * 2
        assert mean_power(70.0) > mean_power(150.0) > mean_power(400.0)

    def test_seeded(self):
        trace = random_walk((300.0, 250.0), 100, seed=13)
        a = generate_sequence(trace, n_sc=4, seed=14)
        b = generate_sequence(trace, n_sc=4, seed=14)
        assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)

    @pytest.mark.parametrize("kwargs", [{"n_sc": 0}, {"coherence": 0}, {"rician_k": 0.0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterError):
            generate_sequence(random_walk((0.0, 1.0), 5, seed=0), **kwargs)


def test_csv_layout(tmp_path):
    seq = generate_sequence(random_walk((300.0, 250.0), 9, seed=0), n_sc=3, seed=0)
    path = tmp_path / "seq.csv"
    write_sequence_csv(seq, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "label", "re_1", "re_2", "re_3", "im_1", "im_2", "im_3"]
    assert len(rows) == 11
    assert float(rows[4][3]) == seq.features[3, 1]
