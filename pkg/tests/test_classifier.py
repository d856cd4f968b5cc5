"""Tests for the field classifier: exact prediction path, gradient
correctness against finite differences, training behavior on the sine
task, persistence, and the learning-rate sweep helpers."""

import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.special import expit

from grfdescent.classifier import (
    ClassifierConfig,
    FieldClassifier,
    critical_eta,
    cross_entropy,
    lr_sweep,
    train,
    write_accuracy_csv,
    write_loss_csv,
)
from grfdescent.datasets import Dataset, gen_sine, normalize, shuffle_labels
from grfdescent.fieldsim import SpectralField, build_field


@pytest.fixture(scope="module")
def sine_splits():
    tr, te = gen_sine(1500, 600, seed=7)
    return normalize(tr, te)


@pytest.fixture(scope="module")
def cheap_config():
    return ClassifierConfig(
        n_params=98, n_inputs=2, M=2000, eta=0.01, batch_size=128, epochs=3, seed=7
    )


@pytest.fixture(scope="module")
def fitted(cheap_config, sine_splits):
    return train(cheap_config, *sine_splits)


class TestCrossEntropy:
    def test_values(self):
        assert cross_entropy(0.5, 1) == pytest.approx(math.log(2), rel=1e-15)
        assert cross_entropy(0.5, 0) == pytest.approx(math.log(2), rel=1e-15)
        assert cross_entropy(0.9, 1) == pytest.approx(-math.log(0.9), rel=1e-12)

    def test_clamp_keeps_loss_finite(self):
        assert cross_entropy(0.0, 1) == pytest.approx(-math.log(1e-12))
        assert cross_entropy(1.0, 0) == pytest.approx(-math.log(1e-12))
        assert np.isfinite(cross_entropy(np.array([0.0, 1.0, 0.5]), np.array([1, 0, 1]))).all()

    def test_vectorized(self):
        y = np.array([0.2, 0.7])
        out = cross_entropy(y, np.array([0, 1]))
        assert out.shape == (2,)
        np.testing.assert_allclose(out, [-math.log(0.8), -math.log(0.7)], rtol=1e-12)


class TestConstruction:
    def test_validation(self):
        with pytest.raises(ValueError):
            FieldClassifier(ClassifierConfig(n_params=0, n_inputs=2, M=100))
        with pytest.raises(ValueError):
            FieldClassifier(ClassifierConfig(n_params=2, n_inputs=0, M=100))
        with pytest.raises(ValueError):
            FieldClassifier(ClassifierConfig(n_params=2, n_inputs=2, M=100, init="ones"))

    def test_field_mismatch(self):
        cfg = ClassifierConfig(n_params=3, n_inputs=2, M=100)
        wrong = build_field(4, 100, seed=0)
        with pytest.raises(ValueError, match="field"):
            FieldClassifier(cfg, field=wrong)

    def test_beta_length(self):
        cfg = ClassifierConfig(n_params=3, n_inputs=2, M=100)
        with pytest.raises(ValueError, match="beta"):
            FieldClassifier(cfg, beta=np.zeros(4))

    def test_zero_init_default(self):
        clf = FieldClassifier(ClassifierConfig(n_params=4, n_inputs=2, M=100, seed=3))
        np.testing.assert_array_equal(clf.beta, np.zeros(4))

    def test_normal_init_deterministic(self):
        cfg = ClassifierConfig(n_params=4, n_inputs=2, M=100, seed=3, init="normal")
        a = FieldClassifier(cfg)
        b = FieldClassifier(cfg)
        np.testing.assert_array_equal(a.beta, b.beta)
        assert np.any(a.beta != 0)

    def test_default_M_from_dimension(self):
        clf = FieldClassifier(ClassifierConfig(n_params=8, n_inputs=2))
        assert clf.config.M == 20000
        assert clf.field.M == 20000


class TestPrediction:
    def test_raw_values_match_field(self):
        cfg = ClassifierConfig(n_params=5, n_inputs=3, M=400, seed=2)
        clf = FieldClassifier(cfg)
        rng = np.random.default_rng(0)
        clf.beta = rng.standard_normal(5)
        X = rng.standard_normal((7, 3))
        pts = np.hstack([np.tile(clf.beta, (7, 1)), X])
        expected = [v for v, _ in clf.field.eval_batch(pts)]
        np.testing.assert_allclose(clf.raw_values(X), expected, rtol=1e-12)

    def test_proba_is_sigmoid(self):
        cfg = ClassifierConfig(n_params=4, n_inputs=2, M=300, seed=5)
        clf = FieldClassifier(cfg)
        X = np.random.default_rng(1).standard_normal((5, 2))
        np.testing.assert_allclose(clf.predict_proba(X), expit(clf.raw_values(X)), rtol=1e-15)

    def test_tie_goes_to_one(self):
        # zero spectral weights make the field identically 0, so every
        # probability is exactly 0.5
        Z = np.random.default_rng(0).standard_normal((50, 5))
        field = SpectralField(Z, np.zeros(50), np.zeros(50))
        cfg = ClassifierConfig(n_params=3, n_inputs=2, M=50)
        clf = FieldClassifier(cfg, field=field)
        X = np.random.default_rng(2).standard_normal((6, 2))
        assert (clf.predict_proba(X) == 0.5).all()
        assert (clf.predict(X) == 1).all()

    def test_input_dimension_checked(self):
        clf = FieldClassifier(ClassifierConfig(n_params=3, n_inputs=2, M=100))
        with pytest.raises(ValueError, match="dimension"):
            clf.predict(np.zeros((4, 3)))

    def test_evaluate_empty(self):
        clf = FieldClassifier(ClassifierConfig(n_params=3, n_inputs=2, M=100))
        empty = Dataset(inputs=np.zeros((0, 2)), labels=np.zeros(0, dtype=int))
        with pytest.raises(ValueError):
            clf.evaluate(empty)


class TestBetaGradient:
    def test_against_finite_differences(self):
        cfg = ClassifierConfig(n_params=6, n_inputs=3, M=500, seed=11)
        clf = FieldClassifier(cfg)
        rng = np.random.default_rng(4)
        clf.beta = 0.3 * rng.standard_normal(6)

        def loss(beta, x, y_true):
            value = clf.field.value(np.concatenate([beta, x]))
            return float(cross_entropy(expit(value), y_true))

        h = 1e-6
        for y_true in (0, 1):
            x = rng.standard_normal(3)
            grad = clf.beta_gradient(x, y_true)
            fd = np.empty(6)
            for i in range(6):
                e = np.zeros(6)
                e[i] = h
                fd[i] = (loss(clf.beta + e, x, y_true) - loss(clf.beta - e, x, y_true)) / (2 * h)
            scale = np.abs(fd).max()
            np.testing.assert_allclose(grad, fd, rtol=0, atol=1e-5 * scale)

    def test_wrong_dimension(self):
        clf = FieldClassifier(ClassifierConfig(n_params=3, n_inputs=2, M=100))
        with pytest.raises(ValueError):
            clf.beta_gradient(np.zeros(3), 1)


class TestTraining:
    def test_sine_task_accuracy(self, fitted):
        assert fitted.accuracy_history[-1][1] >= 0.70

    def test_loss_descends(self, fitted):
        losses = np.array([l for _, _, l in fitted.batch_history])
        n_batches = len(losses) // fitted.config.epochs
        assert np.isfinite(losses).all()
        assert losses[-n_batches:].mean() < losses[:n_batches].mean()

    def test_history_shapes(self, fitted, sine_splits):
        tr, _ = sine_splits
        per_epoch = math.ceil(len(tr) / fitted.config.batch_size)
        assert len(fitted.accuracy_history) == fitted.config.epochs
        assert len(fitted.batch_history) == fitted.config.epochs * per_epoch
        assert fitted.batch_history[0][:2] == (0, 0)
        assert fitted.accuracy_history[0][0] == 0

    def test_shuffled_label_control_at_chance(self, cheap_config, sine_splits):
        # labels permuted independently of the inputs carry no signal;
        # mean accuracy over 12 seeded runs sits at chance level
        tr, te = sine_splits
        accs = []
        for s in range(1, 13):
            cfg = replace(cheap_config, seed=s)
            accs.append(train(cfg, shuffle_labels(tr, seed=s), te).accuracy_history[-1][1])
        assert 0.45 <= np.mean(accs) <= 0.55

    def test_deterministic(self, sine_splits):
        tr, te = sine_splits
        cfg = ClassifierConfig(n_params=10, n_inputs=2, M=300, eta=0.02, batch_size=64, epochs=2, seed=5)
        a = train(cfg, tr, te)
        b = train(cfg, tr, te)
        np.testing.assert_array_equal(a.beta, b.beta)
        assert a.batch_history == b.batch_history
        assert a.accuracy_history == b.accuracy_history

    def test_empty_split_rejected(self, sine_splits):
        tr, _ = sine_splits
        clf = FieldClassifier(ClassifierConfig(n_params=3, n_inputs=2, M=100))
        empty = Dataset(inputs=np.zeros((0, 2)), labels=np.zeros(0, dtype=int))
        with pytest.raises(ValueError):
            clf.fit(tr, empty)
        with pytest.raises(ValueError):
            clf.fit(empty, tr)


class TestPersistence:
    def test_state_roundtrip(self, tmp_path, sine_splits):
        tr, te = sine_splits
        cfg = ClassifierConfig(n_params=6, n_inputs=2, M=250, eta=0.03, batch_size=100, epochs=2, seed=4)
        clf = train(cfg, tr, te)
        state = tmp_path / "clf.npz"
        fieldf = tmp_path / "clf_field.grfs"
        clf.save_state(state, fieldf)
        back = FieldClassifier.load_state(state)
        assert back.config == clf.config
        np.testing.assert_array_equal(back.beta, clf.beta)
        assert back.batch_history == clf.batch_history
        assert back.accuracy_history == clf.accuracy_history
        X = te.inputs[:20]
        np.testing.assert_array_equal(back.raw_values(X), clf.raw_values(X))

    def test_explicit_field_path(self, tmp_path, sine_splits):
        tr, te = sine_splits
        cfg = ClassifierConfig(n_params=4, n_inputs=2, M=200, epochs=1, seed=9)
        clf = train(cfg, tr, te)
        clf.save_state(tmp_path / "s.npz", tmp_path / "f.grfs")
        moved = tmp_path / "elsewhere.grfs"
        (tmp_path / "f.grfs").rename(moved)
        back = FieldClassifier.load_state(tmp_path / "s.npz", field_path=moved)
        np.testing.assert_array_equal(back.beta, clf.beta)


class TestSweep:
    def test_lr_sweep_order_and_zero_eta(self, sine_splits):
        tr, te = sine_splits
        cfg = ClassifierConfig(n_params=8, n_inputs=2, M=200, batch_size=256, epochs=1, seed=6)
        res = lr_sweep(cfg, [0.05, 0.0], tr, te)
        assert [eta for eta, _ in res] == [0.05, 0.0]
        untrained = FieldClassifier(replace(cfg, eta=0.0)).evaluate(te)
        assert res[1][1] == untrained

    def test_critical_eta(self):
        assert critical_eta([(0.1, 0.9), (0.5, 0.3), (0.3, 0.8)]) == 0.5
        assert critical_eta([(0.1, 0.9), (0.2, 0.8)]) is None
        # ascending order decides which failing rate is reported
        assert critical_eta([(0.5, 0.3), (0.2, 0.4)]) == 0.2
        assert critical_eta([(0.5, 0.3)], threshold=0.2) is None


class TestCsvWriters:
    def test_loss_csv(self, tmp_path):
        hist = [(0, 0, 0.693), (0, 1, 0.51), (1, 0, 0.4)]
        path = tmp_path / "loss.csv"
        write_loss_csv(path, hist)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "epoch,batch,mean_loss"
        assert lines[1] == "0,0,0.693"
        assert [float(l.split(",")[2]) for l in lines[1:]] == [0.693, 0.51, 0.4]

    def test_accuracy_csv(self, tmp_path):
        path = tmp_path / "acc.csv"
        write_accuracy_csv(path, [(0, 0.5), (1, 0.875)])
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "epoch,test_accuracy"
        assert lines[2] == "1,0.875"
