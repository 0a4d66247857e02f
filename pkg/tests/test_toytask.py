"""Tests for the synthetic teacher/student recognition task."""

import logging
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ncap_lab._errors import ConfigurationError, ShapeError
from ncap_lab._losses import LossSpec
from ncap_lab._numcore import linear_forward, make_rng, prelu, softmax_temp
from ncap_lab._toytask import (
    RecognizerParams,
    TaskConfig,
    TaskData,
    derive_seed,
    evaluate_recognizer,
    gen_dataset,
    gradcheck_recognizer,
    init_recognizer,
    noise_sweep,
    prototypes,
    recognizer_forward,
    run_comparison,
    train_recognizer,
)


def _teacher_logits_near(logits, rng, margin=0.2):
    """Teacher logits at least ``margin`` away from every student logit."""
    offset = rng.uniform(margin, 2 * margin, size=logits.shape)
    sign = np.where(rng.uniform(size=logits.shape) < 0.5, -1.0, 1.0)
    return logits + sign * offset


class TestTaskConfig:
    """Test task config validation."""

    def test_defaults(self):
        config = TaskConfig()
        assert config.alphabet_size == 10
        assert config.noise_sigma_lr > config.noise_sigma_hr

    def test_noise_order(self):
        with pytest.raises(ConfigurationError):
            TaskConfig(noise_sigma_hr=0.5, noise_sigma_lr=0.2)

    def test_equal_noise_allowed(self):
        assert TaskConfig(noise_sigma_hr=0.0, noise_sigma_lr=0.0)

    def test_unknown_mapping_key(self):
        with pytest.raises(ConfigurationError):
            TaskConfig.from_mapping({"alphabet_sise": 5})

    def test_mapping_round_trip(self, small_task):
        assert TaskConfig.from_mapping(small_task.to_mapping()) == small_task

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"alphabet_size": 1},
            {"epochs": 0},
            {"learning_rate": 0.0},
            {"teacher_input": "oracle"},
            {"teacher_smoothing": 1.0},
            {"teacher_smoothing": -0.1},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            TaskConfig(**kwargs)

    def test_teacher_loss(self):
        assert TaskConfig().teacher_loss == LossSpec("ce_ls", epsilon_ls=0.3)
        assert TaskConfig(teacher_smoothing=0.0).teacher_loss == LossSpec("ce")


class TestDataset:
    """Test seeded data generation."""

    def test_zero_noise_is_clean(self, clean_task):
        for sample in gen_dataset(clean_task, "test", "lr"):
            assert_array_equal(sample.features, sample.clean)

    def test_deterministic(self, small_task):
        a = gen_dataset(small_task, "train", "lr")
        b = gen_dataset(small_task, "train", "lr")
        for x, y in zip(a, b, strict=True):
            assert_array_equal(x.features, y.features)
            assert_array_equal(x.labels, y.labels)

    def test_domains_are_paired(self, small_task):
        hr = gen_dataset(small_task, "test", "hr")
        lr = gen_dataset(small_task, "test", "lr")
        assert len(hr) == len(lr) == small_task.test_size
        for a, b in zip(hr, lr, strict=True):
            assert_array_equal(a.labels, b.labels)
            assert_array_equal(a.clean, b.clean)
            assert not np.array_equal(a.features, b.features)

    def test_shapes(self, small_task):
        sample = gen_dataset(small_task, "train", "hr")[0]
        assert sample.features.shape == (4, 8)
        assert sample.labels.shape == (4,)

    def test_nearest_prototype_accuracy(self, small_task):
        """lr noise sits strictly between a clean view and chance."""
        config = replace(small_task, seed=1)
        protos = prototypes(config)
        features, _, labels = TaskData(config).arrays("test", "lr")
        x = features.reshape(-1, config.feature_dim)
        dist = ((x[:, None, :] - protos[None, :, :]) ** 2).sum(axis=2)
        accuracy = np.mean(dist.argmin(axis=1) == labels.ravel())
        assert 1 / config.alphabet_size < accuracy < 1.0

    def test_unknown_split(self, small_task):
        with pytest.raises(ConfigurationError):
            gen_dataset(small_task, "validation", "lr")

    def test_task_data_caches(self, small_task):
        data = TaskData(small_task)
        assert data.arrays("train", "hr") is data.arrays("train", "hr")
        assert len(data.samples("test", "lr")) == small_task.test_size


class TestRecognizer:
    """Test the recognizer forward pass and parameter container."""

    def test_zero_input(self, small_task, rng):
        params = init_recognizer(small_task, rng)
        h, logits = recognizer_forward(np.zeros((3, 8)), params)
        assert_array_equal(h, 0.0)
        assert_array_equal(logits, 0.0)

    def test_zero_output_layer_is_uniform(self, small_task, rng):
        params = init_recognizer(small_task, rng)
        params = replace(params, W_out=np.zeros_like(params.W_out))
        _, logits = recognizer_forward(rng.normal(size=(4, 8)), params)
        assert_allclose(softmax_temp(logits), np.full((4, 5), 0.2))

    def test_matches_composition(self, small_task):
        rng = make_rng(6)
        params = init_recognizer(small_task, rng)
        params = replace(
            params,
            b_in=rng.normal(size=16),
            b_mid=rng.normal(size=8),
            b_out=rng.normal(size=5),
        )
        x = rng.normal(size=(5, 8))
        u1 = prelu(linear_forward(x, params.W_in, params.b_in), 0.25)
        h = prelu(linear_forward(u1, params.W_mid, params.b_mid), 0.25)
        logits = linear_forward(h, params.W_out, params.b_out)
        got_h, got_logits = recognizer_forward(x, params)
        assert_allclose(got_h, h, rtol=1e-14)
        assert_allclose(got_logits, logits, rtol=1e-13)

    def test_width_mismatch(self, small_task, rng):
        with pytest.raises(ShapeError):
            recognizer_forward(
                np.zeros((2, 7)), init_recognizer(small_task, rng)
            )

    def test_vector_round_trip(self, small_task, rng):
        params = init_recognizer(small_task, rng)
        restored = params.from_vector(params.to_vector())
        for name, array in params.named_arrays().items():
            assert_array_equal(restored.named_arrays()[name], array)

    def test_vector_length_checked(self, small_task, rng):
        params = init_recognizer(small_task, rng)
        with pytest.raises(ShapeError):
            params.from_vector(np.zeros(params.to_vector().size + 1))

    def test_layers_must_chain(self):
        with pytest.raises(ShapeError):
            RecognizerParams(
                W_in=np.zeros((4, 3)),
                b_in=np.zeros(3),
                W_mid=np.zeros((2, 2)),
                b_mid=np.zeros(2),
                W_out=np.zeros((2, 5)),
                b_out=np.zeros(5),
            )


class TestGradcheck:
    """Test end-to-end recognizer gradients."""

    @pytest.fixture
    def instance(self, small_task):
        rng = make_rng(30)
        params = init_recognizer(small_task, rng)
        params = replace(params, b_in=rng.normal(scale=0.1, size=16))
        sample = gen_dataset(small_task, "train", "lr")[0]
        return params, sample

    def test_ce(self, instance):
        params, sample = instance
        assert gradcheck_recognizer(params, sample, LossSpec("ce")) < 1e-5

    def test_ce_softened_kl(self, instance):
        params, sample = instance
        logits = recognizer_forward(sample.features, params)[1]
        teacher = _teacher_logits_near(logits, make_rng(31))
        error = gradcheck_recognizer(
            params, sample, LossSpec("ce_softened_kl", tau=3.0), teacher
        )
        assert error < 1e-5

    @pytest.mark.parametrize("name", ["kl_mae", "ce_kl_mae"])
    def test_mae_variants_away_from_kinks(self, instance, name):
        params, sample = instance
        logits = recognizer_forward(sample.features, params)[1]
        teacher = _teacher_logits_near(logits, make_rng(32))
        error = gradcheck_recognizer(params, sample, LossSpec(name), teacher)
        assert error < 1e-4

    def test_step_outside_range_warns(self, instance, caplog):
        params, sample = instance
        with caplog.at_level(logging.WARNING):
            gradcheck_recognizer(params, sample, LossSpec("ce"), step=1e-2)
        assert "outside the recommended range" in caplog.text


class TestTraining:
    """Test recognizer training."""

    def test_none_leaves_init(self, small_task, rng):
        init = init_recognizer(small_task, rng)
        params, log = train_recognizer(
            small_task, "lr", LossSpec("none"), init=init
        )
        assert_array_equal(params.to_vector(), init.to_vector())
        assert len(log.loss) == small_task.epochs

    def test_ce_separates_clean_data(self, clean_task):
        config = replace(clean_task, epochs=60)
        data = TaskData(config)
        params, _ = train_recognizer(config, "lr", LossSpec("ce"), data=data)
        features, _, labels = data.arrays("train", "lr")
        ev = evaluate_recognizer(params, features, labels)
        assert ev.char_accuracy == 1.0
        assert ev.accuracy == 1.0
        assert ev.wer == 0.0

    def test_teacher_required(self, small_task):
        with pytest.raises(ConfigurationError):
            train_recognizer(small_task, "lr", LossSpec("ce_softened_kl"))

    def test_student_matching_teacher_stays_put(self, small_task, rng):
        """Pure distillation from itself is a fixed point."""
        config = replace(small_task, teacher_input="student", epochs=3)
        teacher = init_recognizer(config, rng)
        params, _ = train_recognizer(
            config,
            "lr",
            LossSpec("ce_softened_kl", alpha=1.0),
            teacher=teacher,
            init=teacher,
        )
        assert_allclose(params.to_vector(), teacher.to_vector(), atol=1e-10)

    def test_training_is_deterministic(self, small_task):
        config = replace(small_task, epochs=3)
        a, log_a = train_recognizer(config, "hr", LossSpec("ce"))
        b, log_b = train_recognizer(config, "hr", LossSpec("ce"))
        assert_array_equal(a.to_vector(), b.to_vector())
        assert log_a == log_b

    def test_loss_decreases(self, small_task):
        _, log = train_recognizer(small_task, "hr", LossSpec("ce"))
        assert log.loss[-1] < log.loss[0]


class TestEvaluation:
    """Test evaluation statistics."""

    def test_counts(self, small_task, rng):
        params = init_recognizer(small_task, rng)
        features, _, labels = TaskData(small_task).arrays("test", "lr")
        ev = evaluate_recognizer(params, features, labels, n_bins=10)
        assert ev.word_reliability.sample_count == small_task.test_size
        assert ev.char_reliability.sample_count == small_task.test_size * 4
        assert sum(ev.histogram.counts) == small_task.test_size * 4
        assert 0.0 <= ev.accuracy <= ev.char_accuracy <= 1.0
        assert ev.wer == pytest.approx(1.0 - ev.accuracy)

    def test_min_rule_bounds_product(self, small_task, rng):
        params = init_recognizer(small_task, rng)
        features, _, labels = TaskData(small_task).arrays("test", "lr")
        product = evaluate_recognizer(params, features, labels)
        minimum = evaluate_recognizer(
            params, features, labels, word_rule="min"
        )
        assert minimum.char_reliability == product.char_reliability
        assert minimum.word_reliability != product.word_reliability


class TestComparison:
    """Test the loss-family comparison harness."""

    LOSSES = (LossSpec("none"), LossSpec("ce"), LossSpec("ce_softened_kl"))

    def test_rows_ordered_by_loss_then_seed(self, small_task):
        config = replace(small_task, epochs=3)
        report = run_comparison(config, self.LOSSES, seeds=(0, 1))
        assert [(r.loss, r.seed) for r in report.rows] == [
            (loss.name, seed) for loss in self.LOSSES for seed in (0, 1)
        ]
        assert set(report.reliability) == {"none", "ce", "ce_softened_kl"}

    def test_deterministic(self, small_task):
        config = replace(small_task, epochs=2)
        first = run_comparison(config, self.LOSSES[1:], seeds=(0,))
        second = run_comparison(config, self.LOSSES[1:], seeds=(0,))
        assert first.rows == second.rows

    def test_parallel_matches_serial(self, small_task):
        config = replace(small_task, epochs=2)
        serial = run_comparison(config, self.LOSSES[1:2], seeds=(0, 1))
        parallel = run_comparison(
            config, self.LOSSES[1:2], seeds=(0, 1), jobs=2
        )
        assert serial.rows == parallel.rows

    def test_untrained_student_is_worst(self, small_task):
        report = run_comparison(small_task, self.LOSSES, seeds=(0,))
        char_accuracy = {r.loss: r.char_accuracy for r in report.rows}
        assert char_accuracy["none"] == min(char_accuracy.values())

    def test_no_domain_gap_is_learned_by_every_loss(self, clean_task):
        config = replace(clean_task, epochs=60)
        report = run_comparison(config, self.LOSSES[1:], seeds=(0,))
        assert all(r.char_accuracy == 1.0 for r in report.rows)

    def test_requires_seeds(self, small_task):
        with pytest.raises(ConfigurationError):
            run_comparison(small_task, self.LOSSES, seeds=())

    def test_replicate_seeds_differ(self):
        assert derive_seed(0, 0) != derive_seed(0, 1)
        assert derive_seed(3, 2) == derive_seed(3, 2)


class TestNoiseSweep:
    """Test accuracy across lr noise levels."""

    def test_accuracy_falls_with_noise(self, small_task):
        points = noise_sweep(small_task, [0.0, 0.8, 3.0], seeds=(0, 1))
        accuracies = [p.char_accuracy for p in points]
        assert accuracies[0] >= accuracies[1] >= accuracies[2]
        assert all(p.n == 2 for p in points)

    def test_rejects_teacher_losses(self, small_task):
        with pytest.raises(ConfigurationError):
            noise_sweep(
                small_task, [0.1], seeds=(0,), loss=LossSpec("kl_mae")
            )


@pytest.fixture(scope="module")
def default_rows():
    """ce and ce_softened_kl students at the default task over four seeds."""
    report = run_comparison(
        TaskConfig(),
        (LossSpec("ce"), LossSpec("ce_softened_kl")),
        seeds=(0, 1, 2, 3),
    )
    assert all(row.ok for row in report.rows)
    return report.rows


def _mean(rows, loss, metric):
    return np.mean([getattr(r, metric) for r in rows if r.loss == loss])


class TestDefaultRegime:
    """Test calibration directions of the default task."""

    def test_ce_is_overconfident(self, default_rows):
        confidence = _mean(default_rows, "ce", "mean_confidence")
        assert confidence > _mean(default_rows, "ce", "char_accuracy")

    def test_softened_kl_lowers_confidence(self, default_rows):
        assert _mean(default_rows, "ce", "mean_confidence") > _mean(
            default_rows, "ce_softened_kl", "mean_confidence"
        )

    def test_softened_kl_lowers_word_ece(self, default_rows):
        assert _mean(default_rows, "ce", "ece_word") > _mean(
            default_rows, "ce_softened_kl", "ece_word"
        )

    def test_softened_kl_narrows_confidence(self, default_rows):
        assert _mean(default_rows, "ce", "confidence_std") > _mean(
            default_rows, "ce_softened_kl", "confidence_std"
        )

    def test_word_accuracy_varies(self, default_rows):
        """Some but not all test words are read correctly."""
        for row in default_rows:
            assert 0.02 < row.accuracy < 0.98
