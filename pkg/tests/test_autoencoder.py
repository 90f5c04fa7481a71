import numpy as np
import pytest

from kinrom.autoencoder import (
    AeArchitecture,
    AutoencoderModel,
    NormalizationConstants,
    TrainConfig,
    _gather,
    _scatter,
    conv_output_length,
    latent_coordinates,
    load_model,
    loss_and_gradients,
    normalize_slice,
    save_model,
    train,
)
from kinrom.errors import InvalidArgument, NumericalFailure


def tiny_model(seed=0):
    return AutoencoderModel.initialize(2, 16, AeArchitecture((3, 3, 3, 2), 2), seed=seed)


def zero_model():
    base = tiny_model()
    return AutoencoderModel(
        base.n_channels, base.n_length, base.arch,
        tuple(np.zeros_like(p) for p in base.params),
    )


class TestShapes:
    def test_feature_length_halves_per_layer(self):
        length = 176
        for expected in (88, 44, 22, 11):
            length = conv_output_length(length)
            assert length == expected
        length = 256
        for expected in (128, 64, 32, 16):
            length = conv_output_length(length)
            assert length == expected

    def test_roundtrip_shape_preserved(self):
        model = tiny_model()
        rng = np.random.default_rng(0)
        x = rng.standard_normal((5, 2, 16))
        y = model.decode(model.encode(x))
        assert y.shape == x.shape
        single = rng.standard_normal((2, 16))
        assert model.decode(model.encode(single)).shape == single.shape

    def test_zero_weights_give_zero_outputs(self):
        model = zero_model()
        x = np.random.default_rng(1).standard_normal((3, 2, 16))
        np.testing.assert_array_equal(model.encode(x), 0.0)
        np.testing.assert_array_equal(model.reconstruct(x), 0.0)

    def test_length_must_be_divisible_by_16(self):
        with pytest.raises(InvalidArgument):
            AutoencoderModel.initialize(2, 18, AeArchitecture((3, 3, 3, 2), 2))

    def test_batch_and_single_encoding_agree_bitwise(self):
        model = tiny_model(seed=3)
        rng = np.random.default_rng(2)
        x = rng.standard_normal((7, 2, 16))
        batch = model.encode(x)
        for i in range(7):
            np.testing.assert_array_equal(batch[i], model.encode(x[i]))


class TestAdjointness:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_gather_scatter_are_adjoint(self, seed):
        rng = np.random.default_rng(seed)
        b, c, o, length = 3, 4, 5, 32
        w = rng.standard_normal((o, c, 10))
        x = rng.standard_normal((b, c, length))
        y = rng.standard_normal((b, o, length // 2))
        lhs = np.sum(_gather(x, w, length // 2) * y)
        rhs = np.sum(x * _scatter(y, w, length))
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs), 1.0)


class TestGradients:
    def test_analytic_matches_central_differences(self):
        # Weights drawn wide enough that gradients flow through every layer;
        # the step keeps central-difference truncation and roundoff balanced.
        base = tiny_model(seed=1)
        rng = np.random.default_rng(5)
        model = AutoencoderModel(
            base.n_channels, base.n_length, base.arch,
            tuple(rng.uniform(-0.4, 0.4, size=p.shape) for p in base.params),
        )
        batch = 0.5 * rng.standard_normal((2, 2, 16))
        _, grads = loss_and_gradients(model, batch)

        worst = 0.0
        params = [p.copy() for p in model.params]
        for pi, p in enumerate(params):
            fd = np.zeros_like(p)
            flat = p.reshape(-1)
            fd_flat = fd.reshape(-1)
            for idx in range(flat.size):
                h = 1e-5 * max(1.0, abs(flat[idx]))
                for sign in (+1.0, -1.0):
                    trial = [q.copy() for q in params]
                    trial[pi].reshape(-1)[idx] = flat[idx] + sign * h
                    perturbed = AutoencoderModel(
                        model.n_channels, model.n_length, model.arch, tuple(trial)
                    )
                    loss, _ = loss_and_gradients(perturbed, batch)
                    fd_flat[idx] += sign * loss / (2.0 * h)
            denom = max(np.linalg.norm(grads[pi]), 1e-12)
            worst = max(worst, np.linalg.norm(fd - grads[pi]) / denom)
        assert worst <= 1e-6

    def test_loss_is_mean_squared_reconstruction(self):
        model = zero_model()
        x = np.ones((4, 2, 16))
        loss, _ = loss_and_gradients(model, x)
        # Zero weights reconstruct to zero, so the loss is ||x||^2 per sample.
        assert abs(loss - 2 * 16) < 1e-14


class TestTraining:
    def test_single_sample_memorization(self):
        model = tiny_model(seed=2)
        rng = np.random.default_rng(3)
        x = np.tanh(rng.standard_normal((1, 2, 16)))
        cfg = TrainConfig(epochs=800, batch_size=1, learning_rate=3e-3, seed=0)
        trained, history = train(model, x, cfg)
        recon = trained.reconstruct(x)
        rel = np.linalg.norm(recon - x) / np.linalg.norm(x)
        assert rel <= 1e-2
        assert history[-1] <= history[0]

    def test_descent_sanity(self):
        model = tiny_model(seed=4)
        rng = np.random.default_rng(6)
        x = np.tanh(rng.standard_normal((12, 2, 16)))
        _, history = train(model, x, TrainConfig(epochs=50, batch_size=4, seed=1))
        assert history[-1] <= history[0]

    def test_non_finite_loss_aborts_with_epoch(self):
        model = tiny_model(seed=5)
        x = np.random.default_rng(7).standard_normal((4, 2, 16)) * 10
        cfg = TrainConfig(epochs=50, batch_size=2, learning_rate=1e200, seed=0)
        with np.errstate(all="ignore"), pytest.raises(NumericalFailure) as exc_info:
            train(model, x, cfg)
        assert exc_info.value.iteration is not None

    def test_deterministic_history_under_fixed_seed(self):
        x = np.tanh(np.random.default_rng(8).standard_normal((10, 2, 16)))
        cfg = TrainConfig(epochs=20, batch_size=4, seed=9)
        _, h1 = train(tiny_model(seed=6), x, cfg)
        _, h2 = train(tiny_model(seed=6), x, cfg)
        assert h1 == h2

    def test_step_schedule_values(self):
        cfg = TrainConfig(
            epochs=2000, schedule="step", learning_rate=2e-4, step_size=100,
            step_decay=0.8, step_floor_after=1000, step_floor_lr=1e-5,
        )
        assert cfg.lr_for_epoch(0) == 2e-4
        assert cfg.lr_for_epoch(99) == 2e-4
        assert abs(cfg.lr_for_epoch(100) - 2e-4 * 0.8) < 1e-20
        assert abs(cfg.lr_for_epoch(950) - 2e-4 * 0.8**9) < 1e-20
        assert cfg.lr_for_epoch(1000) == 1e-5
        assert cfg.lr_for_epoch(1999) == 1e-5


class TestNormalization:
    def test_affine_endpoint_mapping(self):
        # One velocity, one time, two spatial points spanning [0, 2].
        raw = np.array([[0.0], [2.0], [1.0], [1.0]])  # n_v=2, n_x=2, one column
        samples, consts = normalize_slice(raw, [1.0], 2, 2)
        np.testing.assert_allclose(samples[0, 0], [-1.0, 1.0])
        np.testing.assert_allclose(samples[0, 1], [0.0, 0.0])  # constant group

    def test_constant_column_maps_to_zero_and_back(self):
        raw = np.full((4, 3), 7.5)
        samples, consts = normalize_slice(raw, [1.0, 2.0, 3.0], 2, 2)
        np.testing.assert_array_equal(samples, 0.0)
        back = consts.denormalize(samples[0], 0)
        np.testing.assert_array_equal(back, 7.5)

    def test_round_trip_identity(self):
        rng = np.random.default_rng(10)
        n_v, n_x, n_p, n_t = 3, 4, 5, 6
        raw = rng.uniform(-3, 9, size=(n_v * n_x, n_p * n_t))
        samples, consts = normalize_slice(raw, np.arange(1.0, n_t + 1), n_v, n_x)
        assert samples.min() >= -1.0 - 1e-15 and samples.max() <= 1.0 + 1e-15
        for c in range(raw.shape[1]):
            i = c % n_t
            back = consts.denormalize(samples[c], i)
            np.testing.assert_allclose(back.reshape(-1), raw[:, c], atol=1e-13)

    def test_training_constants_applied_to_test_data(self):
        rng = np.random.default_rng(11)
        train_cols = rng.uniform(0, 1, size=(4, 6))
        _, consts = normalize_slice(train_cols, [1.0, 2.0], 2, 2)
        test_state = rng.uniform(0, 2, size=(2, 2))  # exceeds the training range
        scaled = consts.normalize(test_state, 0)
        assert scaled.max() > 1.0  # not re-fitted to the test data
        np.testing.assert_allclose(consts.denormalize(scaled, 0), test_state, atol=1e-13)

    def test_time_index_lookup(self):
        _, consts = normalize_slice(np.ones((4, 2)), [0.5, 1.5], 2, 2)
        assert consts.time_index(1.5) == 1
        with pytest.raises(InvalidArgument):
            consts.time_index(0.75)


class TestLatentCoordinates:
    def test_zero_model_gives_zero_latents(self):
        model = zero_model()
        x = np.random.default_rng(12).standard_normal((6, 2, 16))
        np.testing.assert_array_equal(latent_coordinates(model, x), 0.0)

    def test_column_alignment_and_shape(self):
        model = tiny_model(seed=7)
        x = np.random.default_rng(13).standard_normal((5, 2, 16))
        coords = latent_coordinates(model, x)
        assert coords.shape == (2, 5)
        np.testing.assert_array_equal(coords[:, 3], model.encode(x[3]))

    def test_training_snapshot_reconstruction_audit(self):
        # Latents of training samples must reconstruct roughly as well as
        # the final training loss suggests.
        model = tiny_model(seed=8)
        rng = np.random.default_rng(14)
        x = np.tanh(rng.standard_normal((4, 2, 16)))
        trained, history = train(model, x, TrainConfig(epochs=600, batch_size=4, seed=2))
        coords = latent_coordinates(trained, x)
        recon = trained.decode(np.ascontiguousarray(coords.T))
        per_sample = np.sum((recon - x) ** 2, axis=(1, 2))
        assert per_sample.mean() <= 4.0 * max(history[-1], 1e-12)


class TestPersistence:
    def test_round_trip_preserves_predictions(self, tmp_path):
        model = tiny_model(seed=9)
        raw = np.random.default_rng(15).uniform(0, 2, size=(32, 6))
        _, consts = normalize_slice(raw, [1.0, 2.0, 3.0], 2, 16)
        path = tmp_path / "model.bin"
        save_model(path, model, consts)
        back_model, back_consts = load_model(path)
        x = np.random.default_rng(16).standard_normal((3, 2, 16))
        np.testing.assert_array_equal(model.encode(x), back_model.encode(x))
        np.testing.assert_array_equal(consts.w_min, back_consts.w_min)
        np.testing.assert_array_equal(consts.w_max, back_consts.w_max)
        np.testing.assert_array_equal(consts.times, back_consts.times)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "model.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        from kinrom.errors import FormatError

        with pytest.raises(FormatError):
            load_model(path)
