import numpy as np
import pytest

from swarmtrack.tracking import TrackerConfig, init_track, update_and_predict


class TestInitTrack:
    def test_first_measurement_becomes_prediction(self):
        tr = init_track((0.0, 0.0), TrackerConfig())
        assert np.allclose(tr.pos_pred, 0.0)
        assert np.allclose(tr.vel_est, 0.0)

    def test_sigma_prior_passthrough(self):
        tr = init_track((1.0, 2.0), TrackerConfig(sigma_prior=100.0))
        assert tr.sigma_pred == 100.0

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            init_track((np.nan, 0.0), TrackerConfig())


class TestUpdateAndPredict:
    def test_converges_on_exact_linear_motion(self):
        cfg = TrackerConfig(meas_noise_std=1e-6, process_noise_std=0.0)
        tr = init_track((0.0, 0.0), cfg)
        for k in range(1, 21):
            tr = update_and_predict(tr, (10.0 * k, 0.0), cfg)
        # after 20 exact measurements the next-step prediction is exact
        assert abs(tr.pos_pred[0] - 10.0 * 21) < 1e-6
        assert abs(tr.pos_pred[1]) < 1e-6
        assert np.allclose(tr.vel_est, [10.0, 0.0], atol=1e-6)

    def test_sigma_monotone_for_stationary_target(self):
        cfg = TrackerConfig(meas_noise_std=50.0, process_noise_std=0.0)
        tr = init_track((5.0, 5.0), cfg)
        sigmas = [tr.sigma_pred]
        for _ in range(30):
            tr = update_and_predict(tr, (5.0, 5.0), cfg)
            sigmas.append(tr.sigma_pred)
        diffs = np.diff(sigmas)
        assert np.all(diffs <= 1e-9)

    def test_two_point_velocity_inference(self):
        cfg = TrackerConfig(
            pos_prior_std=1.0, vel_prior_std=1e6, meas_noise_std=1e-6, process_noise_std=0.0
        )
        tr = init_track((0.0, 0.0), cfg)
        tr = update_and_predict(tr, (10.0, 0.0), cfg)
        assert np.allclose(tr.vel_est, [10.0, 0.0], atol=1e-3)

    def test_sigma_positive_and_finite_on_noisy_input(self):
        cfg = TrackerConfig()
        rng = np.random.default_rng(0)
        tr = init_track(rng.normal(size=2) * 1000, cfg)
        for _ in range(200):
            tr = update_and_predict(tr, rng.normal(size=2) * 1000, cfg)
            assert np.isfinite(tr.sigma_pred) and tr.sigma_pred > 0
            assert np.all(np.isfinite(tr.pos_pred))

    def test_prediction_error_vanishes_without_noise(self):
        cfg = TrackerConfig(meas_noise_std=0.0, process_noise_std=0.0)
        tr = init_track((0.0, 0.0), cfg)
        vel = np.array([7.0, -3.0])
        err = None
        for k in range(1, 40):
            pos = vel * k
            err = np.linalg.norm(tr.pos_pred - pos)
            tr = update_and_predict(tr, pos, cfg)
        assert err < 1e-9

    def test_nan_measurement_rejected(self):
        cfg = TrackerConfig()
        tr = init_track((0.0, 0.0), cfg)
        with pytest.raises(ValueError):
            update_and_predict(tr, (np.inf, 0.0), cfg)
