import numpy as np
import pytest

from swarmtrack.crlb import (
    ActiveFactors,
    Fim,
    PassiveFactor,
    RadarFactors,
    active_noise_cov,
    crlb_trace,
    doa_row,
    fim_active,
    fim_passive,
    lb_timestep,
    range_bearing_jacobian,
    tracking_effect,
)
from swarmtrack.errors import NonPositiveLb, ZeroRange
from swarmtrack.scenario import TargetState, UavState, WorldState

from swarmtrack.geometry import rotate

from oracles import fd_fim_active, fd_fim_passive, fd_jacobian, active_measurement


def random_geometry(rng, n_radar, spread=3000.0):
    target = rng.uniform(-spread, spread, size=2)
    uavs = []
    while len(uavs) < n_radar:
        u = rng.uniform(-spread, spread, size=2)
        if np.linalg.norm(u - target) > 50.0:
            uavs.append(u)
    return uavs, target


class TestRangeBearingJacobian:
    def test_axis_aligned(self):
        jac = range_bearing_jacobian((0, 0), (100, 0))
        assert np.allclose(jac, [[1, 0], [0, 0.01]])

    def test_rotated_90(self):
        jac = range_bearing_jacobian((0, 0), (0, 100))
        assert np.allclose(jac, [[0, 1], [-0.01, 0]])

    def test_coincident_raises(self):
        with pytest.raises(ZeroRange):
            range_bearing_jacobian((5, 5), (5, 5))

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            uavs, target = random_geometry(rng, 1)
            jac = range_bearing_jacobian(uavs[0], target)
            fd = fd_jacobian(lambda p: active_measurement(uavs[0], p), target)
            assert np.allclose(jac, fd, rtol=1e-6, atol=1e-9)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            range_bearing_jacobian((np.nan, 0), (1, 1))


class TestActiveNoiseCov:
    def test_hundred_meter_unit(self):
        cov = active_noise_cov(100.0, ActiveFactors(1e8, 1e8))
        assert np.allclose(cov, np.eye(2))

    def test_unit_range(self):
        cov = active_noise_cov(1.0, ActiveFactors(2.0, 4.0))
        assert np.allclose(np.diag(cov), [0.5, 0.25])

    def test_zero_range(self):
        with pytest.raises(ZeroRange):
            active_noise_cov(0.0, ActiveFactors(1.0, 1.0))


class TestFimActive:
    def test_single_radar(self):
        fim = fim_active([(0, 0)], (100, 0), ActiveFactors(1e8, 1e8))
        assert np.allclose(fim.m, np.diag([1.0, 1e-4]))

    def test_empty_set_is_zero(self):
        fim = fim_active([], (100, 0), ActiveFactors(1e8, 1e8))
        assert np.allclose(fim.m, 0.0)

    def test_mirror_pair(self):
        fim = fim_active([(0, 0), (200, 0)], (100, 0), ActiveFactors(1e8, 1e8))
        assert np.allclose(fim.m, np.diag([2.0, 2e-4]))

    def test_matches_fd_fisher_information(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(1, 5))
            uavs, target = random_geometry(rng, n)
            fac = ActiveFactors(10 ** rng.uniform(8, 11), 10 ** rng.uniform(14, 18))
            fim = fim_active(uavs, target, fac)
            fd = fd_fim_active(uavs, target, fac.f_range, fac.f_bearing)
            assert np.allclose(fim.m, fd, rtol=1e-5)

    def test_per_radar_factor_overrides(self):
        fac = [ActiveFactors(1e8, 1e8), ActiveFactors(2e8, 2e8)]
        fim = fim_active([(0, 0), (200, 0)], (100, 0), fac)
        assert np.allclose(fim.m, np.diag([3.0, 3e-4]))

    def test_zero_range_propagates(self):
        with pytest.raises(ZeroRange):
            fim_active([(100, 0)], (100, 0), ActiveFactors(1.0, 1.0))


class TestDoaRow:
    def test_diagonal_geometry(self):
        row = doa_row((0, 0), (100, 100))
        assert np.allclose(row, [-0.005, 0.005])

    def test_axis_geometry(self):
        row = doa_row((0, 0), (100, 0))
        assert np.allclose(row, [0.0, 0.01])

    def test_norm_is_inverse_range(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            uavs, target = random_geometry(rng, 1)
            r = np.linalg.norm(np.asarray(target) - uavs[0])
            assert np.isclose(np.linalg.norm(doa_row(uavs[0], target)), 1.0 / r)

    def test_coincident(self):
        with pytest.raises(ZeroRange):
            doa_row((1, 2), (1, 2))


class TestFimPassive:
    def test_two_receiver_cross(self):
        fim = fim_passive([(0, 0), (200, 0)], (100, 100), PassiveFactor(2e4))
        assert np.allclose(fim.m, np.diag([5e-5, 5e-5]))

    def test_single_bearing_is_rank_one(self):
        fim = fim_passive([(0, 0)], (100, 0), PassiveFactor(1e4))
        assert np.isclose(np.linalg.det(fim.m), 0.0, atol=1e-18)
        assert np.linalg.matrix_rank(fim.m) == 1

    def test_empty_set_is_zero(self):
        fim = fim_passive([], (50, 50), PassiveFactor(1.0))
        assert np.allclose(fim.m, 0.0)

    def test_matches_fd_fisher_information(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(2, 5))
            uavs, target = random_geometry(rng, n)
            f = 10 ** rng.uniform(9, 12)
            fim = fim_passive(uavs, target, PassiveFactor(f))
            fd = fd_fim_passive(uavs, target, f)
            assert np.allclose(fim.m, fd, rtol=1e-5)


class TestCrlbTrace:
    def test_diagonal_inverse(self):
        lb = crlb_trace(Fim(np.diag([1.0, 1e-4])), 1e8)
        assert np.isclose(lb.value, 10001.0) and not lb.clamped

    def test_isotropic(self):
        lb = crlb_trace(Fim(np.diag([5e-5, 5e-5])), 1e8)
        assert np.isclose(lb.value, 4e4) and not lb.clamped

    def test_zero_clamps_to_ceiling(self):
        lb = crlb_trace(Fim.zero(), 1e8)
        assert lb.value == 1e8 and lb.clamped

    def test_ill_conditioned_clamps(self):
        lb = crlb_trace(Fim(np.diag([1.0, 1e-13])), 1e8)
        assert lb.clamped

    def test_trace_above_ceiling_clamps(self):
        lb = crlb_trace(Fim(np.diag([1e-9, 1e-9])), 1e8)
        assert lb.value == 1e8 and lb.clamped


def make_world(am_positions, pm_positions, targets):
    """targets: list of (pos, has_jammer)."""
    uavs = [UavState(np.asarray(p, dtype=float), 1) for p in am_positions]
    uavs += [UavState(np.asarray(p, dtype=float), 0) for p in pm_positions]
    tgts = [TargetState(np.asarray(p, dtype=float), np.zeros(2), jam) for p, jam in targets]
    return WorldState(uavs=uavs, targets=tgts)


class TestLbTimestep:
    def test_single_clean_target(self):
        world = make_world([(0, 0)], [], [((100, 0), False)])
        lb = lb_timestep(world, RadarFactors(1e8, 1e8, 1e4), 1e8)
        assert np.isclose(lb.value, 10001.0) and not lb.clamped

    def test_jammer_without_receivers_clamps(self):
        world = make_world([(0, 0)], [], [((100, 0), True)])
        lb = lb_timestep(world, RadarFactors(), 1e8)
        assert lb.value == 1e8 and lb.clamped

    def test_mixed_pair_average(self):
        world = make_world(
            [(0, 0)], [(0, 0), (200, 0)], [((100, 0), False), ((100, 100), True)]
        )
        lb = lb_timestep(world, RadarFactors(1e8, 1e8, 2e4), 1e8)
        assert np.isclose(lb.value, 25000.5)


class TestTrackingEffect:
    def test_unit_series(self):
        assert tracking_effect([1.0, 1.0, 1.0]) == 0.0

    def test_decades(self):
        assert np.isclose(tracking_effect([10.0, 100.0]), -3.0)

    def test_sign_convention(self):
        assert np.isclose(tracking_effect([0.1, 0.1]), 2.0)

    def test_additivity(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            a, b = 10 ** rng.uniform(-3, 8, size=2)
            assert tracking_effect([a]) + tracking_effect([b]) == tracking_effect([a, b])

    def test_rejects_non_positive(self):
        with pytest.raises(NonPositiveLb):
            tracking_effect([1.0, 0.0])
        with pytest.raises(NonPositiveLb):
            tracking_effect([1.0, -2.0])


class TestInvariances:
    def test_rigid_motion_leaves_traces_unchanged(self):
        rng = np.random.default_rng(5)
        fac = ActiveFactors(1e10, 1e18)
        pf = PassiveFactor(1e11)
        for _ in range(20):
            uavs, target = random_geometry(rng, 4)
            ang = rng.uniform(0, 2 * np.pi)
            center = rng.uniform(-5000, 5000, size=2)
            shift = rng.uniform(-5000, 5000, size=2)
            ref_a = crlb_trace(fim_active(uavs, target, fac), 1e8).value
            ref_p = crlb_trace(fim_passive(uavs, target, pf), 1e8).value
            uavs_r = [rotate(u, ang, center) + shift for u in uavs]
            target_r = rotate(target, ang, center) + shift
            got_a = crlb_trace(fim_active(uavs_r, target_r, fac), 1e8).value
            got_p = crlb_trace(fim_passive(uavs_r, target_r, pf), 1e8).value
            assert np.isclose(got_a, ref_a, rtol=1e-9)
            assert np.isclose(got_p, ref_p, rtol=1e-9)

    def test_added_radar_never_loses_information(self):
        rng = np.random.default_rng(6)
        fac = ActiveFactors(1e10, 1e18)
        for _ in range(30):
            uavs, target = random_geometry(rng, 3)
            base = fim_active(uavs[:2], target, fac)
            more = fim_active(uavs, target, fac)
            # Loewner order: the difference is PSD
            assert np.linalg.eigvalsh(more.m - base.m).min() >= -1e-12
            lb_base = crlb_trace(base, 1e12)
            lb_more = crlb_trace(more, 1e12)
            if not (lb_base.clamped or lb_more.clamped):
                assert lb_more.value <= lb_base.value + 1e-9


class TestFimType:
    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            Fim(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Fim(np.array([[np.inf, 0.0], [0.0, 1.0]]))

    def test_factor_validation(self):
        with pytest.raises(ValueError):
            ActiveFactors(-1.0, 1.0)
        with pytest.raises(ValueError):
            PassiveFactor(0.0)
