import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import homogeneous_vehicle_spec, two_follower_specs
from platoon_mss.errors import GuardError
from platoon_mss.lti import spectral_radius
from platoon_mss.montecarlo import LeaderProfile
from platoon_mss.moments import (
    covariance_recursion,
    delta_matrix,
    mean_recursion,
    stationary_covariance,
    stationary_mean,
    stationary_moments,
    unvec,
    vec,
)
from platoon_mss.platoon import ChannelModel, PlatoonRealization, assemble_platoon
from platoon_mss.strategies import VehicleSpec, build_vehicle_realization


def make_platoon(specs, channel):
    vehicles = [build_vehicle_realization(s) for s in specs]
    return assemble_platoon(vehicles, channel)


def brute_force_moments(platoon, y0, horizon):
    """First-principles mixture moments: every channel path, exact weights.

    Iterates the open-loop dynamics path by path and averages, without any
    covariance recursion, so it is an independent check of the analytic
    propagation.
    """
    patterns, probs = platoon.channel.support()
    N = platoon.n_vehicles
    widths = [platoon.channel_offsets[i + 1] - platoon.channel_offsets[i] for i in range(N)]
    mu = np.zeros((horizon + 1, N))
    second = np.zeros((horizon + 1, N, N))
    for path in itertools.product(range(len(probs)), repeat=horizon):
        weight = float(np.prod([probs[j] for j in path]))
        x = platoon.x0.copy()
        zetas = np.empty((horizon + 1, N))
        for k in range(horizon + 1):
            zetas[k] = platoon.C_zeta @ x + platoon.D_zeta[:, 0] * y0[k]
            if k < horizon:
                gate = np.repeat(patterns[path[k]], widths)
                v = platoon.C_v @ x + platoon.D_v[:, 0] * y0[k]
                x = platoon.calA @ x + platoon.calB @ (gate * v)
        mu += weight * zetas
        for k in range(horizon + 1):
            second[k] += weight * np.outer(zetas[k], zetas[k])
    cov = second - np.einsum("ki,kj->kij", mu, mu)
    return mu, cov


class TestAgainstBruteForce:
    @pytest.mark.parametrize("strategy", ["error_to_zero", "error_hold_control_hold",
                                          "measurement_hold"])
    def test_single_follower_half_loss(self, strategy):
        spec = homogeneous_vehicle_spec(strategy=strategy)
        platoon = make_platoon([spec], ChannelModel.independent([0.5]))
        horizon = 5
        leader = LeaderProfile.ramp(35.0)
        y0 = leader.positions(horizon)
        mu_ref, cov_ref = brute_force_moments(platoon, y0, horizon)
        traj = covariance_recursion(platoon, leader, horizon)
        assert np.allclose(traj.mu_zeta, mu_ref, atol=1e-12 * max(1, np.abs(mu_ref).max()))
        assert np.allclose(traj.P_zeta, cov_ref, atol=1e-10)

    def test_two_followers_correlated_channel(self):
        specs = list(two_follower_specs())
        channel = ChannelModel.joint_pmf([("11", 0.8), ("00", 0.2)])
        platoon = make_platoon(specs, channel)
        horizon = 5
        leader = LeaderProfile.ramp(20.0)
        y0 = leader.positions(horizon)
        mu_ref, cov_ref = brute_force_moments(platoon, y0, horizon)
        traj = covariance_recursion(platoon, leader, horizon)
        assert np.allclose(traj.mu_zeta, mu_ref, atol=1e-10)
        assert np.allclose(traj.P_zeta, cov_ref, atol=1e-9)


class TestMeanRecursion:
    def test_perfect_channel_tracks_ramp(self, homog_spec):
        platoon = make_platoon([homog_spec] * 2, ChannelModel.independent([1.0, 1.0]))
        traj = mean_recursion(platoon, LeaderProfile.ramp(35.0), 600)
        assert np.max(np.abs(traj.mu_zeta[-1])) < 1e-6
        assert np.max(np.abs(traj.mu_zeta[5])) > 1.0  # transient exists

    def test_measurement_to_zero_never_settles(self, homog_spec):
        spec = VehicleSpec(homog_spec.plant, homog_spec.controller, homog_spec.headway,
                           "measurement_to_zero")
        platoon = make_platoon([spec], ChannelModel.independent([0.98]))
        traj = mean_recursion(platoon, LeaderProfile.ramp(35.0), 600)
        drift = traj.mu_zeta[-1, 0] - traj.mu_zeta[-2, 0]
        assert abs(drift) > 0.01  # steady drift, no finite limit


class TestCovarianceRecursion:
    def test_deterministic_channel_no_variance(self, homog_spec):
        platoon = make_platoon([homog_spec] * 2, ChannelModel.independent([1.0, 1.0]))
        traj = covariance_recursion(platoon, LeaderProfile.ramp(35.0), 50)
        assert np.allclose(traj.P_zeta, 0.0, atol=1e-14)

    def test_psd_and_zeta_projection(self, follower_pair):
        platoon = make_platoon(list(follower_pair), ChannelModel.independent([0.87, 0.87]))
        traj = covariance_recursion(platoon, LeaderProfile.ramp(20.0), 120)
        for k in (0, 30, 120):
            assert np.min(np.linalg.eigvalsh(traj.P_x[k])) >= -1e-9
            assert np.allclose(traj.P_zeta[k],
                               platoon.C_zeta @ traj.P_x[k] @ platoon.C_zeta.T)

    def test_variance_divergence_below_threshold(self, homog_spec):
        platoon = make_platoon([homog_spec], ChannelModel.independent([0.8]))
        traj = covariance_recursion(platoon, LeaderProfile.ramp(35.0), 500, store_state=False)
        assert traj.P_zeta[500, 0, 0] > 10.0 * traj.P_zeta[50, 0, 0]

    def test_vectorized_form_equivalence(self, homog_spec):
        platoon = make_platoon([homog_spec], ChannelModel.independent([0.9]))
        leader = LeaderProfile.ramp(35.0)
        horizon = 50
        traj = covariance_recursion(platoon, leader, horizon)
        Delta = delta_matrix(platoon)
        n = platoon.n_states
        op = np.kron(platoon.A, platoon.A) + Delta
        X = vec(np.zeros((n, n)))
        for k in range(horizon):
            mv = traj.mu_v[k]
            S = vec(platoon.calB @ (platoon.P_Theta * np.outer(mv, mv)) @ platoon.calB.T)
            X = op @ X + S
            P = unvec(X, n, n)
            assert np.allclose(P, traj.P_x[k + 1], atol=1e-10 * max(1.0, np.abs(P).max()))


class TestKroneckerIdentities:
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_vec_of_sandwich(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(4, 4))
        P = rng.normal(size=(4, 4))
        assert np.allclose(vec(A @ P @ A.T), np.kron(A, A) @ vec(P), atol=1e-10)

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_vec_of_hadamard(self, seed):
        rng = np.random.default_rng(seed)
        M = rng.normal(size=(3, 3))
        N = rng.normal(size=(3, 3))
        assert np.allclose(vec(M * N), np.diag(vec(M)) @ vec(N), atol=1e-12)


def scalar_platoon(a, b, c, p):
    veh = type("V", (), {})  # not used; construct the real dataclass below
    from platoon_mss.strategies import VehicleRealization, CompensationStrategy

    vehicle = VehicleRealization(
        A=[[a]], B=[[b]], C_y=[[1.0]], C_zeta=[[-1.0]], C_v=[[c]],
        D_zeta=[[1.0]], D_v=[[1.0]], x0=[0.0],
        strategy=CompensationStrategy("error_to_zero"),
    )
    return assemble_platoon([vehicle], ChannelModel.independent([p]))


class TestDeltaMatrix:
    def test_zero_for_perfect_channel(self, homog_spec):
        platoon = make_platoon([homog_spec], ChannelModel.independent([1.0]))
        assert np.allclose(delta_matrix(platoon), 0.0)

    def test_scalar_collapse(self):
        b, c, p = 0.7, -1.3, 0.6
        platoon = scalar_platoon(0.5, b, c, p)
        delta = delta_matrix(platoon)
        assert delta.shape == (1, 1)
        assert delta[0, 0] == pytest.approx(p * (1 - p) * b * b * c * c)

    def test_reference_kron_radius(self, homog_spec):
        # frozen regression value for the ten-follower reference design
        platoon = make_platoon([homog_spec], ChannelModel.independent([0.9]))
        rho = spectral_radius(np.kron(platoon.A, platoon.A) + delta_matrix(platoon))
        assert rho == pytest.approx(0.8490532976, abs=1e-6)

    def test_memory_guard(self):
        from platoon_mss import moments as mod

        old = mod._DELTA_ENTRY_GUARD
        mod._DELTA_ENTRY_GUARD = 10
        try:
            platoon = scalar_platoon(0.5, 1.0, 1.0, 0.5)
            platoon2 = make_platoon([homogeneous_vehicle_spec()], ChannelModel.independent([0.9]))
            with pytest.raises(GuardError):
                delta_matrix(platoon2)
            assert delta_matrix(platoon).shape == (1, 1)
        finally:
            mod._DELTA_ENTRY_GUARD = old


class TestStationaryValues:
    def test_double_zero_gives_exact_zero(self, homog_spec):
        platoon = make_platoon([homog_spec] * 2, ChannelModel.independent([0.9, 0.9]))
        mu = stationary_mean(platoon, 35.0)
        P = stationary_covariance(platoon, 35.0)
        assert mu is not None and np.all(mu == 0.0)
        assert P is not None and np.all(P == 0.0)

    def test_zero_slope_gives_zero(self, homog_spec):
        spec = VehicleSpec(homog_spec.plant, homog_spec.controller, homog_spec.headway,
                           "measurement_hold")
        platoon = make_platoon([spec], ChannelModel.independent([0.95]))
        assert np.allclose(stationary_mean(platoon, 0.0), 0.0)
        assert np.allclose(stationary_covariance(platoon, 0.0), 0.0)

    def test_single_zero_matches_long_recursion(self, homog_spec):
        spec = VehicleSpec(homog_spec.plant, homog_spec.controller, homog_spec.headway,
                           "measurement_hold")
        platoon = make_platoon([spec] * 2, ChannelModel.independent([0.95, 0.95]))
        m0 = 35.0
        mu = stationary_mean(platoon, m0)
        P = stationary_covariance(platoon, m0)
        assert mu is not None and np.all(np.abs(mu) > 1e-3)
        traj = covariance_recursion(platoon, LeaderProfile.ramp(m0), 2000, store_state=False)
        assert np.allclose(traj.mu_zeta[2000], mu, rtol=1e-6)
        assert np.allclose(traj.P_zeta[2000], P, rtol=1e-6, atol=1e-12)

    def test_divergent_cases_flagged(self, homog_spec):
        platoon = make_platoon([homog_spec], ChannelModel.independent([0.47]))
        assert stationary_mean(platoon, 35.0) is None
        assert stationary_covariance(platoon, 35.0) is None
        spec = VehicleSpec(homog_spec.plant, homog_spec.controller, homog_spec.headway,
                           "measurement_to_zero")
        platoon = make_platoon([spec], ChannelModel.independent([0.98]))
        assert stationary_mean(platoon, 35.0) is None

    def test_bundle_consistency(self, homog_spec):
        platoon = make_platoon([homog_spec], ChannelModel.independent([0.9]))
        sm = stationary_moments(platoon, 35.0)
        assert sm.m11_multiplicity.tolist() == [2]
        assert sm.m21_multiplicity.tolist() == [2, 2]
        assert np.all(sm.mean_zeta == 0.0)
        assert np.all(sm.cov_zeta == 0.0)
        assert np.all(sm.mu_v_stationary == 0.0)
