"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with the measured numbers.  Tolerances are fixed here, not
calibrated elsewhere.
"""

import itertools
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg

from conftest import homogeneous_vehicle_spec, random_family_spec, two_follower_specs
from platoon_mss.config import load_config
from platoon_mss.lti import StateSpace, spectral_radius, ss_minimal
from platoon_mss.montecarlo import LeaderProfile, ensemble_stats, enumerate_exact
from platoon_mss.moments import (
    covariance_recursion,
    delta_matrix,
    stationary_covariance,
    stationary_mean,
)
from platoon_mss.mss import homogeneous_conditions, mss_verdict, per_vehicle_conditions, sweep
from platoon_mss.platoon import ChannelModel, assemble_platoon, subsystem_tf
from platoon_mss.strategies import STRATEGY_NAMES, VehicleSpec, build_vehicle_realization

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def report(name, ok, detail=""):
    print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"{name}: {detail}"


def make_platoon(specs, p):
    vehicles = [build_vehicle_realization(s) for s in specs]
    if np.isscalar(p):
        p = [p] * len(vehicles)
    return assemble_platoon(vehicles, ChannelModel.independent(p))


def mean_loop(vehicle, p):
    alpha = vehicle.A + p * vehicle.B @ vehicle.C_v
    Bm = p * vehicle.B @ vehicle.D_v
    return alpha, Bm


def siso_poles_zeros(ss):
    """Poles and transmission zeros of a minimal SISO realization."""
    red = ss_minimal(ss)
    poles = np.linalg.eigvals(red.A)
    n = red.n_states
    M = np.block([[red.A, red.B], [red.C, red.D]])
    E = np.eye(n + 1)
    E[-1, -1] = 0.0
    vals = scipy.linalg.eig(M, E, right=False)
    zeros = vals[np.isfinite(vals)]
    return poles, zeros


def match_roots(computed, expected, tol):
    computed = list(np.asarray(computed, dtype=complex))
    worst = 0.0
    for e in np.asarray(expected, dtype=complex):
        dists = [abs(e - c) for c in computed]
        j = int(np.argmin(dists))
        worst = max(worst, dists[j])
        computed.pop(j)
    return worst <= tol, worst


class TestCriterion1HomogeneousSpectralRadii:
    def test_reference_radii(self, homog_spec):
        targets = {0.9: (0.8586, 0.8417), 0.8: (0.8597, 1.0106), 0.47: (1.0046, 1.2948)}
        vehicle = build_vehicle_realization(homog_spec)
        t0 = time.monotonic()
        devs = []
        for p, (ra_want, rk_want) in targets.items():
            condition, _ = homogeneous_conditions(vehicle, p)
            devs.append((p, "rho_alpha", condition.rho_alpha, ra_want,
                         abs(condition.rho_alpha - ra_want)))
            devs.append((p, "rho_kron", condition.rho_alpha_kron, rk_want,
                         abs(condition.rho_alpha_kron - rk_want)))
        elapsed = time.monotonic() - t0
        lines = "; ".join(
            f"p={p} {what}={got:.4f} (want {want}, |d|={d:.1e})" for p, what, got, want, d in devs
        )
        ok = all(d <= 2e-3 for *_, d in devs) and elapsed < 1.0
        report("homogeneous-spectral-radii", ok, f"{lines}; elapsed={elapsed:.2f}s")


class TestCriterion2PrintedTransferFunctions:
    def test_ma_factorization_p09(self, homog_spec):
        vehicle = build_vehicle_realization(homog_spec)
        alpha, Bm = mean_loop(vehicle, 0.9)
        poles, zeros = siso_poles_zeros(StateSpace(alpha, Bm, vehicle.C_zeta, vehicle.D_zeta))
        want_zeros = [1.0, 1.0, -0.79, 0.1]
        want_poles = [-0.39, 0.85] + list(np.roots([1.0, -0.84, 0.56]))
        okz, dz = match_roots(zeros, want_zeros, 0.02)
        okp, dp = match_roots(poles, want_poles, 0.02)
        ok = okz and okp and len(zeros) == 4 and len(poles) == 4
        report("printed-tf-ma", ok,
               f"zero worst |d|={dz:.4f}, pole worst |d|={dp:.4f}, order={len(poles)}")

    def test_mb_carries_double_zeros_p09(self, homog_spec):
        vehicle = build_vehicle_realization(homog_spec)
        platoon = make_platoon([homog_spec], 0.9)
        from platoon_mss.lti import zero_multiplicity_at_one

        mult = zero_multiplicity_at_one(subsystem_tf(platoon, "M21"))
        ok = mult.tolist() == [2, 2]
        report("printed-tf-mb-multiplicity", ok, f"multiplicities={mult.tolist()} (want >=2 each)")

    def test_measurement_hold_values(self, homog_spec):
        spec = VehicleSpec(homog_spec.plant, homog_spec.controller, homog_spec.headway,
                           "measurement_hold")
        vehicle = build_vehicle_realization(spec)
        condition, _ = homogeneous_conditions(vehicle, 0.95)
        d_ra = abs(condition.rho_alpha - 0.8535)
        d_rk = abs(condition.rho_alpha_kron - 0.7284)
        alpha, Bm = mean_loop(vehicle, 0.95)
        poles, zeros = siso_poles_zeros(StateSpace(alpha, Bm, vehicle.C_v, vehicle.D_v))
        okz, dz = match_roots(zeros, [1.0], 0.02)
        okp, dp = match_roots(poles, [0.05], 0.02)
        ok = d_ra <= 2e-3 and d_rk <= 2e-3 and okz and okp and len(poles) == 1
        report("printed-tf-measurement-hold", ok,
               f"rho_alpha={condition.rho_alpha:.4f} (|d|={d_ra:.1e}), "
               f"rho_kron={condition.rho_alpha_kron:.4f} (|d|={d_rk:.1e}), "
               f"Mb zero |d|={dz:.4f}, pole |d|={dp:.4f}")


class TestCriterion3OracleEquivalence:
    def test_enumeration_matches_recursions(self, homog_spec):
        t0 = time.monotonic()
        worst = 0.0
        count = 0
        leader = LeaderProfile.ramp(5.0)
        for strategy in sorted(STRATEGY_NAMES):
            spec = VehicleSpec(homog_spec.plant, homog_spec.controller, homog_spec.headway,
                               strategy)
            cases = [
                ([spec], ChannelModel.independent([0.6]), 10),
                ([spec, spec], ChannelModel.independent([0.6, 0.85]), 8),
                ([spec, spec], ChannelModel.joint_pmf([("11", 0.7), ("01", 0.3)]), 10),
            ]
            for specs, channel, horizon in cases:
                vehicles = [build_vehicle_realization(s) for s in specs]
                platoon = assemble_platoon(vehicles, channel)
                mu, P = enumerate_exact(platoon, leader, horizon)
                traj = covariance_recursion(platoon, leader, horizon)
                worst = max(worst, float(np.max(np.abs(mu - traj.mu_zeta))))
                worst = max(worst, float(np.max(np.abs(P - traj.P_zeta))))
                count += 1
        elapsed = time.monotonic() - t0
        ok = worst <= 1e-10 and elapsed < 30.0
        report("oracle-equivalence", ok,
               f"{count} instances, worst |d|={worst:.2e}, elapsed={elapsed:.1f}s")


class TestCriterion4StationaryConsistency:
    def _configs(self):
        for name in ("two_follower", "homogeneous", "heterogeneous_template", "strategy_zoo"):
            cfg = load_config(CONFIG_DIR / f"{name}.json")
            for case in [""] + cfg.case_names:
                yield f"{name}:{case or 'base'}", (cfg.with_case(case) if case else cfg)

    def test_corollary_matches_long_recursion(self):
        checked = []
        worst_rel = 0.0
        worst_zero = 0.0
        for tag, cfg in self._configs():
            platoon = cfg.build_platoon()
            m0 = cfg.leader_profile().final_slope()
            verdict = mss_verdict(platoon, m0=m0)
            if not verdict.mss:
                continue
            mu = stationary_mean(platoon, m0)
            P = stationary_covariance(platoon, m0)
            traj = covariance_recursion(platoon, LeaderProfile.ramp(m0), 2000,
                                        store_state=False)
            if np.all(verdict.m11_multiplicity >= 2):
                assert np.all(mu == 0.0), tag
                worst_zero = max(worst_zero, float(np.max(np.abs(traj.mu_zeta[2000]))))
            else:
                rel = np.max(np.abs(traj.mu_zeta[2000] - mu) / np.maximum(np.abs(mu), 1e-30))
                worst_rel = max(worst_rel, float(rel))
            if np.all(verdict.m21_multiplicity >= 2):
                assert np.all(P == 0.0), tag
                worst_zero = max(worst_zero, float(np.max(np.abs(traj.P_zeta[2000]))))
            else:
                rel = np.max(np.abs(traj.P_zeta[2000] - P) / np.maximum(np.abs(P), 1e-30))
                worst_rel = max(worst_rel, float(rel))
            checked.append(tag)
        ok = len(checked) >= 4 and worst_rel <= 1e-6 and worst_zero <= 1e-6
        report("stationary-consistency", ok,
               f"instances={checked}, worst rel |d|={worst_rel:.2e}, "
               f"worst zero-case residual={worst_zero:.2e}")


class TestCriterion5MonteCarloAgreement:
    def test_reference_ensemble(self):
        cfg = load_config(CONFIG_DIR / "homogeneous.json")
        platoon = cfg.build_platoon()
        leader = cfg.leader_profile()
        t0 = time.monotonic()
        stats = ensemble_stats(platoon, leader, 400, runs=20000, base_seed=42)
        traj = covariance_recursion(platoon, leader, 400, store_state=False)
        # the band needs a floating-point floor: once the true variance hits
        # zero, SE collapses below the rounding noise of ~14 km position sums
        floor = 1e-10 * float(np.max(np.abs(leader.positions(400))))
        within = np.abs(stats.mean - traj.mu_zeta) <= 4.0 * stats.se_mean + floor
        frac = float(np.mean(within))
        elapsed = time.monotonic() - t0
        ok = frac >= 0.99 and elapsed < 120.0
        report("monte-carlo-agreement", ok,
               f"fraction within 4 SE = {frac:.4f}, elapsed={elapsed:.0f}s")


class TestCriterion6StructuralInvariants:
    def test_block_spectrum(self):
        rng = np.random.default_rng(31)
        worst = 0.0
        for _ in range(10):
            n = int(rng.integers(2, 4))
            specs = [random_family_spec(rng) for _ in range(n)]
            platoon = make_platoon(specs, list(rng.uniform(0.5, 1.0, size=n)))
            dense = spectral_radius(platoon.A)
            blocks = max(spectral_radius(platoon.alpha(i)) for i in range(n))
            worst = max(worst, abs(dense - blocks))
        report("invariant-block-spectrum", worst <= 1e-8, f"worst |d|={worst:.2e}")

    def test_verdict_similarity_invariance(self, follower_pair):
        from platoon_mss.strategies import VehicleRealization

        rng = np.random.default_rng(8)
        base = [build_vehicle_realization(s) for s in follower_pair]
        channel = ChannelModel.independent([0.87, 0.92])
        ref = mss_verdict(assemble_platoon(base, channel), m0=20.0)
        agree = True
        for _ in range(5):
            vehicles = []
            for v in base:
                S = np.eye(v.n_x) + 0.2 * rng.normal(size=(v.n_x, v.n_x))
                Si = np.linalg.inv(S)
                vehicles.append(VehicleRealization(
                    A=Si @ v.A @ S, B=Si @ v.B, C_y=v.C_y @ S, C_zeta=v.C_zeta @ S,
                    C_v=v.C_v @ S, D_zeta=v.D_zeta, D_v=v.D_v, x0=Si @ v.x0,
                    strategy=v.strategy))
            got = mss_verdict(assemble_platoon(vehicles, channel), m0=20.0)
            agree &= (got.mss == ref.mss
                      and abs(got.rho_A - ref.rho_A) < 1e-7
                      and abs(got.rho_kron - ref.rho_kron) < 1e-6)
        report("invariant-similarity", agree, f"reference mss={ref.mss}")

    def test_global_vs_per_vehicle_verdicts(self):
        rng = np.random.default_rng(1234)
        checked = 0
        agree = True
        t0 = time.monotonic()
        while checked < 100:
            n = int(rng.integers(1, 5))
            specs = [random_family_spec(rng) for _ in range(n)]
            p = rng.uniform(0.35, 1.0, size=n)
            platoon = make_platoon(specs, list(p))
            rho_A = spectral_radius(platoon.A)
            rho_kron = spectral_radius(
                np.kron(platoon.A, platoon.A) + delta_matrix(platoon)
            )
            if abs(rho_A - 1.0) <= 0.01 or abs(rho_kron - 1.0) <= 0.01:
                continue
            M11 = subsystem_tf(platoon, "M11")
            M21 = subsystem_tf(platoon, "M21")
            if rho_A < 1.0:
                from platoon_mss.lti import zero_multiplicity_at_one

                global_ok = (
                    bool(np.all(zero_multiplicity_at_one(M11) >= 1))
                    and bool(np.all(zero_multiplicity_at_one(M21) >= 1))
                    and rho_kron < 1.0
                )
            else:
                global_ok = False
            _, per_vehicle_ok = per_vehicle_conditions(platoon.vehicles, p)
            agree &= global_ok == per_vehicle_ok
            checked += 1
        elapsed = time.monotonic() - t0
        report("invariant-thm1-vs-thm2", agree,
               f"100 instances outside the marginal band, elapsed={elapsed:.0f}s")

    def test_case1_region_is_product(self):
        cfg = load_config(CONFIG_DIR / "sweep_case1.json")
        make, grids = cfg.sweep_platoon_factory()
        rows = sweep(make, grids)
        by_point = {r.p: r.mss for r in rows}
        axis1 = sorted({p1 for p1, _ in by_point})
        axis2 = sorted({p2 for _, p2 in by_point})
        # per-axis verdicts from the single-axis slices at the best other-rate
        ok1 = {a: by_point[(a, max(axis2))] for a in axis1}
        ok2 = {b: by_point[(max(axis1), b)] for b in axis2}
        product_match = all(by_point[(a, b)] == (ok1[a] and ok2[b])
                            for a in axis1 for b in axis2)
        report("invariant-case1-product-region", product_match,
               f"{len(rows)} grid points")


class TestCriterion7DocumentedIrreproducibles:
    def test_heterogeneous_substitute_property(self):
        # the published per-vehicle parameters are unavailable; any conforming
        # draw must show per-vehicle variation while the combined verdict
        # follows the decoupled per-vehicle logic
        rng = np.random.default_rng(77)
        all_ok = True
        for _ in range(10):
            n = int(rng.integers(3, 6))
            specs = [random_family_spec(rng, strategy="error_hold_control_hold")
                     for _ in range(n)]
            p = rng.uniform(0.6, 1.0, size=n)
            platoon = make_platoon(specs, list(p))
            conditions, verdict = per_vehicle_conditions(platoon.vehicles, p)
            rhos = [c.rho_alpha for c in conditions]
            all_ok &= np.std(rhos) > 1e-4  # heterogeneity is visible
            all_ok &= verdict == all(c.mean_ok and c.var_ok for c in conditions)
        report("documented-heterogeneous-substitute", all_ok, "10 random draws")

    def test_case2_region_shows_interplay(self):
        cfg = load_config(CONFIG_DIR / "sweep_case2.json")
        make, _ = cfg.sweep_platoon_factory()
        grid = np.round(np.linspace(0.4, 1.0, 7), 4)
        rows = sweep(make, [grid, grid])
        verdict = {r.p: r.mss for r in rows}
        proj1 = {a for (a, b), v in verdict.items() if v}
        proj2 = {b for (a, b), v in verdict.items() if v}
        non_product = any(verdict[(a, b)] != (a in proj1 and b in proj2)
                          for (a, b) in verdict)
        report("documented-case2-interplay", non_product,
               "verdict region is not a product set under rate-scheduled gains")
