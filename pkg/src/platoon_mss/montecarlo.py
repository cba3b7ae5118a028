"""Sampled realizations of the stochastic platoon, leader trajectory
generators, seeded ensemble statistics, and the exact path-enumeration
oracle.

Simulation iterates the open-loop stacked form: the channel input is formed
from the current state and leader position, gated by the sampled link
vector, and fed back through the block-diagonal input matrix.  Ensemble
runs draw their channel paths from per-run substreams derived from
(base seed, run index), so any single member is reproducible in isolation.
"""

from dataclasses import dataclass

import numpy as np

from .errors import GuardError, InvalidParameterError
from .platoon import sample_channel_path
from .strategies import strategy_signal_equations

__all__ = [
    "LeaderProfile",
    "SimulationRun",
    "EnsembleStats",
    "leader_trajectory",
    "run_seed",
    "simulate_run",
    "ensemble_stats",
    "enumerate_exact",
    "simulate_signal_level",
]

_ENUM_PATH_GUARD = 2 ** 20


@dataclass(frozen=True)
class LeaderProfile:
    """Leader position generator: a ramp or piecewise-constant accelerations.

    Speeds are clipped at zero (a braking leader stops, it does not
    reverse); after the listed segments the acceleration is zero, so the
    position always converges to a ramp.
    """

    variant: str
    slope: float = 0.0
    segments: tuple = ()
    initial_position: float = 0.0
    initial_speed: float = 0.0

    def __post_init__(self):
        if self.variant not in ("ramp", "piecewise"):
            raise InvalidParameterError(f"unknown leader variant '{self.variant}'")
        if self.variant == "piecewise" and not self.segments:
            raise InvalidParameterError("piecewise leader needs at least one segment")
        segs = tuple((float(a), int(d)) for a, d in self.segments)
        if any(d < 1 for _, d in segs):
            raise InvalidParameterError("segment durations must be >= 1 step")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def ramp(cls, slope, initial_position=0.0):
        return cls(variant="ramp", slope=float(slope),
                   initial_position=float(initial_position), initial_speed=float(slope))

    @classmethod
    def piecewise(cls, segments, initial_speed=0.0, initial_position=0.0):
        return cls(variant="piecewise", segments=tuple(segments),
                   initial_position=float(initial_position), initial_speed=float(initial_speed))

    def _accelerations(self, horizon):
        acc = np.zeros(horizon)
        if self.variant == "piecewise":
            k = 0
            for a, d in self.segments:
                if k >= horizon:
                    break
                acc[k:min(horizon, k + d)] = a
                k += d
        return acc

    def slopes(self, horizon):
        """Speed series m0(k) = y0(k) - y0(k-1) for k = 0..horizon."""
        if self.variant == "ramp":
            return np.full(horizon + 1, self.slope)
        acc = self._accelerations(horizon)
        m0 = np.empty(horizon + 1)
        m0[0] = self.initial_speed
        for k in range(horizon):
            m0[k + 1] = max(m0[k] + acc[k], 0.0)
        return m0

    def positions(self, horizon):
        """Position series y0(k) for k = 0..horizon."""
        m0 = self.slopes(horizon)
        y0 = self.initial_position + np.concatenate([[0.0], np.cumsum(m0[1:])])
        return y0

    def final_slope(self, horizon=None):
        """Limiting cruise speed once every segment has played out."""
        if self.variant == "ramp":
            return self.slope
        total = sum(d for _, d in self.segments)
        return float(self.slopes(max(total, 1))[-1])


def leader_trajectory(profile, horizon):
    """Position and per-step slope series over k = 0..horizon."""
    if horizon < 1:
        raise InvalidParameterError("horizon must be >= 1")
    return profile.positions(horizon), profile.slopes(horizon)


@dataclass
class SimulationRun:
    """One sampled trajectory: positions, tracking errors, and the channel path."""

    y: np.ndarray
    zeta: np.ndarray
    theta: np.ndarray


def run_seed(base_seed, index):
    """Substream seed for ensemble member ``index`` under ``base_seed``."""
    return np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(index),))


def _theta_for(platoon, horizon, seed, theta_path):
    if theta_path is not None:
        theta = np.asarray(theta_path, dtype=float)
        if theta.shape != (horizon, platoon.n_vehicles):
            raise InvalidParameterError(
                f"theta path must have shape ({horizon}, {platoon.n_vehicles})"
            )
        return theta
    rng = np.random.default_rng(seed)
    return sample_channel_path(platoon.channel, rng, horizon)


def simulate_run(platoon, leader, horizon, seed=0, theta_path=None, x0=None):
    """Simulate one realization of the lossy platoon, deterministic by seed.

    ``theta_path`` overrides the sampled channel with an explicit (horizon,
    N) 0/1 array, which the enumeration tests use to force specific loss
    patterns.
    """
    y0 = leader.positions(horizon) if hasattr(leader, "positions") else np.asarray(leader, dtype=float)
    theta = _theta_for(platoon, horizon, seed, theta_path)
    x = platoon.x0.copy() if x0 is None else np.asarray(x0, dtype=float).copy()
    widths = [platoon.channel_offsets[i + 1] - platoon.channel_offsets[i]
              for i in range(platoon.n_vehicles)]
    N = platoon.n_vehicles
    K = horizon
    y = np.empty((K + 1, N))
    zeta = np.empty((K + 1, N))
    for k in range(K + 1):
        y[k] = platoon.C_y @ x
        zeta[k] = platoon.C_zeta @ x + platoon.D_zeta[:, 0] * y0[k]
        if k < K:
            v = platoon.C_v @ x + platoon.D_v[:, 0] * y0[k]
            gate = np.repeat(theta[k], widths)
            x = platoon.calA @ x + platoon.calB @ (gate * v)
    return SimulationRun(y=y, zeta=zeta, theta=theta)


@dataclass
class EnsembleStats:
    """Empirical per-(k, vehicle) moments over independent seeded runs."""

    runs: int
    base_seed: int
    mean: np.ndarray
    var: np.ndarray
    se_mean: np.ndarray
    seed_scheme: str = "SeedSequence(base_seed, spawn_key=(run_index,))"


def ensemble_stats(platoon, leader, horizon, runs, base_seed, chunk=4096):
    """Sample mean/variance of the tracking error over ``runs`` realizations.

    Runs are batched into matrix recursions per chunk; each run's channel
    path still comes from its own (base seed, run index) substream, so the
    j-th member equals ``simulate_run(..., seed=run_seed(base_seed, j))``.
    """
    if runs < 2:
        raise InvalidParameterError("need at least two runs for a variance")
    y0 = leader.positions(horizon)
    N = platoon.n_vehicles
    K = horizon
    widths = [platoon.channel_offsets[i + 1] - platoon.channel_offsets[i] for i in range(N)]
    rep = np.repeat(np.arange(N), widths)
    s1 = np.zeros((K + 1, N))
    s2 = np.zeros((K + 1, N))
    calA_T = platoon.calA.T
    calB_T = platoon.calB.T
    Cv_T = platoon.C_v.T
    Cz_T = platoon.C_zeta.T
    dv = platoon.D_v[:, 0]
    dz = platoon.D_zeta[:, 0]
    for start in range(0, runs, chunk):
        m = min(chunk, runs - start)
        theta = np.empty((m, K, N))
        for j in range(m):
            rng = np.random.default_rng(run_seed(base_seed, start + j))
            theta[j] = sample_channel_path(platoon.channel, rng, K)
        X = np.tile(platoon.x0, (m, 1))
        for k in range(K + 1):
            Z = X @ Cz_T + y0[k] * dz
            s1[k] += Z.sum(axis=0)
            s2[k] += (Z * Z).sum(axis=0)
            if k < K:
                V = X @ Cv_T + y0[k] * dv
                X = X @ calA_T + (theta[:, k, rep] * V) @ calB_T
    mean = s1 / runs
    var = (s2 - runs * mean ** 2) / (runs - 1)
    var = np.maximum(var, 0.0)
    se = np.sqrt(var / runs)
    return EnsembleStats(runs=runs, base_seed=int(base_seed), mean=mean, var=var, se_mean=se)


def enumerate_exact(platoon, leader, horizon):
    """Exact mixture moments of zeta by enumerating every channel path.

    Expands the path tree level by level with exact probabilities; the
    per-path dynamics are deterministic, so the resulting moments are exact
    up to rounding.  Guarded by the total path count.
    """
    patterns, probs = platoon.channel.support()
    s = patterns.shape[0]
    if s ** horizon > _ENUM_PATH_GUARD:
        raise GuardError(
            f"{s}^{horizon} channel paths exceed the enumeration guard ({_ENUM_PATH_GUARD})"
        )
    y0 = leader.positions(horizon) if hasattr(leader, "positions") else np.asarray(leader, dtype=float)
    N = platoon.n_vehicles
    K = horizon
    widths = [platoon.channel_offsets[i + 1] - platoon.channel_offsets[i] for i in range(N)]
    rep = np.repeat(np.arange(N), widths)
    gates = patterns[:, rep]  # (s, total channel width)
    mu = np.empty((K + 1, N))
    P = np.empty((K + 1, N, N))
    X = platoon.x0.reshape(1, -1).copy()
    W = np.ones(1)
    calA_T = platoon.calA.T
    calB_T = platoon.calB.T
    for k in range(K + 1):
        Z = X @ platoon.C_zeta.T + y0[k] * platoon.D_zeta[:, 0]
        mu[k] = W @ Z
        D = Z - mu[k]
        P[k] = (D * W[:, None]).T @ D
        if k < K:
            V = X @ platoon.C_v.T + y0[k] * platoon.D_v[:, 0]
            base = X @ calA_T
            n_paths = X.shape[0]
            X = (base[:, None, :] + np.einsum("pm,bm,mn->pbn", V, gates, calB_T)).reshape(
                n_paths * s, -1
            )
            W = (W[:, None] * probs[None, :]).reshape(-1)
    return mu, P


class _DifferenceFilter:
    """Direct-form scalar filter y(k) = sum b_j u(k-j) - sum a_j y(k-j)."""

    def __init__(self, tf):
        den = tf.den
        n = len(den) - 1
        num = np.concatenate([np.zeros(n + 1 - len(tf.num)), tf.num])
        self.b = num
        self.a = den[1:]
        self.u_hist = np.zeros(n)
        self.y_hist = np.zeros(n)

    @property
    def strictly_proper(self):
        return self.b[0] == 0.0

    def free_output(self):
        """Output at time k before u(k) is known (valid when b0 = 0)."""
        return float(self.b[1:] @ self.u_hist - self.a @ self.y_hist)

    def step(self, u_k):
        y_k = float(self.b[0] * u_k + self.b[1:] @ self.u_hist - self.a @ self.y_hist)
        if self.u_hist.size:
            self.u_hist = np.concatenate([[u_k], self.u_hist[:-1]])
            self.y_hist = np.concatenate([[y_k], self.y_hist[:-1]])
        return y_k


def simulate_signal_level(specs, leader, horizon, theta):
    """Block-diagram simulation straight from the strategy equations.

    Runs every vehicle as raw difference equations on the plant, controller
    and compensator signals, with no state-space realization involved; used
    as an independent cross-check of the realization-based simulator.
    Requires strictly proper plants (position must not jump through the
    loop within one step).
    """
    specs = list(specs)
    theta = np.asarray(theta, dtype=float)
    K = horizon
    if theta.shape != (K, len(specs)):
        raise InvalidParameterError(f"theta must have shape ({K}, {len(specs)})")
    y0 = leader.positions(K) if hasattr(leader, "positions") else np.asarray(leader, dtype=float)
    N = len(specs)
    y = np.zeros((K + 1, N))
    zeta = np.zeros((K + 1, N))

    ctrl = [_DifferenceFilter(s.scaled_controller()) for s in specs]
    plant = [_DifferenceFilter(s.plant) for s in specs]
    for f in plant:
        if not f.strictly_proper:
            raise InvalidParameterError("signal-level path requires a strictly proper plant")
    comp = [dict.fromkeys(strategy_signal_equations(s.strategy).state_names, 0.0) for s in specs]
    for i, s in enumerate(specs):
        for name, val in zip(s.strategy.compensator_states, s.strategy.initial_values):
            comp[i][name] = val
    y_prev_hist = np.zeros(N)  # own position one step back, for the headway term

    for k in range(K + 1):
        for i, s in enumerate(specs):
            h = float(s.headway)
            yi = plant[i].free_output()
            y[k, i] = yi
            w = (1.0 + h) * yi - h * y_prev_hist[i]
            upstream = y0[k] if i == 0 else y[k, i - 1]
            zeta[k, i] = upstream - w
            if k < K:
                th = theta[k, i]
                st = comp[i]
                variant = s.strategy.variant
                if variant == "error_to_zero":
                    e_hat = th * (upstream - w)
                    u = ctrl[i].step(e_hat)
                    plant[i].step(u)
                elif variant == "error_hold_control_hold":
                    e_hat = th * ((upstream - w) - st["e_hat_prev"]) + st["e_hat_prev"]
                    u = ctrl[i].step(e_hat)
                    u_hat = th * (u - st["u_prev"]) + st["u_prev"]
                    plant[i].step(u_hat)
                    st["e_hat_prev"] = e_hat
                    st["u_prev"] = u
                elif variant == "measurement_estimate":
                    eta = 2.0 * st["y_hat_prev"] - st["y_hat_prev2"]
                    y_hat = th * (upstream - eta) + eta
                    u = ctrl[i].step(y_hat - w)
                    plant[i].step(u)
                    st["y_hat_prev2"] = st["y_hat_prev"]
                    st["y_hat_prev"] = y_hat
                elif variant == "measurement_to_zero":
                    y_hat = th * upstream
                    u = ctrl[i].step(y_hat - w)
                    plant[i].step(u)
                elif variant == "measurement_hold":
                    y_hat = th * (upstream - st["y_hat_prev"]) + st["y_hat_prev"]
                    u = ctrl[i].step(y_hat - w)
                    plant[i].step(u)
                    st["y_hat_prev"] = y_hat
                y_prev_hist[i] = yi
    return y, zeta
