"""Exact propagation of the first and second moments of the tracking error.

The mean obeys the deterministic closed loop driven by the leader position;
the covariance obeys a Lyapunov-like recursion with two Hadamard terms, one
carrying the channel covariance against the v-covariance and one against
the outer product of the v-mean.  Stationary values follow from the
resolvent identities at z=1 once the spectral conditions hold.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import GuardError, InvalidParameterError
from .lti import spectral_radius, zero_multiplicity_at_one
from .platoon import subsystem_tf

__all__ = [
    "MomentTrajectory",
    "StationaryMoments",
    "mean_recursion",
    "covariance_recursion",
    "delta_matrix",
    "stationary_mean",
    "stationary_covariance",
    "stationary_moments",
    "variance_operator_radius",
    "vec",
    "unvec",
]

_DELTA_ENTRY_GUARD = 4 * 10 ** 7


def vec(M):
    """Column-stacking vectorization (matches vec(ABC) = (C' kron A) vec(B))."""
    return np.asarray(M).flatten(order="F")


def unvec(x, rows, cols):
    return np.asarray(x).reshape((rows, cols), order="F")


def _leader_series(leader, horizon):
    """Accept a LeaderProfile-like object or a precomputed position array."""
    if hasattr(leader, "positions"):
        return np.asarray(leader.positions(horizon), dtype=float)
    y0 = np.asarray(leader, dtype=float)
    if y0.ndim != 1 or y0.size < horizon + 1:
        raise InvalidParameterError(
            f"leader series must provide horizon+1 = {horizon + 1} samples"
        )
    return y0[: horizon + 1]


@dataclass
class MomentTrajectory:
    """Time series of the exact moments over k = 0..horizon."""

    horizon: int
    mu_x: np.ndarray
    mu_zeta: np.ndarray
    mu_v: np.ndarray
    P_x: np.ndarray = None
    P_zeta: np.ndarray = None
    P_v: np.ndarray = None


def mean_recursion(platoon, leader, horizon, mu_x0=None):
    """Iterate the exact mean dynamics for k = 0..horizon."""
    if horizon < 1:
        raise InvalidParameterError("horizon must be >= 1")
    y0 = _leader_series(leader, horizon)
    n = platoon.n_states
    mu = platoon.x0.copy() if mu_x0 is None else np.asarray(mu_x0, dtype=float).copy()
    if mu.shape != (n,):
        raise InvalidParameterError(f"initial mean must have shape ({n},)")
    K = horizon
    mu_x = np.empty((K + 1, n))
    mu_zeta = np.empty((K + 1, platoon.n_vehicles))
    mu_v = np.empty((K + 1, platoon.n_channel))
    A, B = platoon.A, platoon.B
    for k in range(K + 1):
        mu_x[k] = mu
        mu_zeta[k] = platoon.C_zeta @ mu + platoon.D_zeta[:, 0] * y0[k]
        mu_v[k] = platoon.C_v @ mu + platoon.D_v[:, 0] * y0[k]
        if k < K:
            mu = A @ mu + B[:, 0] * y0[k]
    return MomentTrajectory(horizon=K, mu_x=mu_x, mu_zeta=mu_zeta, mu_v=mu_v)


def covariance_recursion(platoon, leader, horizon, mu_x0=None, P_x0=None, store_state=True):
    """Iterate mean and covariance dynamics jointly for k = 0..horizon.

    Runs the mean recursion first (the covariance forcing needs the channel
    input mean), then marches the covariance with both Hadamard terms using
    the expanded channel covariance.  Covariances are symmetrized each step.
    """
    traj = mean_recursion(platoon, leader, horizon, mu_x0=mu_x0)
    n = platoon.n_states
    N = platoon.n_vehicles
    m = platoon.n_channel
    K = horizon
    P = np.zeros((n, n)) if P_x0 is None else np.asarray(P_x0, dtype=float).copy()
    if P.shape != (n, n):
        raise InvalidParameterError(f"initial covariance must have shape ({n},{n})")
    A = platoon.A
    calB = platoon.calB
    PT = platoon.P_Theta
    Cz, Cv = platoon.C_zeta, platoon.C_v
    P_x = np.empty((K + 1, n, n)) if store_state else None
    P_zeta = np.empty((K + 1, N, N))
    P_v = np.empty((K + 1, m, m))
    for k in range(K + 1):
        if store_state:
            P_x[k] = P
        P_v[k] = Cv @ P @ Cv.T
        P_zeta[k] = Cz @ P @ Cz.T
        if k < K:
            mv = traj.mu_v[k]
            forcing = calB @ (PT * (P_v[k] + np.outer(mv, mv))) @ calB.T
            P = A @ P @ A.T + forcing
            P = 0.5 * (P + P.T)
    traj.P_x = P_x
    traj.P_zeta = P_zeta
    traj.P_v = P_v
    return traj


def delta_matrix(platoon):
    """Stochastic correction (calB kron calB) diag(vec(P_Theta)) (C_v kron C_v).

    Refuses Kronecker dimensions whose entry count exceeds the memory guard;
    use the per-vehicle conditions for platoons that large.
    """
    n = platoon.n_states
    if n * n * n * n > _DELTA_ENTRY_GUARD:
        raise GuardError(
            f"Kronecker matrix would hold {n * n}x{n * n} entries; "
            "use the per-vehicle (independent-channel) conditions instead"
        )
    BB = np.kron(platoon.calB, platoon.calB)
    CC = np.kron(platoon.C_v, platoon.C_v)
    return BB @ np.diag(vec(platoon.P_Theta)) @ CC


def _stable_mean_loop(platoon):
    # block lower triangular: the spectrum is the union of the diagonal blocks
    if platoon.n_states == 0:
        return True
    return max(spectral_radius(platoon.alpha(i)) for i in range(platoon.n_vehicles)) < 1.0


def variance_operator_radius(platoon):
    """Spectral radius of the Kronecker variance operator A (x) A + Delta.

    For mutually independent links the operator is block lower triangular in
    the vehicle-pair order: off-diagonal pair blocks are alpha_i (x) alpha_j
    and diagonal pair blocks are alpha_i (x) alpha_i + delta_i, so the radius
    reduces to per-vehicle quantities.  Correlated channels fall back to the
    assembled operator (subject to the memory guard).
    """
    if platoon.channel.is_independent:
        rhos = sorted(
            (spectral_radius(platoon.alpha(i)) for i in range(platoon.n_vehicles)),
            reverse=True,
        )
        best = rhos[0] * rhos[1] if len(rhos) > 1 else 0.0
        for i, v in enumerate(platoon.vehicles):
            p = platoon.channel.p[i]
            alpha = platoon.alpha(i)
            delta = p * (1.0 - p) * np.kron(v.B, v.B) @ np.kron(v.C_v, v.C_v)
            best = max(best, spectral_radius(np.kron(alpha, alpha) + delta))
        return float(best)
    return spectral_radius(np.kron(platoon.A, platoon.A) + delta_matrix(platoon))


def stationary_mean(platoon, m0, tol=1e-6):
    """Limit of the tracking-error mean for a ramp leader of slope m0.

    Returns None (divergence flag) when the mean loop is unstable or the
    leader-to-error map has no zero at z=1.  Rows whose zero multiplicity
    is two or more are exactly zero.
    """
    if not _stable_mean_loop(platoon):
        return None
    mult = zero_multiplicity_at_one(subsystem_tf(platoon, "M11"), tol=tol)
    if np.any(mult == 0):
        return None
    n = platoon.n_states
    I = np.eye(n)
    X = np.linalg.solve(I - platoon.A, np.linalg.solve(I - platoon.A, platoon.B))
    mu = -float(m0) * (platoon.C_zeta @ X)[:, 0]
    mu[mult >= 2] = 0.0
    return mu


def stationary_covariance(platoon, m0, tol=1e-6):
    """Limit of the tracking-error covariance for a ramp leader of slope m0.

    Requires the full set of convergence conditions; returns None when the
    variance recursion diverges.  When every row of the leader-to-channel
    map carries a double zero at z=1 the limit is exactly zero.
    """
    if not _stable_mean_loop(platoon):
        return None
    m21 = zero_multiplicity_at_one(subsystem_tf(platoon, "M21"), tol=tol)
    if np.any(m21 == 0):
        return None
    if variance_operator_radius(platoon) >= 1.0:
        return None
    N = platoon.n_vehicles
    if np.all(m21 >= 2):
        return np.zeros((N, N))
    n = platoon.n_states
    kron_op = np.kron(platoon.A, platoon.A) + delta_matrix(platoon)
    I = np.eye(n)
    X = np.linalg.solve(I - platoon.A, np.linalg.solve(I - platoon.A, platoon.B))
    mu_v = -float(m0) * (platoon.C_v @ X)[:, 0]
    mu_v[m21 >= 2] = 0.0
    S = vec(platoon.calB @ (platoon.P_Theta * np.outer(mu_v, mu_v)) @ platoon.calB.T)
    M = np.eye(n * n) - kron_op
    lu, piv = scipy.linalg.lu_factor(M)
    rcond = _rcond_from_lu(M, lu, piv)
    if rcond < 1e-12:
        warnings.warn(
            f"stationary covariance solve is ill conditioned (rcond ~ {rcond:.2e})",
            RuntimeWarning,
        )
    X_stat = scipy.linalg.lu_solve((lu, piv), S)
    P_x = unvec(X_stat, n, n)
    P_x = 0.5 * (P_x + P_x.T)
    return platoon.C_zeta @ P_x @ platoon.C_zeta.T


def _rcond_from_lu(M, lu, piv):
    gecon = scipy.linalg.get_lapack_funcs("gecon", (M,))
    rcond, _ = gecon(lu, np.linalg.norm(M, 1), norm="1")
    return float(rcond)


@dataclass
class StationaryMoments:
    """Corollary-style stationary values with the zero-count bookkeeping."""

    mean_zeta: np.ndarray
    cov_zeta: np.ndarray
    mu_v_stationary: np.ndarray
    m11_multiplicity: np.ndarray
    m21_multiplicity: np.ndarray

    @property
    def mean_diverges(self):
        return self.mean_zeta is None

    @property
    def cov_diverges(self):
        return self.cov_zeta is None


def stationary_moments(platoon, m0, tol=1e-6):
    """Bundle stationary mean/covariance with the z=1 zero multiplicities."""
    stable = _stable_mean_loop(platoon)
    if stable:
        m11 = zero_multiplicity_at_one(subsystem_tf(platoon, "M11"), tol=tol)
        m21 = zero_multiplicity_at_one(subsystem_tf(platoon, "M21"), tol=tol)
    else:
        m11 = np.zeros(platoon.n_vehicles, dtype=int)
        m21 = np.zeros(platoon.n_channel, dtype=int)
    mean = stationary_mean(platoon, m0, tol=tol) if stable else None
    cov = stationary_covariance(platoon, m0, tol=tol) if stable else None
    mu_v = None
    if stable and np.all(m21 >= 1):
        n = platoon.n_states
        I = np.eye(n)
        X = np.linalg.solve(I - platoon.A, np.linalg.solve(I - platoon.A, platoon.B))
        mu_v = -float(m0) * (platoon.C_v @ X)[:, 0]
        mu_v[m21 >= 2] = 0.0
    return StationaryMoments(
        mean_zeta=mean,
        cov_zeta=cov,
        mu_v_stationary=mu_v,
        m11_multiplicity=m11,
        m21_multiplicity=m21,
    )
