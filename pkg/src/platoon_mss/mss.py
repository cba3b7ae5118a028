"""Mean-square stability verdicts, per-vehicle conditions, probability
sweeps, and string-behavior peak diagnostics.

The global test checks four things: a stable mean loop, a zero at z=1 in
the leader-to-error map, a zero at z=1 in the leader-to-channel map, and a
stable Kronecker variance operator.  For mutually independent links the
same four checks decouple into per-vehicle conditions on alpha_i,
delta_i and the scalar maps M_a_i, M_b_i.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GuardError, InvalidParameterError, UnsupportedModelError
from .lti import StateSpace, spectral_radius, zero_multiplicity_at_one
from .moments import StationaryMoments, stationary_moments, variance_operator_radius
from .platoon import ChannelModel, assemble_platoon, subsystem_tf

__all__ = [
    "MARGINAL_BAND",
    "MssReport",
    "PerVehicleCondition",
    "StringBehaviorReport",
    "SweepRow",
    "mss_verdict",
    "per_vehicle_conditions",
    "homogeneous_conditions",
    "sweep",
    "string_behavior_report",
]

MARGINAL_BAND = 0.01


def _marginal(rho):
    return abs(rho - 1.0) <= MARGINAL_BAND


@dataclass
class PerVehicleCondition:
    """Spectral radii and z=1 values of one vehicle's decoupled conditions."""

    index: int
    rho_alpha: float
    Ma_at_one: float
    Ma_multiplicity: int
    rho_alpha_kron: float
    Mb_at_one: np.ndarray
    Mb_multiplicity: np.ndarray

    @property
    def mean_ok(self):
        return self.rho_alpha < 1.0 and self.Ma_multiplicity >= 1

    @property
    def var_ok(self):
        return (
            self.rho_alpha < 1.0
            and self.rho_alpha_kron < 1.0
            and bool(np.all(self.Mb_multiplicity >= 1))
        )

    @property
    def marginal(self):
        return _marginal(self.rho_alpha) or _marginal(self.rho_alpha_kron)


@dataclass
class MssReport:
    """Verdict of the global spectral test plus stationary values."""

    rho_A: float
    m11_at_one: np.ndarray
    m11_multiplicity: np.ndarray
    rho_kron: float
    m21_at_one: np.ndarray
    m21_multiplicity: np.ndarray
    mean_converges: bool
    var_converges: bool
    mss: bool
    marginal: bool
    stationary: StationaryMoments = None
    per_vehicle: list = field(default=None)


def _value_at_one(ss):
    n = ss.n_states
    if n == 0:
        return ss.D[:, 0].copy()
    M = np.eye(n) - ss.A
    if np.linalg.matrix_rank(M, tol=1e-12) < n:
        return np.full(ss.n_outputs, np.nan)
    return (ss.C @ np.linalg.solve(M, ss.B) + ss.D)[:, 0]


def mss_verdict(platoon, m0=0.0, tol=1e-6, with_per_vehicle="auto"):
    """Evaluate the exact global convergence conditions on a platoon.

    The mean converges iff the closed loop is stable and the leader-to-error
    map vanishes at z=1; the variance additionally needs the leader-to-channel
    map to vanish there and the Kronecker operator to be stable.  Stationary
    values are filled in for the converging statistics using the leader slope
    ``m0``.  Radii within the marginal band around 1 set the ``marginal``
    flag.  ``with_per_vehicle`` adds the decoupled per-vehicle view for
    independent channels ("auto"), always (True), or never (False).

    The closed loop is block lower triangular, so its spectrum is the union
    of the diagonal blocks; computing the radius block-wise avoids the
    accuracy loss of repeated (defective) eigenvalues in long homogeneous
    platoons.
    """
    rho_A = max(spectral_radius(platoon.alpha(i)) for i in range(platoon.n_vehicles))
    stable = rho_A < 1.0
    M11 = subsystem_tf(platoon, "M11")
    M21 = subsystem_tf(platoon, "M21")
    m11_val = _value_at_one(M11)
    m21_val = _value_at_one(M21)
    if stable:
        m11_mult = zero_multiplicity_at_one(M11, tol=tol)
        m21_mult = zero_multiplicity_at_one(M21, tol=tol)
    else:
        m11_mult = np.zeros(platoon.n_vehicles, dtype=int)
        m21_mult = np.zeros(platoon.n_channel, dtype=int)

    # structural for independent links; may raise GuardError for large
    # correlated platoons, in which case the per-vehicle path is the way out
    rho_kron = variance_operator_radius(platoon)

    mean_ok = stable and bool(np.all(m11_mult >= 1))
    var_ok = stable and bool(np.all(m21_mult >= 1)) and rho_kron < 1.0
    report = MssReport(
        rho_A=rho_A,
        m11_at_one=m11_val,
        m11_multiplicity=m11_mult,
        rho_kron=rho_kron,
        m21_at_one=m21_val,
        m21_multiplicity=m21_mult,
        mean_converges=mean_ok,
        var_converges=var_ok,
        mss=mean_ok and var_ok,
        marginal=_marginal(rho_A) or _marginal(rho_kron),
        stationary=stationary_moments(platoon, m0, tol=tol),
    )
    if with_per_vehicle is True or (with_per_vehicle == "auto" and platoon.channel.is_independent):
        conditions, _ = per_vehicle_conditions(platoon.vehicles, platoon.channel.p, tol=tol)
        report.per_vehicle = conditions
    return report


def _vehicle_condition(vehicle, p, index, tol):
    p = float(p)
    alpha = vehicle.A + p * vehicle.B @ vehicle.C_v
    rho_alpha = spectral_radius(alpha)
    Bm = p * vehicle.B @ vehicle.D_v
    Ma = StateSpace(alpha, Bm, vehicle.C_zeta, vehicle.D_zeta)
    Mb = StateSpace(alpha, Bm, vehicle.C_v, vehicle.D_v)
    delta = p * (1.0 - p) * np.kron(vehicle.B, vehicle.B) @ np.kron(vehicle.C_v, vehicle.C_v)
    rho_kron = spectral_radius(np.kron(alpha, alpha) + delta)
    if rho_alpha < 1.0:
        ma_mult = int(zero_multiplicity_at_one(Ma, tol=tol)[0])
        mb_mult = zero_multiplicity_at_one(Mb, tol=tol)
    else:
        ma_mult = 0
        mb_mult = np.zeros(vehicle.n_v, dtype=int)
    return PerVehicleCondition(
        index=index,
        rho_alpha=rho_alpha,
        Ma_at_one=float(_value_at_one(Ma)[0]),
        Ma_multiplicity=ma_mult,
        rho_alpha_kron=rho_kron,
        Mb_at_one=_value_at_one(Mb),
        Mb_multiplicity=mb_mult,
    )


def per_vehicle_conditions(vehicles, p, tol=1e-6):
    """Decoupled convergence conditions for mutually independent links.

    Returns one condition record per vehicle and the combined verdict
    (every per-vehicle mean and variance condition holds).
    """
    if isinstance(p, ChannelModel):
        if not p.is_independent:
            raise UnsupportedModelError(
                "per-vehicle conditions require mutually independent links"
            )
        p = p.p
    p = np.atleast_1d(np.asarray(p, dtype=float))
    vehicles = tuple(vehicles)
    if p.size != len(vehicles):
        raise InvalidParameterError(f"{len(vehicles)} vehicles but {p.size} probabilities")
    conditions = [
        _vehicle_condition(v, pi, i + 1, tol) for i, (v, pi) in enumerate(zip(vehicles, p))
    ]
    verdict = all(c.mean_ok and c.var_ok for c in conditions)
    return conditions, verdict


def homogeneous_conditions(vehicle, p, tol=1e-6):
    """Single-vehicle conditions of a homogeneous platoon (N-independent)."""
    condition = _vehicle_condition(vehicle, p, 1, tol)
    return condition, condition.mean_ok and condition.var_ok


@dataclass
class SweepRow:
    """One grid point of a probability sweep."""

    p: tuple
    rho_A: float
    rho_kron: float
    m11_norm: float
    m21_norm: float
    mean_ok: bool
    var_ok: bool
    mss: bool
    marginal: bool


def sweep(make_platoon, grids, tol=1e-6):
    """Evaluate the global verdict over a 1- or 2-axis probability grid.

    ``make_platoon`` maps a probability tuple to a freshly assembled
    platoon, so gain hooks that depend on the probabilities are
    re-evaluated at every grid point.  Rows come back in row-major grid
    order.
    """
    grids = [np.atleast_1d(np.asarray(g, dtype=float)) for g in grids]
    if not 1 <= len(grids) <= 2:
        raise InvalidParameterError("sweep supports one or two probability axes")
    for g in grids:
        if np.any(g <= 0.0) or np.any(g > 1.0):
            raise InvalidParameterError("grid values must lie in (0, 1]")
    if len(grids) == 1:
        points = [(float(v),) for v in grids[0]]
    else:
        points = [(float(a), float(b)) for a in grids[0] for b in grids[1]]
    rows = []
    for pt in points:
        platoon = make_platoon(pt)
        report = mss_verdict(platoon, tol=tol, with_per_vehicle=False)
        rows.append(
            SweepRow(
                p=pt,
                rho_A=report.rho_A,
                rho_kron=report.rho_kron,
                m11_norm=float(np.max(np.abs(report.m11_at_one))),
                m21_norm=float(np.max(np.abs(report.m21_at_one))),
                mean_ok=report.mean_converges,
                var_ok=report.var_converges,
                mss=report.mss,
                marginal=report.marginal,
            )
        )
    return rows


@dataclass
class StringBehaviorReport:
    """Per-vehicle peak statistics and their monotonicity along the string."""

    peak_abs_mean: np.ndarray
    peak_variance: np.ndarray
    mean_peaks_nonincreasing: bool
    variance_peaks_nonincreasing: bool


def string_behavior_report(traj, rel_slack=1e-9):
    """Peak |mean| and peak variance per vehicle, with amplification flags.

    A non-increasing peak profile along the string is the string-stable-
    looking pattern; growth is the diagnostic of amplification.  This is a
    finite-horizon diagnostic, not a stability certificate.
    """
    peak_mean = np.max(np.abs(traj.mu_zeta), axis=0)
    if traj.P_zeta is None:
        raise InvalidParameterError("trajectory carries no covariance series")
    peak_var = np.max(np.diagonal(traj.P_zeta, axis1=1, axis2=2), axis=0)

    def nonincreasing(peaks):
        return bool(np.all(peaks[1:] <= peaks[:-1] * (1.0 + rel_slack) + 1e-15))

    return StringBehaviorReport(
        peak_abs_mean=peak_mean,
        peak_variance=peak_var,
        mean_peaks_nonincreasing=nonincreasing(peak_mean),
        variance_peaks_nonincreasing=nonincreasing(peak_var),
    )
