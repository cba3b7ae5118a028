"""Discrete-time LTI primitives: rational transfer functions, state-space
realizations, and the numeric predicates the stability theory is built on
(evaluation, minimality, spectral radius, zero multiplicity at z=1, H-infinity
norm, design-assumption validation).

Conventions
-----------
Polynomial coefficients are stored in descending powers of z, the denominator
is normalized monic, and all systems are single-rate discrete time.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import (
    EvaluationError,
    InvalidParameterError,
    RealizationError,
    UnstableSystemError,
    WellPosednessError,
)

__all__ = [
    "RationalTF",
    "StateSpace",
    "AssumptionReport",
    "headway_tf",
    "complementary_sensitivity",
    "ss_realize",
    "ss_series",
    "ss_similarity",
    "ss_minimal",
    "ss_eval",
    "ss_impulse",
    "zero_multiplicity_at_one",
    "spectral_radius",
    "hinf_norm",
    "validate_vehicle_assumptions",
]

_LEAD_TRIM = 1e-12  # relative threshold for trimming leading polynomial zeros


def _trim(coeffs):
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if c.ndim != 1:
        raise InvalidParameterError("polynomial coefficients must be 1-D")
    if c.size == 0:
        return np.zeros(1)
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return np.zeros(1)
    nz = np.nonzero(np.abs(c) > _LEAD_TRIM * scale)[0]
    if nz.size == 0:
        return np.zeros(1)
    return c[nz[0]:].copy()


class RationalTF:
    """Real rational transfer function in z.

    Parameters
    ----------
    num, den : array_like
        Coefficients in descending powers of z.  The denominator is
        normalized so its leading coefficient is 1.
    """

    __slots__ = ("num", "den")

    def __init__(self, num, den):
        den = _trim(den)
        if np.all(den == 0.0):
            raise InvalidParameterError("denominator is identically zero")
        num = _trim(num)
        lead = den[0]
        self.num = num / lead
        self.den = den / lead
        self.num.setflags(write=False)
        self.den.setflags(write=False)

    @classmethod
    def from_factored(cls, zeros, poles, gain):
        """Build from zero/pole lists (conjugate-closed) and a real gain."""
        num = float(gain) * np.real_if_close(np.poly(np.asarray(zeros, dtype=complex)), tol=1e6)
        den = np.real_if_close(np.poly(np.asarray(poles, dtype=complex)), tol=1e6)
        if np.iscomplexobj(num) or np.iscomplexobj(den):
            raise InvalidParameterError("zero/pole sets must be conjugate-closed")
        return cls(np.real(num), np.real(den))

    @property
    def num_degree(self):
        return len(self.num) - 1 if np.any(self.num != 0.0) else -1

    @property
    def den_degree(self):
        return len(self.den) - 1

    @property
    def is_proper(self):
        return self.num_degree <= self.den_degree

    @property
    def is_strictly_proper(self):
        return self.num_degree < self.den_degree

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return np.polyval(self.num, z) / np.polyval(self.den, z)

    def poles(self):
        return np.roots(self.den)

    def zeros(self):
        if self.num_degree < 0:
            return np.zeros(0, dtype=complex)
        return np.roots(self.num)

    def _coerce(self, other):
        if isinstance(other, RationalTF):
            return other
        return RationalTF([float(other)], [1.0])

    def __mul__(self, other):
        other = self._coerce(other)
        return RationalTF(np.polymul(self.num, other.num), np.polymul(self.den, other.den))

    __rmul__ = __mul__

    def __add__(self, other):
        other = self._coerce(other)
        num = np.polyadd(np.polymul(self.num, other.den), np.polymul(other.num, self.den))
        return RationalTF(num, np.polymul(self.den, other.den))

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        return self + RationalTF(-other.num, other.den)

    def __rsub__(self, other):
        other = self._coerce(other)
        return other - self

    def __neg__(self):
        return RationalTF(-self.num, self.den)

    def cancel(self, tol=1e-9):
        """Remove near-common zero/pole pairs.

        Pairs a numerator root with the closest denominator root whenever
        their distance is below ``tol`` times the root scale, and rebuilds
        both polynomials from the surviving roots.
        """
        if self.num_degree < 0:
            return RationalTF([0.0], [1.0])
        zs = list(np.roots(self.num))
        ps = list(np.roots(self.den))
        scale = max(1.0, max((abs(r) for r in zs + ps), default=1.0))
        kept_z = []
        for zr in zs:
            if ps:
                d = [abs(zr - pr) for pr in ps]
                j = int(np.argmin(d))
                if d[j] <= tol * scale:
                    ps.pop(j)
                    continue
            kept_z.append(zr)
        gain = self.num[0]
        num = gain * np.real(np.poly(np.asarray(kept_z, dtype=complex))) if kept_z else np.array([gain])
        den = np.real(np.poly(np.asarray(ps, dtype=complex))) if ps else np.array([1.0])
        return RationalTF(num, den)

    def __repr__(self):
        return f"RationalTF(num={self.num.tolist()}, den={self.den.tolist()})"


def headway_tf(h):
    """Time-headway feedback filter H(z) = ((1+h) z - h) / z.

    Maps a position signal to position plus h times its one-step backward
    difference; H(1) = 1 for every h.

    Parameters
    ----------
    h : float
        Time-headway constant, h >= 0.
    """
    h = float(h)
    if not np.isfinite(h) or h < 0.0:
        raise InvalidParameterError(f"headway must be finite and >= 0, got {h}")
    if h == 0.0:
        return RationalTF([1.0], [1.0])
    return RationalTF([1.0 + h, -h], [1.0, 0.0])


def complementary_sensitivity(G, K, H):
    """Ideal-communication map from predecessor position to own position.

    Closes the loop e = y_prev - H y, u = K e, y = G u and returns
    T = G K / (1 + G H K) with common factors cancelled.

    Raises
    ------
    WellPosednessError
        If the delay-free part of the loop is algebraic (1 + GHK has no
        well-defined instantaneous inverse), which cannot happen when G*K
        is strictly proper.
    """
    num = np.polymul(np.polymul(G.num, K.num), H.den)
    den = np.polyadd(
        np.polymul(np.polymul(G.den, H.den), K.den),
        np.polymul(np.polymul(G.num, H.num), K.num),
    )
    den_t = _trim(den)
    deg_open = len(np.polymul(np.polymul(G.den, H.den), K.den)) - 1
    if len(den_t) - 1 < deg_open:
        # loop transfer is biproper and its instantaneous gain hits -1
        raise WellPosednessError("delay-free algebraic loop: 1 + GHK loses leading degree")
    T = RationalTF(num, den).cancel()
    if not T.is_proper:
        raise WellPosednessError("closed loop is improper; check that G*K is proper")
    return T


@dataclass(frozen=True)
class StateSpace:
    """Discrete-time state-space quadruple (A, B, C, D)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise InvalidParameterError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise InvalidParameterError(f"B rows {B.shape[0]} != state size {n}")
        if C.shape[1] != n:
            raise InvalidParameterError(f"C cols {C.shape[1]} != state size {n}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise InvalidParameterError(f"D shape {D.shape} not conformable with C,B")
        for name, M in (("A", A), ("B", B), ("C", C), ("D", D)):
            if not np.all(np.isfinite(M)):
                raise InvalidParameterError(f"{name} contains non-finite entries")
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def n_inputs(self):
        return self.B.shape[1]

    @property
    def n_outputs(self):
        return self.C.shape[0]

    def eval(self, z):
        """Frequency response C (zI - A)^{-1} B + D at a complex point."""
        return ss_eval(self, z)


@dataclass
class AssumptionReport:
    """Outcome of the per-vehicle design checks.

    ``t_stable``, ``t_strictly_proper``, ``no_unstable_cancellation`` and
    ``double_integrator`` mirror the standing design assumptions on the
    ideal-communication loop; ``hinf_t`` reports the peak closed-loop gain
    used by the string-stable design convention.
    """

    t_stable: bool
    t_strictly_proper: bool
    no_unstable_cancellation: bool
    double_integrator: bool
    hinf_t: float
    messages: list = field(default_factory=list)

    @property
    def passed(self):
        return (
            self.t_stable
            and self.t_strictly_proper
            and self.no_unstable_cancellation
            and self.double_integrator
        )


def ss_realize(tf):
    """Controllable canonical realization of a proper rational function.

    The realization reproduces the coefficients exactly: with monic
    denominator z^n + a1 z^{n-1} + ... + an and remainder numerator
    b1 z^{n-1} + ... + bn after long division, the top row of A carries
    -a, B = e1 and C = b.
    """
    if not tf.is_proper:
        raise RealizationError(f"improper transfer function (deg num {tf.num_degree} > deg den {tf.den_degree})")
    den = tf.den
    n = len(den) - 1
    num_p = np.concatenate([np.zeros(n + 1 - len(tf.num)), tf.num])
    d = num_p[0]
    if n == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[d]])
    rem = num_p[1:] - d * den[1:]
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    if n > 1:
        A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    return StateSpace(A, B, rem.reshape(1, n), [[d]])


def ss_series(first, second):
    """Cascade u -> first -> second -> y as one structural realization."""
    if first.n_outputs != second.n_inputs:
        raise InvalidParameterError("series interconnection dimensions do not match")
    n1, n2 = first.n_states, second.n_states
    A = np.block([
        [first.A, np.zeros((n1, n2))],
        [second.B @ first.C, second.A],
    ])
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    D = second.D @ first.D
    return StateSpace(A, B, C, D)


def ss_similarity(ss, S):
    """Change of state basis x = S x'; returns (S^-1 A S, S^-1 B, C S, D)."""
    S = np.asarray(S, dtype=float)
    Si = np.linalg.inv(S)
    return StateSpace(Si @ ss.A @ S, Si @ ss.B, ss.C @ S, ss.D)


def _orth_range(M, tol):
    """Orthonormal basis of the numerical column space of M."""
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0:
        return np.zeros((M.shape[0], 0))
    r = int(np.sum(s > tol * max(1.0, s[0])))
    return U[:, :r]


def _reachable_basis(A, B, tol):
    """Orthonormal basis of the reachable subspace, grown Krylov-style."""
    V = _orth_range(B, tol)
    for _ in range(A.shape[0] + 1):
        W = _orth_range(np.hstack([V, A @ V]), tol)
        if W.shape[1] == V.shape[1]:
            return W
        V = W
    return V


def ss_minimal(ss, tol=1e-9):
    """Minimal realization via reachability/observability projections.

    Projects onto the reachable subspace of (A, B), then onto the
    observable quotient (the reachable subspace of the dual), both with a
    singular-value threshold of ``tol * max(1, ||A||)``.  The transfer
    function is preserved; only redundant states are removed.
    """
    if tol <= 0:
        raise InvalidParameterError("tol must be positive")
    thresh = tol * max(1.0, np.linalg.norm(ss.A, 2) if ss.n_states else 1.0)
    V = _reachable_basis(ss.A, ss.B, thresh)
    A1, B1, C1 = V.T @ ss.A @ V, V.T @ ss.B, ss.C @ V
    W = _reachable_basis(A1.T, C1.T, thresh)
    return StateSpace(W.T @ A1 @ W, W.T @ B1, C1 @ W, ss.D)


def ss_eval(ss, z):
    """Evaluate C (zI - A)^{-1} B + D at a complex point z.

    Raises
    ------
    EvaluationError
        If z coincides with an eigenvalue of A to tolerance.
    """
    n = ss.n_states
    if n == 0:
        return ss.D.astype(complex)
    z = complex(z)
    eigs = np.linalg.eigvals(ss.A)
    if np.min(np.abs(eigs - z)) <= 1e-12 * max(1.0, abs(z)):
        raise EvaluationError(f"evaluation point {z} coincides with a system pole")
    X = np.linalg.solve(z * np.eye(n) - ss.A, ss.B.astype(complex))
    return ss.C @ X + ss.D


def ss_impulse(ss, n_samples):
    """Impulse response samples h(0)=D, h(k)=C A^{k-1} B for k>=1."""
    out = np.empty((n_samples, ss.n_outputs, ss.n_inputs))
    out[0] = ss.D
    x = ss.B.copy()
    for k in range(1, n_samples):
        out[k] = ss.C @ x
        x = ss.A @ x
    return out


def zero_multiplicity_at_one(ss, tol=1e-6):
    """Count zeros at z=1 per output row, saturated at 2.

    Uses the stationary-value identities M(1) = C (I-A)^{-1} B + D and
    M'(1) = -C (I-A)^{-2} B instead of polynomial root finding; both are
    compared against ``tol`` times the peak impulse-response magnitude of
    the row, so structurally exact zeros survive benign rounding.

    Requires a single-input system with a stable A.
    """
    if ss.n_inputs != 1:
        raise InvalidParameterError("zero multiplicity test expects a single-input system")
    n = ss.n_states
    if n > 0 and spectral_radius(ss.A) >= 1.0:
        raise UnstableSystemError("zero multiplicity at z=1 requires a stable A")
    if n == 0:
        val1 = ss.D[:, 0]
        val2 = np.zeros_like(val1)
        scale = np.abs(ss.D[:, 0])
    else:
        I = np.eye(n)
        X = np.linalg.solve(I - ss.A, ss.B)
        val1 = (ss.C @ X + ss.D)[:, 0]
        val2 = (ss.C @ np.linalg.solve(I - ss.A, X))[:, 0]
        h = ss_impulse(ss, max(2, 2 * n))[:, :, 0]
        scale = np.max(np.abs(h), axis=0)
    mult = np.zeros(ss.n_outputs, dtype=int)
    for i in range(ss.n_outputs):
        s = scale[i]
        if np.abs(val1[i]) <= tol * s:
            mult[i] = 2 if np.abs(val2[i]) <= tol * s else 1
    return mult


_DENSE_EIG_LIMIT = 4000


def spectral_radius(M):
    """Largest eigenvalue magnitude of a real square matrix.

    Dense eigensolve up to dimension 4000; above that an implicitly
    restarted Arnoldi iteration finds the dominant eigenvalue.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise InvalidParameterError(f"matrix must be square, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidParameterError("matrix contains non-finite entries")
    n = M.shape[0]
    if n == 0:
        return 0.0
    if n <= _DENSE_EIG_LIMIT:
        return float(np.max(np.abs(np.linalg.eigvals(M))))
    vals = scipy.sparse.linalg.eigs(M, k=6, which="LM", return_eigenvectors=False, tol=1e-10)
    return float(np.max(np.abs(vals)))


def _golden_refine(f, lo, hi, iters=80):
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = f(d)
    return max(fc, fd)


def hinf_norm(tf, tol=1e-9, grid=4096):
    """Peak magnitude of a stable transfer function on the unit circle.

    Dense frequency grid over [0, pi] followed by golden-section refinement
    around the best grid cell.
    """
    if tol <= 0:
        raise InvalidParameterError("tol must be positive")
    poles = tf.cancel().poles()
    if poles.size and np.max(np.abs(poles)) >= 1.0:
        raise UnstableSystemError("H-infinity norm requires all poles strictly inside the unit circle")
    w = np.linspace(0.0, np.pi, grid)
    mag = np.abs(tf(np.exp(1j * w)))
    k = int(np.argmax(mag))
    lo = w[max(0, k - 1)]
    hi = w[min(grid - 1, k + 1)]
    f = lambda om: float(np.abs(tf(np.exp(1j * om))))
    return max(float(mag[k]), _golden_refine(f, lo, hi))


_CLUSTER_TOL = 1e-6


def validate_vehicle_assumptions(G, K, h):
    """Check the ideal-communication design assumptions for one vehicle.

    Verifies that the closed loop T = GK/(1+GHK) is stable and strictly
    proper, that the product G*H*K hides no pole/zero cancellation on or
    outside the unit circle, and that K*G carries at least two poles at
    z=1 (double integral action).  The peak gain of T is reported for the
    string-stable design convention; failures are messages, not errors.
    """
    H = headway_tf(h)
    report = AssumptionReport(False, False, False, False, float("nan"))

    try:
        T = complementary_sensitivity(G, K, H)
    except WellPosednessError as exc:
        report.messages.append(f"closed loop ill-posed: {exc}")
        return report

    poles = T.poles()
    report.t_stable = bool(poles.size == 0 or np.max(np.abs(poles)) < 1.0 - 1e-9)
    if not report.t_stable:
        report.messages.append(f"T has a pole of magnitude {np.max(np.abs(poles)):.6f} >= 1")

    report.t_strictly_proper = T.is_strictly_proper
    if not report.t_strictly_proper:
        report.messages.append("T is not strictly proper")

    loop_zeros = np.concatenate([G.zeros(), H.zeros(), K.zeros()])
    loop_poles = np.concatenate([G.poles(), H.poles(), K.poles()])
    report.no_unstable_cancellation = True
    for p in loop_poles:
        if np.abs(p) < 1.0 - _CLUSTER_TOL:
            continue
        if loop_zeros.size and np.min(np.abs(loop_zeros - p)) < _CLUSTER_TOL:
            report.no_unstable_cancellation = False
            report.messages.append(f"pole/zero cancellation at {p:.6f} on/outside the unit circle")
            break

    kg_poles = np.concatenate([K.poles(), G.poles()])
    n_at_one = int(np.sum(np.abs(kg_poles - 1.0) < _CLUSTER_TOL))
    report.double_integrator = n_at_one >= 2
    if not report.double_integrator:
        report.messages.append(f"K*G has {n_at_one} pole(s) at z=1, needs >= 2")

    if report.t_stable:
        report.hinf_t = hinf_norm(T)
        if report.hinf_t > 1.0 + 1e-3:
            report.messages.append(f"|T|_inf = {report.hinf_t:.6f} exceeds the design bound 1")
    else:
        report.hinf_t = float("inf")
    return report
