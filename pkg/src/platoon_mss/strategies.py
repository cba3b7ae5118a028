"""Data-loss compensation strategies and the per-vehicle realization builder.

Each strategy is a linear receiver-side policy wrapped around one scalar
Bernoulli link.  The builder wires plant, controller, headway filter and
compensator into the seven-matrix form

    x(k+1) = A x(k) + B vt(k)
    y(k)   = C_y x(k)
    zeta(k)= C_zeta x(k) + D_zeta y_prev(k)
    v(k)   = C_v x(k) + D_v y_prev(k)

where v is the channel input, vt the channel output, and y_prev the
predecessor position.  The predecessor position reaches the vehicle only
through the lossy link, so the state update carries no direct y_prev term.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidParameterError,
    RealizationError,
    WellPosednessError,
)
from .lti import RationalTF, StateSpace, _reachable_basis, ss_realize

__all__ = [
    "STRATEGY_NAMES",
    "CompensationStrategy",
    "SignalEquations",
    "VehicleSpec",
    "VehicleRealization",
    "build_vehicle_realization",
    "strategy_signal_equations",
]


_VARIANTS = {
    # name -> (compensator state names, channel width)
    "measurement_estimate": (("y_hat_prev", "y_hat_prev2"), 1),
    "error_to_zero": ((), 1),
    "error_hold_control_hold": (("e_hat_prev", "u_prev"), 2),
    "measurement_to_zero": ((), 1),
    "measurement_hold": (("y_hat_prev",), 1),
}

STRATEGY_NAMES = tuple(sorted(_VARIANTS))


@dataclass(frozen=True)
class CompensationStrategy:
    """A named compensation policy plus compensator initial values."""

    variant: str
    initial_values: tuple = ()

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise InvalidParameterError(
                f"unknown strategy '{self.variant}'; choose from {STRATEGY_NAMES}"
            )
        names, _ = _VARIANTS[self.variant]
        vals = tuple(float(v) for v in self.initial_values)
        if len(vals) > len(names):
            raise InvalidParameterError(
                f"strategy '{self.variant}' has {len(names)} compensator state(s), "
                f"got {len(vals)} initial values"
            )
        vals = vals + (0.0,) * (len(names) - len(vals))
        object.__setattr__(self, "initial_values", vals)

    @classmethod
    def from_name(cls, name, initial_values=()):
        return cls(str(name), tuple(initial_values))

    @property
    def compensator_states(self):
        return _VARIANTS[self.variant][0]

    @property
    def n_channel(self):
        return _VARIANTS[self.variant][1]


@dataclass(frozen=True)
class SignalEquations:
    """Per-step difference equations of a strategy, machine-readable.

    ``channel_inputs`` are the expressions entering the Bernoulli link,
    ``reconstructions`` rebuild the receiver-side signals from the link
    output ``vt`` and the compensator states, and ``state_updates`` advance
    the compensator memory.  The Monte-Carlo engine interprets these to
    provide a simulation path independent of the realization builder.
    """

    variant: str
    n_channel: int
    state_names: tuple
    channel_inputs: tuple
    reconstructions: tuple
    controller_input: str
    state_updates: tuple


_EQUATIONS = {
    "measurement_estimate": SignalEquations(
        variant="measurement_estimate",
        n_channel=1,
        state_names=("y_hat_prev", "y_hat_prev2"),
        channel_inputs=("y_prev - (2*y_hat_prev - y_hat_prev2)",),
        reconstructions=(("y_hat", "vt0 + (2*y_hat_prev - y_hat_prev2)"),),
        controller_input="y_hat - w",
        state_updates=(("y_hat_prev", "y_hat"), ("y_hat_prev2", "y_hat_prev")),
    ),
    "error_to_zero": SignalEquations(
        variant="error_to_zero",
        n_channel=1,
        state_names=(),
        channel_inputs=("y_prev - w",),
        reconstructions=(("e_hat", "vt0"),),
        controller_input="e_hat",
        state_updates=(),
    ),
    "error_hold_control_hold": SignalEquations(
        variant="error_hold_control_hold",
        n_channel=2,
        state_names=("e_hat_prev", "u_prev"),
        channel_inputs=("(y_prev - w) - e_hat_prev", "u - u_prev"),
        reconstructions=(("e_hat", "vt0 + e_hat_prev"), ("u_hat", "vt1 + u_prev")),
        controller_input="e_hat",
        state_updates=(("e_hat_prev", "e_hat"), ("u_prev", "u")),
    ),
    "measurement_to_zero": SignalEquations(
        variant="measurement_to_zero",
        n_channel=1,
        state_names=(),
        channel_inputs=("y_prev",),
        reconstructions=(("y_hat", "vt0"),),
        controller_input="y_hat - w",
        state_updates=(),
    ),
    "measurement_hold": SignalEquations(
        variant="measurement_hold",
        n_channel=1,
        state_names=("y_hat_prev",),
        channel_inputs=("y_prev - y_hat_prev",),
        reconstructions=(("y_hat", "vt0 + y_hat_prev"),),
        controller_input="y_hat - w",
        state_updates=(("y_hat_prev", "y_hat"),),
    ),
}


def strategy_signal_equations(variant):
    """Exact per-step update equations of a compensation strategy."""
    if isinstance(variant, CompensationStrategy):
        variant = variant.variant
    if variant not in _EQUATIONS:
        raise InvalidParameterError(f"unknown strategy '{variant}'")
    return _EQUATIONS[variant]


@dataclass(frozen=True)
class VehicleSpec:
    """One vehicle: plant, controller, headway, and loss-compensation policy.

    ``controller_scale`` is a pre-evaluated gain hook (static scheduling on
    channel statistics); ``epsilon`` is the safety distance and is fixed to
    zero so the tracking error keeps its exact two-term form.
    """

    plant: RationalTF
    controller: RationalTF
    headway: float
    strategy: CompensationStrategy
    epsilon: float = 0.0
    controller_scale: float = 1.0

    def __post_init__(self):
        if isinstance(self.strategy, str):
            object.__setattr__(self, "strategy", CompensationStrategy.from_name(self.strategy))
        h = float(self.headway)
        if not np.isfinite(h) or h < 0.0:
            raise InvalidParameterError(f"headway must be finite and >= 0, got {h}")
        if float(self.epsilon) != 0.0:
            raise InvalidParameterError("nonzero safety distance is not supported (fixed 0)")
        if not np.isfinite(self.controller_scale) or self.controller_scale == 0.0:
            raise InvalidParameterError("controller_scale must be finite and nonzero")

    def scaled_controller(self):
        return self.controller * float(self.controller_scale)


@dataclass(frozen=True)
class VehicleRealization:
    """Minimal per-vehicle realization of the strategy-wired closed loop."""

    A: np.ndarray
    B: np.ndarray
    C_y: np.ndarray
    C_zeta: np.ndarray
    C_v: np.ndarray
    D_zeta: np.ndarray
    D_v: np.ndarray
    x0: np.ndarray
    strategy: CompensationStrategy = field(compare=False)

    def __post_init__(self):
        for name in ("A", "B", "C_y", "C_zeta", "C_v", "D_zeta", "D_v", "x0"):
            M = np.asarray(getattr(self, name), dtype=float)
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_v(self):
        return self.B.shape[1]

    def open_loop(self):
        """The (A, [B 0], [C_y; C_zeta; C_v], D) stack as a StateSpace."""
        B = np.hstack([self.B, np.zeros((self.n_x, 1))])
        C = np.vstack([self.C_y, self.C_zeta, self.C_v])
        D = np.vstack([
            np.zeros((1, self.n_v + 1)),
            np.hstack([np.zeros((1, self.n_v)), self.D_zeta]),
            np.hstack([np.zeros((self.n_v, self.n_v)), self.D_v]),
        ])
        return StateSpace(self.A, B, C, D)


class _Loop:
    """Lazy affine signal solver over [states | channel outputs | y_prev]."""

    def __init__(self, width):
        self.width = width
        self._defs = {}
        self._cache = {}
        self._stack = []

    def unit(self, idx):
        row = np.zeros(self.width)
        row[idx] = 1.0
        return row

    def define(self, name, fn):
        self._defs[name] = fn

    def signal(self, name):
        if name in self._cache:
            return self._cache[name]
        if name in self._stack:
            raise WellPosednessError(
                f"delay-free algebraic loop through signal '{name}' "
                f"(require G*K strictly proper)"
            )
        self._stack.append(name)
        try:
            val = self._defs[name]()
        finally:
            self._stack.pop()
        self._cache[name] = val
        return val


def _block_output(loop, ss, offset):
    row = np.zeros(loop.width)
    if ss.n_states:
        row[offset:offset + ss.n_states] = ss.C[0]
    return row


def build_vehicle_realization(spec, tol=1e-9):
    """Wire one vehicle per its strategy and return the minimal realization.

    The interconnection is solved symbolically as affine maps over
    (states, channel outputs, predecessor position); any disallowed
    feedthrough (channel output into the channel input, or inputs into
    the position output) raises instead of being silently dropped.
    """
    strat = spec.strategy
    eqs = _EQUATIONS[strat.variant]
    ssK = ss_realize(spec.scaled_controller())
    ssG = ss_realize(spec.plant)
    h = float(spec.headway)

    nK, nG = ssK.n_states, ssG.n_states
    comp_names = strat.compensator_states
    n_v = strat.n_channel
    off_K, off_G, off_yd = 0, nK, nK + nG
    comp_off = {name: off_yd + 1 + i for i, name in enumerate(comp_names)}
    n_full = off_yd + 1 + len(comp_names)
    width = n_full + n_v + 1

    loop = _Loop(width)
    vt_rows = [loop.unit(n_full + j) for j in range(n_v)]
    y_prev = loop.unit(n_full + n_v)

    dK, dG = ssK.D[0, 0], ssG.D[0, 0]

    def out_K():
        row = _block_output(loop, ssK, off_K)
        return row + dK * loop.signal("k_in") if dK != 0.0 else row

    def out_G():
        row = _block_output(loop, ssG, off_G)
        return row + dG * loop.signal("g_in") if dG != 0.0 else row

    loop.define("u", out_K)
    loop.define("y", out_G)
    loop.define("w", lambda: (1.0 + h) * loop.signal("y") - h * loop.unit(off_yd))
    loop.define("zeta", lambda: y_prev - loop.signal("w"))

    # strategy-specific wiring, transcribed from the per-step equations
    if strat.variant == "error_to_zero":
        loop.define("v0", lambda: y_prev - loop.signal("w"))
        loop.define("e_hat", lambda: vt_rows[0])
        loop.define("k_in", lambda: loop.signal("e_hat"))
        loop.define("g_in", lambda: loop.signal("u"))
        comp_updates = {}
    elif strat.variant == "error_hold_control_hold":
        d_e = loop.unit(comp_off["e_hat_prev"])
        d_u = loop.unit(comp_off["u_prev"])
        loop.define("v0", lambda: (y_prev - loop.signal("w")) - d_e)
        loop.define("v1", lambda: loop.signal("u") - d_u)
        loop.define("e_hat", lambda: vt_rows[0] + d_e)
        loop.define("u_hat", lambda: vt_rows[1] + d_u)
        loop.define("k_in", lambda: loop.signal("e_hat"))
        loop.define("g_in", lambda: loop.signal("u_hat"))
        comp_updates = {"e_hat_prev": "e_hat", "u_prev": "u"}
    elif strat.variant == "measurement_estimate":
        d1 = loop.unit(comp_off["y_hat_prev"])
        d2 = loop.unit(comp_off["y_hat_prev2"])
        eta = 2.0 * d1 - d2
        loop.define("v0", lambda: y_prev - eta)
        loop.define("y_hat", lambda: vt_rows[0] + eta)
        loop.define("k_in", lambda: loop.signal("y_hat") - loop.signal("w"))
        loop.define("g_in", lambda: loop.signal("u"))
        comp_updates = {"y_hat_prev": "y_hat", "y_hat_prev2": None}
    elif strat.variant == "measurement_to_zero":
        loop.define("v0", lambda: y_prev)
        loop.define("y_hat", lambda: vt_rows[0])
        loop.define("k_in", lambda: loop.signal("y_hat") - loop.signal("w"))
        loop.define("g_in", lambda: loop.signal("u"))
        comp_updates = {}
    elif strat.variant == "measurement_hold":
        d1 = loop.unit(comp_off["y_hat_prev"])
        loop.define("v0", lambda: y_prev - d1)
        loop.define("y_hat", lambda: vt_rows[0] + d1)
        loop.define("k_in", lambda: loop.signal("y_hat") - loop.signal("w"))
        loop.define("g_in", lambda: loop.signal("u"))
        comp_updates = {"y_hat_prev": "y_hat"}
    else:  # pragma: no cover - guarded by CompensationStrategy
        raise InvalidParameterError(f"unknown strategy '{strat.variant}'")

    y_row = loop.signal("y")
    zeta_row = loop.signal("zeta")
    v_rows = [loop.signal(f"v{j}") for j in range(n_v)]

    upd = np.zeros((n_full, width))
    if nK:
        upd[off_K:off_K + nK, off_K:off_K + nK] = ssK.A
        upd[off_K:off_K + nK] += ssK.B @ loop.signal("k_in").reshape(1, -1)
    if nG:
        upd[off_G:off_G + nG, off_G:off_G + nG] = ssG.A
        upd[off_G:off_G + nG] += ssG.B @ loop.signal("g_in").reshape(1, -1)
    upd[off_yd] = y_row
    for name, sig in comp_updates.items():
        if sig is None:  # shift register: copies the preceding compensator state
            upd[comp_off[name]] = loop.unit(comp_off[name] - 1)
        else:
            upd[comp_off[name]] = loop.signal(sig)

    s_x, s_vt, i_y0 = slice(0, n_full), slice(n_full, n_full + n_v), n_full + n_v

    if np.any(np.abs(upd[:, i_y0]) > 0.0):
        raise RealizationError("state update depends directly on the predecessor position")
    if np.any(np.abs(y_row[n_full:]) > 0.0):
        raise RealizationError(
            "position output has direct input feedthrough; G (and the loop to it) "
            "must be strictly proper"
        )
    vt_block = np.vstack([r[s_vt] for r in v_rows] + [zeta_row[s_vt]])
    if np.any(np.abs(vt_block) > 0.0):
        raise WellPosednessError(
            "delay-free path from the channel output back to the channel input"
        )

    A = upd[:, s_x]
    B = upd[:, s_vt]
    C_y = y_row[s_x].reshape(1, -1)
    C_zeta = zeta_row[s_x].reshape(1, -1)
    C_v = np.vstack([r[s_x] for r in v_rows])
    D_zeta = np.array([[zeta_row[i_y0]]])
    D_v = np.array([[r[i_y0]] for r in v_rows])

    x0 = np.zeros(n_full)
    for name, val in zip(comp_names, strat.initial_values):
        x0[comp_off[name]] = val

    # reduce to the minimal realization of (vt, y_prev) -> (y, zeta, v)
    C_all = np.vstack([C_y, C_zeta, C_v])
    thresh = tol * max(1.0, np.linalg.norm(A, 2))
    V = _reachable_basis(A, B, thresh)
    A1, B1, C1 = V.T @ A @ V, V.T @ B, C_all @ V
    W = _reachable_basis(A1.T, C1.T, thresh)
    basis = V @ W
    x0_red = basis.T @ x0
    if np.linalg.norm(x0 - basis @ x0_red) > 1e-9 * (1.0 + np.linalg.norm(x0)):
        raise InvalidParameterError(
            "compensator initial values excite states removed by the minimal "
            "reduction; they cannot be represented"
        )
    A_r = W.T @ A1 @ W
    B_r = W.T @ B1
    C_r = C1 @ W

    return VehicleRealization(
        A=A_r,
        B=B_r,
        C_y=C_r[0:1],
        C_zeta=C_r[1:2],
        C_v=C_r[2:],
        D_zeta=D_zeta,
        D_v=D_v,
        x0=x0_red,
        strategy=strat,
    )
