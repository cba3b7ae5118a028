"""Channel statistics and assembly of the stacked closed-loop platoon.

The channel is a vector of per-link Bernoulli erasures, i.i.d. in time but
possibly correlated across links (given as an explicit joint pmf).  The
assembly stacks the per-vehicle realizations into the block lower
bidiagonal closed loop

    x(k+1) = A x(k) + B y0(k) + calB vb(k)

with diagonal blocks alpha_i = A_i + p_i B_i C_vi and subdiagonal blocks
gamma_i = p_i B_i D_vi C_y(i-1), alongside the open-loop form used by the
sampled simulator.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidModelError, InvalidParameterError
from .lti import StateSpace

__all__ = [
    "ChannelModel",
    "ChannelMoments",
    "PlatoonRealization",
    "channel_moments",
    "sample_channel",
    "sample_channel_path",
    "assemble_platoon",
    "subsystem_tf",
]

_PMF_TOL = 1e-12


@dataclass(frozen=True)
class ChannelModel:
    """Per-link success probabilities, independent or joint-pmf form.

    ``patterns``/``probs`` are None for the independent form; otherwise
    they enumerate the joint distribution of the link vector exactly.
    """

    p: np.ndarray
    patterns: np.ndarray = None
    probs: np.ndarray = None

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if p.ndim != 1 or p.size == 0:
            raise InvalidModelError("need at least one link probability")
        if np.any(p <= 0.0) or np.any(p > 1.0):
            raise InvalidModelError("link probabilities must lie in (0, 1]; a dead link (p=0) is rejected")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        if self.patterns is not None:
            pat = np.asarray(self.patterns, dtype=float)
            pr = np.asarray(self.probs, dtype=float)
            pat.setflags(write=False)
            pr.setflags(write=False)
            object.__setattr__(self, "patterns", pat)
            object.__setattr__(self, "probs", pr)

    @classmethod
    def independent(cls, p):
        return cls(p=np.asarray(p, dtype=float))

    @classmethod
    def joint_pmf(cls, outcomes):
        """Build from [(pattern, probability), ...] with exact marginals.

        Patterns are 0/1 sequences (or strings like "101") of equal length.
        """
        if not outcomes:
            raise InvalidModelError("joint pmf needs at least one outcome")
        pats = []
        probs = []
        for pattern, prob in outcomes:
            if isinstance(pattern, str):
                bits = [int(c) for c in pattern]
            else:
                bits = [int(b) for b in pattern]
            if any(b not in (0, 1) for b in bits):
                raise InvalidModelError(f"pattern {pattern!r} is not a 0/1 vector")
            pats.append(bits)
            probs.append(float(prob))
        pat = np.asarray(pats, dtype=float)
        pr = np.asarray(probs, dtype=float)
        if pat.ndim != 2 or len({len(b) for b in pats}) != 1:
            raise InvalidModelError("all patterns must have the same length")
        if np.any(pr < 0.0):
            raise InvalidModelError("probabilities must be nonnegative")
        if abs(pr.sum() - 1.0) > _PMF_TOL:
            raise InvalidModelError(f"probabilities sum to {pr.sum()!r}, not 1")
        if len({tuple(b) for b in pats}) != len(pats):
            raise InvalidModelError("patterns must be distinct")
        marginals = pr @ pat
        return cls(p=marginals, patterns=pat, probs=pr)

    @property
    def n_links(self):
        return self.p.size

    @property
    def is_independent(self):
        return self.patterns is None

    def covariance(self):
        """Exact N x N covariance of the link vector."""
        if self.is_independent:
            return np.diag(self.p * (1.0 - self.p))
        second = (self.patterns.T * self.probs) @ self.patterns
        return second - np.outer(self.p, self.p)

    def support(self):
        """All patterns with positive probability, with their probabilities."""
        if not self.is_independent:
            keep = self.probs > 0.0
            return self.patterns[keep].copy(), self.probs[keep].copy()
        n = self.n_links
        pats = ((np.arange(2 ** n)[:, None] >> np.arange(n)[None, ::-1]) & 1).astype(float)
        probs = np.prod(np.where(pats == 1.0, self.p, 1.0 - self.p), axis=1)
        keep = probs > 0.0
        return pats[keep], probs[keep]


@dataclass(frozen=True)
class ChannelMoments:
    """Mean and covariance of the channel expanded to the stacked v-vector.

    One physical link per vehicle: the scalar theta_i multiplies every
    component of v_i, so block (i, j) of the expanded covariance is
    Cov(theta_i, theta_j) times a ones block.
    """

    Upsilon: np.ndarray
    P_Theta_expanded: np.ndarray

    def __post_init__(self):
        for name in ("Upsilon", "P_Theta_expanded"):
            M = np.asarray(getattr(self, name), dtype=float)
            M.setflags(write=False)
            object.__setattr__(self, name, M)


def channel_moments(model, widths):
    """Expand the channel mean/covariance to per-vehicle channel widths."""
    widths = [int(w) for w in widths]
    if len(widths) != model.n_links:
        raise InvalidParameterError(
            f"got {len(widths)} widths for {model.n_links} links"
        )
    if any(w < 1 for w in widths):
        raise InvalidParameterError("channel widths must be >= 1")
    Upsilon = np.diag(np.repeat(model.p, widths))
    cov = model.covariance()
    total = sum(widths)
    P = np.zeros((total, total))
    offs = np.concatenate([[0], np.cumsum(widths)])
    for i in range(model.n_links):
        for j in range(model.n_links):
            P[offs[i]:offs[i + 1], offs[j]:offs[j + 1]] = cov[i, j]
    return ChannelMoments(Upsilon=Upsilon, P_Theta_expanded=P)


def sample_channel(model, rng):
    """Draw one link vector Theta(k) from the exact distribution."""
    return sample_channel_path(model, rng, 1)[0]


def sample_channel_path(model, rng, length):
    """Draw ``length`` i.i.d. link vectors as a (length, N) 0/1 array."""
    if model.is_independent:
        return (rng.random((length, model.n_links)) < model.p).astype(float)
    cum = np.cumsum(model.probs)
    cum[-1] = 1.0  # guard rounding in the final bin
    idx = np.searchsorted(cum, rng.random(length), side="right")
    return model.patterns[idx].astype(float)


@dataclass(frozen=True)
class PlatoonRealization:
    """Stacked closed-loop and open-loop matrices with block bookkeeping."""

    vehicles: tuple
    channel: ChannelModel
    A: np.ndarray
    B: np.ndarray
    calA: np.ndarray
    calB: np.ndarray
    C_zeta: np.ndarray
    D_zeta: np.ndarray
    C_v: np.ndarray
    D_v: np.ndarray
    Upsilon: np.ndarray
    P_Theta: np.ndarray
    state_offsets: tuple
    channel_offsets: tuple
    x0: np.ndarray
    C_y: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("A", "B", "calA", "calB", "C_zeta", "D_zeta", "C_v", "D_v",
                     "Upsilon", "P_Theta", "x0", "C_y"):
            M = np.asarray(getattr(self, name), dtype=float)
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n_vehicles(self):
        return len(self.vehicles)

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def n_channel(self):
        return self.C_v.shape[0]

    def state_slice(self, i):
        return slice(self.state_offsets[i], self.state_offsets[i + 1])

    def channel_slice(self, i):
        return slice(self.channel_offsets[i], self.channel_offsets[i + 1])

    def alpha(self, i):
        """Diagonal closed-loop block A_i + p_i B_i C_vi of vehicle i."""
        v = self.vehicles[i]
        return v.A + self.channel.p[i] * v.B @ v.C_v


def assemble_platoon(vehicles, channel):
    """Stack per-vehicle realizations behind a shared channel model.

    Builds both the closed-loop matrices (channel replaced by its mean plus
    the zero-mean multiplicative remainder) and the open-loop block-diagonal
    form the sampled simulator iterates.
    """
    vehicles = tuple(vehicles)
    if len(vehicles) != channel.n_links:
        raise InvalidParameterError(
            f"{len(vehicles)} vehicles but {channel.n_links} channel links"
        )
    for i, v in enumerate(vehicles):
        if v.C_y.shape[0] != 1:
            raise InvalidParameterError(f"vehicle {i} position output is not scalar")

    n = sum(v.n_x for v in vehicles)
    m = sum(v.n_v for v in vehicles)
    N = len(vehicles)
    s_off = np.concatenate([[0], np.cumsum([v.n_x for v in vehicles])]).astype(int)
    c_off = np.concatenate([[0], np.cumsum([v.n_v for v in vehicles])]).astype(int)

    calA = np.zeros((n, n))
    calB = np.zeros((n, m))
    C_y = np.zeros((N, n))
    C_zeta = np.zeros((N, n))
    C_v = np.zeros((m, n))
    D_zeta = np.zeros((N, 1))
    D_v = np.zeros((m, 1))
    x0 = np.zeros(n)

    for i, v in enumerate(vehicles):
        sx = slice(s_off[i], s_off[i + 1])
        sv = slice(c_off[i], c_off[i + 1])
        calA[sx, sx] = v.A
        calB[sx, sv] = v.B
        C_y[i, sx] = v.C_y[0]
        C_zeta[i, sx] = v.C_zeta[0]
        C_v[sv, sx] = v.C_v
        x0[sx] = v.x0
        if i == 0:
            D_zeta[0, 0] = v.D_zeta[0, 0]
            D_v[sv, :] = v.D_v
        else:
            prev = slice(s_off[i - 1], s_off[i])
            C_zeta[i, prev] = v.D_zeta[0, 0] * vehicles[i - 1].C_y[0]
            C_v[sv, prev] = v.D_v @ vehicles[i - 1].C_y

    moments = channel_moments(channel, [v.n_v for v in vehicles])
    A = calA + calB @ moments.Upsilon @ C_v
    B = calB @ moments.Upsilon @ D_v

    return PlatoonRealization(
        vehicles=vehicles,
        channel=channel,
        A=A,
        B=B,
        calA=calA,
        calB=calB,
        C_zeta=C_zeta,
        D_zeta=D_zeta,
        C_v=C_v,
        D_v=D_v,
        Upsilon=moments.Upsilon,
        P_Theta=moments.P_Theta_expanded,
        state_offsets=tuple(s_off.tolist()),
        channel_offsets=tuple(c_off.tolist()),
        x0=x0,
        C_y=C_y,
    )


def subsystem_tf(platoon, which):
    """Extract the mean-loop subsystem from leader position to zeta or v.

    ``which`` selects ``"M11"`` (output zeta, one row per vehicle) or
    ``"M21"`` (output v, one row per channel component).
    """
    if which == "M11":
        return StateSpace(platoon.A, platoon.B, platoon.C_zeta, platoon.D_zeta)
    if which == "M21":
        return StateSpace(platoon.A, platoon.B, platoon.C_v, platoon.D_v)
    raise InvalidParameterError(f"unknown subsystem {which!r}; use 'M11' or 'M21'")
