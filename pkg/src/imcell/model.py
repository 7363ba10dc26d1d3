"""Domain types: channel states, link-state models, antennas, network setup."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, OptimizerFailedError

_LN10_OVER_10 = math.log(10.0) / 10.0


@dataclass(frozen=True)
class ChannelState:
    """Per-link-state propagation parameters.

    kappa and alpha define the distance law kappa * r**alpha, mu_db and
    sigma_db the log-normal shadowing in dB, and (m, omega) the gamma
    fading shape and mean power.
    """

    name: str
    kappa: float
    alpha: float
    mu_db: float = 0.0
    sigma_db: float = 0.0
    m: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        if self.alpha <= 2.0:
            raise DomainError("path-loss slope must exceed 2")
        if self.kappa <= 0.0:
            raise DomainError("path-loss constant must be positive")
        if self.sigma_db < 0.0:
            raise DomainError("shadowing std must be nonnegative")
        if self.m <= 0.0 or self.omega <= 0.0:
            raise DomainError("fading parameters must be positive")

    @property
    def mu_nat(self):
        return self.mu_db * _LN10_OVER_10

    @property
    def sigma_nat(self):
        return self.sigma_db * _LN10_OVER_10

    @property
    def shadow_moment(self):
        """E[X**(2/alpha)] of the log-normal shadowing, recomputed on use."""
        return math.exp(
            2.0 * self.mu_nat / self.alpha
            + 2.0 * self.sigma_nat ** 2 / self.alpha ** 2
        )

    def path_loss(self, r):
        return self.kappa * np.asarray(r, dtype=float) ** self.alpha

    def path_gain_radius(self, x):
        """Inverse of path_loss: radius whose loss equals x."""
        return (np.asarray(x, dtype=float) / self.kappa) ** (1.0 / self.alpha)


# ---------------------------------------------------------------------------
# link-state probability families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MultiBallModel:
    """Piecewise-constant state probabilities over concentric annuli.

    radii holds the finite ball boundaries D_1 < ... < D_B; annulus b
    covers [D_(b-1), D_b) with D_0 = 0 and an implicit unbounded outer
    annulus. probs maps each state name to its B+1 annulus probabilities.
    """

    radii: tuple
    probs: dict

    def __post_init__(self):
        radii = tuple(float(r) for r in self.radii)
        object.__setattr__(self, "radii", radii)
        probs = {s: tuple(float(q) for q in qs) for s, qs in self.probs.items()}
        object.__setattr__(self, "probs", probs)
        if any(r <= 0 or not math.isfinite(r) for r in radii):
            raise DomainError("ball radii must be positive and finite")
        if any(hi <= lo for lo, hi in zip(radii[:-1], radii[1:])):
            raise DomainError("ball radii must be strictly increasing")
        n = len(radii) + 1
        for s, qs in probs.items():
            if len(qs) != n:
                raise DomainError(
                    "state %r needs %d annulus probabilities" % (s, n)
                )
            if any(q < -1e-12 or q > 1 + 1e-12 for q in qs):
                raise DomainError("annulus probabilities must lie in [0, 1]")
        cols = np.array([probs[s] for s in probs])
        sums = cols.sum(axis=0)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise DomainError("annulus probabilities must sum to 1")

    @property
    def states(self):
        return tuple(self.probs)

    @property
    def ball_count(self):
        return len(self.radii)

    def annulus_index(self, r):
        return np.searchsorted(np.asarray(self.radii), np.asarray(r, dtype=float),
                               side="right")

    def probability(self, state, r):
        qs = np.asarray(self.probs[state])
        return qs[self.annulus_index(r)]


class _LinkModelBase:
    states: tuple

    def probability(self, state, r):
        raise NotImplementedError

    def probabilities(self, r):
        return {s: self.probability(s, r) for s in self.states}


@dataclass(frozen=True)
class ThreeGPPLinkModel(_LinkModelBase):
    a: float
    b: float
    c: float
    states = ("LOS", "NLOS")

    def p_los(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            ratio = np.where(r > 0, self.a / np.where(r > 0, r, 1.0), np.inf)
        base = np.minimum(ratio, self.c)
        e = np.exp(-r / self.b)
        return base * (1.0 - e) + e

    def probability(self, state, r):
        p = self.p_los(r)
        if state == "LOS":
            return p
        if state == "NLOS":
            return 1.0 - p
        raise DomainError("unknown state %r" % (state,))


@dataclass(frozen=True)
class RandomShapeLinkModel(_LinkModelBase):
    a: float
    b: float
    states = ("LOS", "NLOS")

    def p_los(self, r):
        return self.a * np.exp(-self.b * np.asarray(r, dtype=float))

    def probability(self, state, r):
        p = self.p_los(r)
        if state == "LOS":
            return p
        if state == "NLOS":
            return 1.0 - p
        raise DomainError("unknown state %r" % (state,))


@dataclass(frozen=True)
class LinearLinkModel(_LinkModelBase):
    a: float
    b: float
    c: float
    states = ("LOS", "NLOS")

    def p_nlos(self, r):
        r = np.asarray(r, dtype=float)
        return np.clip(np.minimum(self.a * r + self.b, self.c), 0.0, 1.0)

    def probability(self, state, r):
        p = self.p_nlos(r)
        if state == "NLOS":
            return p
        if state == "LOS":
            return 1.0 - p
        raise DomainError("unknown state %r" % (state,))


@dataclass(frozen=True)
class MmWaveLinkModel(_LinkModelBase):
    a: float
    b: float
    c: float
    states = ("LOS", "NLOS", "OUT")

    def p_out(self, r):
        r = np.asarray(r, dtype=float)
        return np.maximum(0.0, 1.0 - np.exp(-self.b * r + self.c))

    def probability(self, state, r):
        r = np.asarray(r, dtype=float)
        p_out = self.p_out(r)
        p_los = (1.0 - p_out) * np.exp(-self.a * r)
        if state == "OUT":
            return p_out
        if state == "LOS":
            return p_los
        if state == "NLOS":
            return 1.0 - p_los - p_out
        raise DomainError("unknown state %r" % (state,))


@dataclass(frozen=True)
class MultiBallLinkModel(_LinkModelBase):
    ball: MultiBallModel

    @property
    def states(self):
        return self.ball.states

    def probability(self, state, r):
        if state not in self.ball.probs:
            raise DomainError("unknown state %r" % (state,))
        return self.ball.probability(state, r)


@dataclass(frozen=True)
class TabulatedLinkModel(_LinkModelBase):
    """Empirical state probabilities given as (r, p) samples per state.

    Interpolation is piecewise linear, clamped to [0, 1] and renormalized
    across states at every query radius.
    """

    grid: tuple
    samples: dict

    def __post_init__(self):
        grid = tuple(float(g) for g in self.grid)
        object.__setattr__(self, "grid", grid)
        samples = {s: tuple(float(v) for v in vs)
                   for s, vs in self.samples.items()}
        object.__setattr__(self, "samples", samples)
        if list(grid) != sorted(grid):
            raise DomainError("tabulated radii must be increasing")
        for s, vs in samples.items():
            if len(vs) != len(grid):
                raise DomainError("state %r sample count mismatch" % (s,))

    @property
    def states(self):
        return tuple(self.samples)

    def probability(self, state, r):
        if state not in self.samples:
            raise DomainError("unknown state %r" % (state,))
        r = np.asarray(r, dtype=float)
        raw = {
            s: np.clip(np.interp(r, self.grid, self.samples[s]), 0.0, 1.0)
            for s in self.samples
        }
        total = sum(raw.values())
        total = np.where(total > 0, total, 1.0)
        return raw[state] / total


def state_probability(model, state, r):
    """Probability that a link of length r is in the given state."""
    if np.any(np.asarray(r, dtype=float) < 0):
        raise DomainError("link length must be nonnegative")
    return model.probability(state, r)


# ---------------------------------------------------------------------------
# antennas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MultiLobePattern:
    """Piecewise-constant antenna gain over the angle off boresight.

    angles holds the lobe boundaries 0 = phi_0 < ... < phi_K = pi and
    gains the K lobe gains; the pattern must integrate to 2*pi over a
    full turn.
    """

    angles: tuple
    gains: tuple

    def __post_init__(self):
        angles = tuple(float(a) for a in self.angles)
        gains = tuple(float(g) for g in self.gains)
        if angles[0] != 0.0:
            angles = (0.0,) + angles
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "gains", gains)
        if abs(angles[-1] - math.pi) > 1e-12:
            raise DomainError("last lobe boundary must be pi")
        if any(b <= a for a, b in zip(angles[:-1], angles[1:])):
            raise DomainError("lobe boundaries must be strictly increasing")
        if len(gains) != len(angles) - 1:
            raise DomainError("need one gain per lobe")
        if any(g < 0 for g in gains):
            raise DomainError("gains must be nonnegative")
        norm = self.normalization()
        if abs(norm - 2.0 * math.pi) > 1e-9:
            raise DomainError(
                "pattern integrates to %.12g, expected 2*pi" % norm
            )

    def normalization(self):
        widths = np.diff(np.asarray(self.angles))
        return float(2.0 * np.dot(widths, np.asarray(self.gains)))

    @property
    def lobe_count(self):
        return len(self.gains)

    @property
    def widths(self):
        """Full angular width 2*(phi_l - phi_(l-1)) of each lobe."""
        return tuple(2.0 * w for w in np.diff(np.asarray(self.angles)))

    def gain(self, theta):
        th = np.abs(
            np.mod(np.asarray(theta, dtype=float) + math.pi, 2.0 * math.pi)
            - math.pi
        )
        idx = np.clip(
            np.searchsorted(np.asarray(self.angles[1:-1]), th, side="right"),
            0, len(self.gains) - 1,
        )
        out = np.asarray(self.gains)[idx]
        if np.isscalar(theta):
            return float(out)
        return out

    @staticmethod
    def normalized(angles, gains):
        """Build a pattern from raw gains, rescaled so it integrates to 2*pi."""
        angles = tuple(float(a) for a in angles)
        if angles[0] != 0.0:
            angles = (0.0,) + angles
        widths = np.diff(np.asarray(angles))
        gains = np.asarray(gains, dtype=float)
        norm = 2.0 * float(np.dot(widths, gains))
        if norm <= 0:
            raise DomainError("pattern has zero power")
        return MultiLobePattern(angles, tuple(gains * (2.0 * math.pi / norm)))


OMNI = MultiLobePattern((0.0, math.pi), (1.0,))


def antenna_gain(pattern, theta):
    """Gain of a multi-lobe pattern at angle theta (wrapped into [-pi, pi))."""
    return pattern.gain(theta)


@dataclass(frozen=True)
class InterfererGainDistribution:
    """Discrete distribution of the product gain seen on an interfering link."""

    gains: tuple
    probabilities: tuple

    def __post_init__(self):
        if abs(sum(self.probabilities) - 1.0) > 1e-12:
            raise DomainError("atom probabilities must sum to 1")

    def mean(self):
        return float(np.dot(self.gains, self.probabilities))


def interferer_gain_distribution(bs, mt):
    """Product-gain atoms for randomly oriented BS and MT patterns."""
    two_pi = 2.0 * math.pi
    gains = []
    probs = []
    for g1, w1 in zip(bs.gains, bs.widths):
        for g2, w2 in zip(mt.gains, mt.widths):
            gains.append(g1 * g2)
            probs.append((w1 / two_pi) * (w2 / two_pi))
    return InterfererGainDistribution(tuple(gains), tuple(probs))


# reference continuous patterns used as fit targets -------------------------


def threegpp_pattern(phi_3db_deg=35.0, att_db=23.0, switch_deg=48.46,
                     peak_gain=9.33):
    """Parabolic-in-dB sector pattern with a constant back lobe."""
    phi_3db = math.radians(phi_3db_deg)
    switch = math.radians(switch_deg)
    floor = peak_gain * 10.0 ** (-att_db / 10.0)

    def pattern(theta):
        th = np.abs(np.asarray(theta, dtype=float))
        main = peak_gain * 10.0 ** (-1.2 * (th / phi_3db) ** 2)
        out = np.where(th <= switch, main, floor)
        if np.isscalar(theta):
            return float(out)
        return out

    return pattern


def uwla_pattern(n_elements=8, spacing=0.5, peak_gain=12.1631):
    """Uniformly weighted linear array steered to boresight.

    The array factor is phase-steered to theta = 0, which places the
    grating lobe at theta = pi for half-wavelength spacing.
    """

    def pattern(theta):
        th = np.asarray(theta, dtype=float)
        x = math.pi * spacing * (np.cos(th) - 1.0)
        num = np.sin(n_elements * x)
        den = n_elements * np.sin(x)
        with np.errstate(invalid="ignore", divide="ignore"):
            af = np.where(np.abs(den) > 1e-12, num / np.where(den != 0, den, 1.0), 1.0)
        out = peak_gain * af ** 2
        if np.isscalar(theta):
            return float(out)
        return out

    return pattern


# multi-lobe fitting ---------------------------------------------------------


_FIT_THETA_MIN = math.radians(0.25)


def _fit_angle_grid(n_grid):
    """Angle samples for pattern fitting, uniform in log angle.

    Antenna patterns live on a dB-versus-log-angle canvas; sampling the
    angle logarithmically keeps the main lobe from being swamped by the
    wide back region.
    """
    return np.geomspace(_FIT_THETA_MIN, math.pi, n_grid)


def multilobe_objective(target, pattern, n_grid=2048, floor=1e-6):
    """Discretized squared log10 error between a pattern and its target."""
    theta = _fit_angle_grid(n_grid)
    y = np.log10(np.maximum(np.asarray(target(theta), dtype=float), floor))
    z = np.log10(np.maximum(pattern.gain(theta), floor))
    return float(np.sum((y - z) ** 2))


def fit_multilobe(target, k, n_grid=2048, floor=1e-6):
    """Best k-lobe approximation of a continuous pattern.

    Minimizes the squared log10-domain error on the log-angle grid. With
    the lobe boundaries restricted to grid midpoints the problem is an
    exact k-segmentation of the log-gain sequence, solved globally by
    dynamic programming; the fitted gains are then rescaled so the
    pattern integrates to 2*pi exactly.
    """
    if k < 1:
        raise DomainError("need at least one lobe")
    theta = _fit_angle_grid(n_grid)
    y = np.log10(np.maximum(np.asarray(target(theta), dtype=float), floor))
    n = len(y)
    if k > n:
        raise DomainError("more lobes than grid points")

    ps = np.concatenate([[0.0], np.cumsum(y)])
    ps2 = np.concatenate([[0.0], np.cumsum(y * y)])

    def seg_cost(i, j):
        # cost of fitting y[i:j] with its mean; i, j broadcastable
        cnt = j - i
        s = ps[j] - ps[i]
        s2 = ps2[j] - ps2[i]
        return s2 - s * s / cnt

    idx = np.arange(n + 1)
    dp = np.full((k + 1, n + 1), np.inf)
    back = np.zeros((k + 1, n + 1), dtype=int)
    dp[0, 0] = 0.0
    for seg in range(1, k + 1):
        for j in range(seg, n + 1):
            i = np.arange(seg - 1, j)
            costs = dp[seg - 1, i] + seg_cost(i, j)
            best = int(np.argmin(costs))
            dp[seg, j] = costs[best]
            back[seg, j] = i[best]
    if not np.isfinite(dp[k, n]):
        raise OptimizerFailedError("segmentation failed")

    bounds = [n]
    j = n
    for seg in range(k, 0, -1):
        j = back[seg, j]
        bounds.append(j)
    bounds = bounds[::-1]

    raw_gains = []
    for i, j in zip(bounds[:-1], bounds[1:]):
        raw_gains.append(10.0 ** ((ps[j] - ps[i]) / (j - i)))
    # lobe boundaries at geometric midpoints between adjacent samples
    angles = [0.0]
    for b in bounds[1:-1]:
        angles.append(math.sqrt(theta[b - 1] * theta[b]))
    angles.append(math.pi)
    return MultiLobePattern.normalized(tuple(angles), raw_gains)


# ---------------------------------------------------------------------------
# network configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NetworkConfig:
    """Densities, resource blocks, powers and antennas of one deployment."""

    lambda_bs: float
    lambda_mt: float
    n_rb: int = 1
    p_bs: float = 0.1
    sigma_n2: float = 0.0
    pattern_bs: MultiLobePattern = OMNI
    pattern_mt: MultiLobePattern = OMNI
    g0: float = None
    full_load: bool = False

    def __post_init__(self):
        if self.lambda_bs <= 0 or self.lambda_mt <= 0:
            raise DomainError("densities must be positive")
        if self.n_rb < 1:
            raise DomainError("need at least one resource block")
        if self.p_bs <= 0:
            raise DomainError("transmit power must be positive")
        if self.sigma_n2 < 0:
            raise DomainError("noise power must be nonnegative")
        if self.g0 is None:
            object.__setattr__(
                self, "g0",
                float(self.pattern_bs.gain(0.0) * self.pattern_mt.gain(0.0)),
            )

    @property
    def p_rb(self):
        """Per-resource-block transmit power under an even power split."""
        return self.p_bs / self.n_rb

    @property
    def r_cell(self):
        """Average cell radius (pi * lambda_bs)**-0.5."""
        return 1.0 / math.sqrt(math.pi * self.lambda_bs)

    def replace(self, **kw):
        data = {
            "lambda_bs": self.lambda_bs,
            "lambda_mt": self.lambda_mt,
            "n_rb": self.n_rb,
            "p_bs": self.p_bs,
            "sigma_n2": self.sigma_n2,
            "pattern_bs": self.pattern_bs,
            "pattern_mt": self.pattern_mt,
            "g0": self.g0,
            "full_load": self.full_load,
        }
        if ("pattern_bs" in kw or "pattern_mt" in kw) and "g0" not in kw:
            data["g0"] = None
        data.update(kw)
        return NetworkConfig(**data)
