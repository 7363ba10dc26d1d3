"""Area spectral efficiency and potential throughput of the matched model.

Both metrics reduce to two-fold integrals once the multi-ball intensity
measure is in place: an outer integral over the serving path loss x
weighted by the serving-link density, and an inner transform-domain
integral over z combining noise, the intended link's fading and the
log-Laplace exponent of the other-cell interference. The inner kernels
are smooth on a log axis, so composite Gauss-Legendre panels with one
halving check give controlled accuracy at vector speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from . import load as load_mod
from .errors import CoverageOutOfRangeError, DomainError, ScopeError
from .intensity import im_intensity, im_intensity_derivative
from .model import MultiBallLinkModel, MultiBallModel, interferer_gain_distribution
from .numerics import gauss_2f1

_GL_NODES, _GL_WEIGHTS = roots_legendre(10)


@dataclass(frozen=True)
class PerformanceResult:
    ase: float = None
    rate_nats: float = None
    pt: float = None
    coverage: float = None
    threshold: float = None
    decomposition: dict = None
    quadrature_error: float = None
    p_sel: float = None
    p_off: float = None


_TABLE_LO, _TABLE_HI, _TABLE_N = -32.0, 39.0, 4096
_MIX_TABLE_CACHE = {}


class _StateCtx:
    """Per-state constants of the interference and serving integrals.

    The atom-averaged suppression exponent F is tabulated once on a log
    grid, separately along the real axis (rate kernel) and the negative
    imaginary axis (coverage kernel); inner integrals then run on pure
    interpolation lookups.
    """

    def __init__(self, ch, mb, atoms):
        self.ch = ch
        self.theta = ch.shadow_moment
        self.kappa = ch.kappa
        self.alpha = ch.alpha
        self.two_over_alpha = 2.0 / ch.alpha
        self.m = ch.m
        self.omega = ch.omega
        self.edges = np.array([ch.kappa * d ** ch.alpha for d in mb.radii])
        self.q = np.asarray(mb.probs[ch.name], dtype=float)
        self.atom_gains = np.asarray(atoms.gains, dtype=float)
        self.atom_probs = np.asarray(atoms.probabilities, dtype=float)
        self._real_table = None
        self._imag_table = None

    def area(self, v):
        """Squared-radius image (v/kappa)^(2/alpha) of a path-loss level."""
        return (v / self.kappa) ** self.two_over_alpha

    def fading_mix_exact(self, w):
        """F(w) <= 0: atom-averaged interference suppression exponent."""
        w = np.atleast_1d(np.asarray(w))
        args = -np.multiply.outer(w, self.atom_gains) * (self.omega / self.m)
        vals = np.asarray(gauss_2f1(self.m, -self.two_over_alpha,
                                    1.0 - self.two_over_alpha, args))
        vals = vals.reshape(len(w), len(self.atom_gains))
        return -((vals - 1.0) @ self.atom_probs)

    def _tables(self, axis):
        key = (axis, self.m, self.alpha, self.omega,
               tuple(self.atom_gains), tuple(self.atom_probs))
        if key in _MIX_TABLE_CACHE:
            return _MIX_TABLE_CACHE[key]
        lv = np.linspace(_TABLE_LO, _TABLE_HI, _TABLE_N)
        if axis == "real":
            f = self.fading_mix_exact(np.exp(lv))
            table = (lv, np.log(-np.real(f)))
        else:
            f = self.fading_mix_exact(-1j * np.exp(lv))
            table = (lv, np.log(np.abs(f)), np.unwrap(np.angle(f)))
        _MIX_TABLE_CACHE[key] = table
        return table

    def fading_mix(self, w):
        """Interpolated F along the real or negative-imaginary axis."""
        w = np.atleast_1d(np.asarray(w))
        if not np.iscomplexobj(w):
            mag = np.asarray(w, dtype=float)
            lv, lf = self._tables("real")
            out = np.zeros_like(mag)
            pos = mag > 0
            lw = np.log(mag[pos])
            intery = np.interp(lw, lv, lf)
            # endpoint power laws: linear below, w^(2/alpha) above
            below = lw < lv[0]
            above = lw > lv[-1]
            intery = np.where(below, lf[0] + (lw - lv[0]), intery)
            intery = np.where(
                above, lf[-1] + self.two_over_alpha * (lw - lv[-1]), intery)
            out[pos] = -np.exp(intery)
            return out
        # negative imaginary axis: w = -1j * v with v >= 0
        v = np.asarray(w.imag) * -1.0
        if np.any(np.abs(w.real) > 1e-9 * np.maximum(np.abs(v), 1.0)) or np.any(v < 0):
            return self.fading_mix_exact(w)
        lv, lmag, phase = self._tables("imag")
        out = np.zeros(w.shape, dtype=complex)
        pos = v > 0
        lw = np.log(v[pos])
        mag_i = np.interp(lw, lv, lmag)
        ph_i = np.interp(lw, lv, phase)
        below = lw < lv[0]
        above = lw > lv[-1]
        mag_i = np.where(below, lmag[0] + (lw - lv[0]), mag_i)
        ph_i = np.where(below, phase[0], ph_i)
        mag_i = np.where(
            above, lmag[-1] + self.two_over_alpha * (lw - lv[-1]), mag_i)
        ph_i = np.where(above, phase[-1], ph_i)
        out[pos] = np.exp(mag_i) * np.exp(1j * ph_i)
        return out


class _Context:
    def __init__(self, mb, states, config, p_off_value=None):
        atoms = interferer_gain_distribution(config.pattern_bs,
                                             config.pattern_mt)
        self.mb = mb
        self.states = list(states)
        self.config = config
        self.per_state = [_StateCtx(ch, mb, atoms) for ch in states]
        if config.full_load:
            self.p_off = 0.0
        elif p_off_value is not None:
            self.p_off = p_off_value
        else:
            self.p_off = load_mod.p_off(config.lambda_bs, config.lambda_mt,
                                        config.n_rb)
        self.lam_i = (1.0 - self.p_off) * config.lambda_bs
        self.g0 = config.g0
        self.noise_scale = config.sigma_n2 / (self.g0 * config.p_rb)

    def t_hat_total(self, u, x):
        """Sum over states of the interference log-MGF exponent at (u, x)."""
        u = np.atleast_1d(np.asarray(u))
        total = np.zeros(u.shape, dtype=u.dtype if np.iscomplexobj(u) else float)
        for st in self.per_state:
            pref = math.pi * self.lam_i * st.theta
            edges = st.edges
            n_ball = len(edges)
            scales = []
            coeffs = []
            for b in range(n_ball):
                hi = edges[b]
                if x >= hi:
                    continue
                lo = max(x, edges[b - 1] if b > 0 else 0.0)
                scales.append(x / lo)
                coeffs.append(st.q[b] * st.area(lo))
                scales.append(x / hi)
                coeffs.append(-st.q[b] * st.area(hi))
            lo = max(x, edges[-1]) if n_ball else x
            scales.append(x / lo)
            coeffs.append(st.q[-1] * st.area(lo))
            args = np.multiply.outer(np.asarray(scales), u)
            f_vals = st.fading_mix(args.ravel()).reshape(args.shape)
            total = total + pref * (np.asarray(coeffs) @ f_vals)
        return total

    def serving_parts(self, x):
        """Per-state derivative and the total measure at path loss x."""
        lam = self.config.lambda_bs
        derivs = [
            im_intensity_derivative(self.mb, self.states, lam, ch.name, x)
            for ch in self.states
        ]
        total = sum(
            im_intensity(self.mb, self.states, lam, ch.name, x)
            for ch in self.states
        )
        return derivs, total


def interference_exponent(states, mb, config, z, x, p_off=None):
    """ln E[exp(-z' I)] with z' the normalized transform variable.

    z may be real (rate integral) or complex (coverage integral); x is the
    serving path loss. The active-interferer density folds in p_off.
    """
    ctx = _Context(mb, states, config, p_off_value=p_off)
    out = ctx.t_hat_total(z, float(x))
    if np.isscalar(z) or np.asarray(z).ndim == 0:
        return complex(out[0]) if np.iscomplexobj(out) else float(out[0])
    return out


# ---------------------------------------------------------------------------
# panel quadrature on a log axis
# ---------------------------------------------------------------------------


def _panel_nodes(lo, hi, n_panels):
    edges = np.linspace(lo, hi, n_panels + 1)
    half = np.diff(edges) / 2.0
    mid = (edges[:-1] + edges[1:]) / 2.0
    t = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return t, w


def _log_axis_integral(fvec, lo, hi, n_panels):
    t, w = _panel_nodes(lo, hi, n_panels)
    return float(np.dot(fvec(t), w))


def _probe_support(fvec, lo=-32.0, hi=28.0, rel=1e-13):
    t = np.linspace(lo, hi, 121)
    vals = np.abs(fvec(t))
    peak = vals.max()
    if peak <= 0.0 or not np.isfinite(peak):
        return None
    keep = np.nonzero(vals > rel * peak)[0]
    t_lo = t[max(keep[0] - 2, 0)]
    t_hi = t[min(keep[-1] + 2, len(t) - 1)]
    return t_lo, t_hi


def _checked_integral(fvec, density=3.0, min_panels=24, extra_panels=0):
    """Integrate fvec over the real line in its active window, with one
    resolution-halving error estimate."""
    span = _probe_support(fvec)
    if span is None:
        return 0.0, 0.0
    lo, hi = span
    n = max(min_panels, int(density * (hi - lo))) + int(extra_panels)
    coarse = _log_axis_integral(fvec, lo, hi, max(n // 2, 8))
    fine = _log_axis_integral(fvec, lo, hi, n)
    err = abs(fine - coarse)
    scale = max(abs(fine), 1e-300)
    if err > 1e-6 * scale:
        finer = _log_axis_integral(fvec, lo, hi, 2 * n)
        err = abs(finer - fine)
        fine = finer
    return fine, err


# ---------------------------------------------------------------------------
# rate / ASE
# ---------------------------------------------------------------------------


def _rate_inner(ctx, st, x):
    """Inner z integral of the rate kernel at serving path loss x."""
    c_noise = ctx.noise_scale * x
    m, om = st.m, st.omega

    def f(t):
        z = np.exp(t)
        mbar = 1.0 - (1.0 + z * om / m) ** (-m)
        expo = ctx.t_hat_total(z / ctx.g0, x) - c_noise * z
        # log-axis change of variables dz/z -> dt
        return np.exp(np.clip(expo, -700.0, 0.0)) * mbar

    val, err = _checked_integral(f)
    return val, err


def _outer_x_nodes(ctx, quality=1.0):
    """Panel nodes in log path loss covering the serving-link density."""
    def total_measure(x):
        _, tot = ctx.serving_parts(np.asarray([x]))
        return float(np.asarray(tot).reshape(()))

    t_lo = _bisect_level(total_measure, 1e-6)
    t_hi = _bisect_level(total_measure, 34.0)
    kinks = sorted(
        t for st in ctx.per_state for t in np.log(st.edges)
        if t_lo < t < t_hi
    )
    edges = [t_lo] + kinks + [t_hi]
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        n = max(4, int(math.ceil(1.2 * quality * (hi - lo))))
        t, w = _panel_nodes(lo, hi, n)
        nodes.append(t)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def _bisect_level(func, level, lo=-80.0, hi=120.0):
    f = lambda t: func(math.exp(t)) - level
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def rate_by_state(mb, states, config, p_off_value=None):
    """E[ln(1 + SINR)] split by serving state, with quadrature error."""
    mb = _as_ball(mb)
    ctx = _Context(mb, states, config, p_off_value=p_off_value)
    t_nodes, t_weights = _outer_x_nodes(ctx)
    x_nodes = np.exp(t_nodes)
    derivs, totals = ctx.serving_parts(x_nodes)
    survive = np.exp(-np.asarray(totals))
    rates = {}
    err_total = 0.0
    for si, ch in enumerate(states):
        dens = np.asarray(derivs[si]) * survive * x_nodes
        inner_vals = np.zeros(len(x_nodes))
        inner_errs = np.zeros(len(x_nodes))
        for i, x in enumerate(x_nodes):
            if dens[i] > 0:
                inner_vals[i], inner_errs[i] = _rate_inner(
                    ctx, ctx.per_state[si], float(x))
        rates[ch.name] = float(np.dot(dens, t_weights * inner_vals))
        err_total += float(np.dot(dens, t_weights * inner_errs))
    return rates, err_total, ctx


def ase(mb, states, config):
    """Area spectral efficiency of the matched model (Shannon-rate based)."""
    rates, err, ctx = rate_by_state(mb, states, config)
    rate_nats = sum(rates.values())
    sel = load_mod.p_sel(config.lambda_bs, config.lambda_mt, config.n_rb)
    value = config.lambda_mt * sel * rate_nats / math.log(2.0)
    return PerformanceResult(
        ase=value, rate_nats=rate_nats, quadrature_error=err,
        p_sel=sel, p_off=ctx.p_off,
    )


# ---------------------------------------------------------------------------
# coverage / potential throughput
# ---------------------------------------------------------------------------


def _coverage_inner(ctx, st, x, threshold):
    """Gil-Pelaez inner integral at serving path loss x."""
    c_noise = ctx.noise_scale * x * threshold
    m, om = st.m, st.omega

    def f(t):
        z = np.exp(t)
        phase = np.exp(1j * z * c_noise)
        mgf_g = (1.0 + 1j * z * om / m) ** (-m)
        expo = ctx.t_hat_total(-1j * z * threshold / ctx.g0, x)
        # the real part is a log-MGF, nonpositive up to roundoff
        expo = np.minimum(expo.real, 0.0) + 1j * expo.imag
        kern = phase * mgf_g * np.exp(expo)
        return kern.imag

    # oscillation count sets the panel density
    extra = 0.0
    if c_noise > 0:
        span = _probe_support(f)
        if span is not None:
            extra = min(c_noise * math.exp(span[1]) / math.pi * 3.0, 6000.0)
    val, err = _checked_integral(f, extra_panels=extra)
    return 0.5 - val / math.pi, err


def coverage_probability(mb, states, config, threshold):
    """Pr{SINR >= threshold} for the typical terminal."""
    mb = _as_ball(mb)
    if threshold <= 0:
        raise DomainError("threshold must be positive")
    ctx = _Context(mb, states, config)
    t_nodes, t_weights = _outer_x_nodes(ctx)
    x_nodes = np.exp(t_nodes)
    derivs, totals = ctx.serving_parts(x_nodes)
    survive = np.exp(-np.asarray(totals))
    total = 0.0
    err_total = 0.0
    for si, ch in enumerate(states):
        dens = np.asarray(derivs[si]) * survive * x_nodes
        for i, x in enumerate(x_nodes):
            if dens[i] <= 0:
                continue
            cov, cerr = _coverage_inner(ctx, ctx.per_state[si], float(x),
                                        threshold)
            total += dens[i] * t_weights[i] * cov
            err_total += dens[i] * t_weights[i] * cerr
    tol = max(1e-4, 10.0 * err_total)
    if total < -tol or total > 1.0 + tol:
        raise CoverageOutOfRangeError(
            "coverage %.6f outside [0, 1]" % total
        )
    return min(max(total, 0.0), 1.0), err_total, ctx


def potential_throughput(mb, states, config, threshold):
    """lambda_mt * p_sel * log2(1+T) * Pr{SINR >= T}."""
    cov, err, ctx = coverage_probability(mb, states, config, threshold)
    sel = load_mod.p_sel(config.lambda_bs, config.lambda_mt, config.n_rb)
    value = config.lambda_mt * sel * math.log2(1.0 + threshold) * cov
    return PerformanceResult(
        pt=value, coverage=cov, threshold=threshold,
        quadrature_error=err, p_sel=sel, p_off=ctx.p_off,
    )


# ---------------------------------------------------------------------------
# the two-state single-ball rate decomposition
# ---------------------------------------------------------------------------


def rate_decomposition(mb, states, config):
    """Rate split by serving state and in/out-ball serving location.

    Exact partition of the Shannon-rate integral: the serving-link
    density divides by state and by whether the serving distance falls
    inside the single ball; interference and survival keep their full
    expressions, so the four terms add up to the unsplit rate.
    """
    mb = _as_ball(mb)
    if len(states) != 2:
        raise ScopeError("decomposition requires exactly two states")
    if mb.ball_count != 1:
        raise ScopeError("decomposition requires a single-ball model")
    ctx = _Context(mb, states, config)
    t_nodes, t_weights = _outer_x_nodes(ctx)
    x_nodes = np.exp(t_nodes)
    _, totals = ctx.serving_parts(x_nodes)
    survive = np.exp(-np.asarray(totals))
    lam = config.lambda_bs
    out = {}
    for si, ch in enumerate(states):
        st = ctx.per_state[si]
        edge = st.edges[0]
        pref = math.pi * lam * st.theta * st.two_over_alpha \
            * st.kappa ** (-st.two_over_alpha)
        slope = pref * x_nodes ** (st.two_over_alpha - 1.0)
        d_in = np.where(x_nodes < edge, st.q[0] * slope, 0.0)
        d_out = np.where(x_nodes >= edge, st.q[1] * slope, 0.0)
        for tag, dens_part in (("in", d_in), ("out", d_out)):
            dens = dens_part * survive * x_nodes
            total = 0.0
            for i, x in enumerate(x_nodes):
                if dens[i] <= 0:
                    continue
                val, _ = _rate_inner(ctx, st, float(x))
                total += dens[i] * t_weights[i] * val
            out["%s,%s" % (ch.name, tag)] = total
    return out


def _as_ball(mb):
    if isinstance(mb, MultiBallLinkModel):
        return mb.ball
    if isinstance(mb, MultiBallModel):
        return mb
    raise DomainError("analytic performance needs a multi-ball model")


def sweep(func, grid, workers=1):
    """Evaluate func over grid points, optionally across processes,
    preserving grid order in the results."""
    if workers <= 1:
        return [func(g) for g in grid]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, grid))
