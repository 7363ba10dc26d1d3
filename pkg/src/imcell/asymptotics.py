"""Closed-form regime approximations and deployment-planning diagnostics.

Four operating regimes of the two-state single-ball model admit reduced
rate expressions: very dense (interference set by the terminal density),
dense (all stations active, serving link inside the ball), sparse (noise
matters, both ball regions contribute) and very sparse (outside-ball
service only). Each regime has an accurate double-integral form and,
where available, a weaker single-expression form used for sign analysis.
The planning report locates the predicted local minimum and maximum of
the rate-versus-density curve and cross-checks them numerically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy import optimize

from .errors import ScopeError
from .model import MultiBallModel, interferer_gain_distribution
from .numerics import lower_incomplete_gamma
from .performance import (
    _Context,
    _checked_integral,
    _panel_nodes,
    rate_by_state,
)


@dataclass(frozen=True)
class SingleBallBundle:
    """Constants of the two-state single-ball reduction."""

    los: object
    nlos: object
    d1: float
    q_los_in: float
    q_los_out: float
    config: object
    ctx: object

    @property
    def theta_los_ball(self):
        return self.los.shadow_moment * self.q_los_in * self.d1 ** 2

    @property
    def theta_nlos_out_ball(self):
        return self.nlos.shadow_moment * (1.0 - self.q_los_out) * self.d1 ** 2

    @property
    def phi_nlos_out(self):
        return self.nlos.shadow_moment * (1.0 - self.q_los_out)

    @property
    def p_noise_ball(self):
        c = self.config
        return c.p_rb / (c.sigma_n2 * self.los.kappa * self.d1 ** self.los.alpha)

    @property
    def p_noise_nlos(self):
        c = self.config
        return c.p_rb / (c.sigma_n2 * self.nlos.kappa)


def single_ball_bundle(mb, states, config):
    """Collapse a fitted model to its single-ball reduction."""
    if len(states) != 2:
        raise ScopeError("regime analysis needs exactly two states")
    by_name = {ch.name: ch for ch in states}
    if "LOS" not in by_name or "NLOS" not in by_name:
        raise ScopeError("regime analysis expects LOS and NLOS states")
    q_l = mb.probs["LOS"]
    collapsed = MultiBallModel(
        (mb.radii[0],),
        {"LOS": (q_l[0], q_l[-1]), "NLOS": (1.0 - q_l[0], 1.0 - q_l[-1])},
    )
    ctx = _Context(collapsed, [by_name["LOS"], by_name["NLOS"]], config,
                   p_off_value=0.0)
    return SingleBallBundle(
        los=by_name["LOS"], nlos=by_name["NLOS"], d1=mb.radii[0],
        q_los_in=q_l[0], q_los_out=q_l[-1], config=config, ctx=ctx,
    )


def _mix(bundle, which):
    st = bundle.ctx.per_state[0 if which == "LOS" else 1]
    return st.fading_mix


def _mbar(ch, z):
    return 1.0 - (1.0 + z * ch.omega / ch.m) ** (-ch.m)


def _double_integral(inner_of_y, y_nodes, y_weights):
    vals = np.array([inner_of_y(float(y)) for y in y_nodes])
    return float(np.dot(vals, y_weights))


def _unit_interval_nodes(n_panels=24):
    t, w = _panel_nodes(0.0, 1.0, n_panels)
    return t, w


def rate_vd(bundle, weak=False):
    """Very dense regime: active interferers track the terminal density."""
    cfg = bundle.config
    g0 = cfg.g0
    f_los = _mix(bundle, "LOS")
    los = bundle.los
    rho_i = cfg.lambda_mt / cfg.n_rb
    th = bundle.theta_los_ball
    if weak:
        ratio = cfg.lambda_mt / (cfg.n_rb * cfg.lambda_bs)

        def f(t):
            z = np.exp(t)
            return _mbar(los, z) / (1.0 - ratio * f_los(z / g0))

        val, _ = _checked_integral(f)
        return val

    lam = cfg.lambda_bs
    a_half = los.alpha / 2.0

    def inner(y):
        def f(t):
            z = np.exp(t)
            expo = math.pi * rho_i * y * f_los(z / g0) \
                - math.pi * rho_i * th * f_los((y / th) ** a_half * z / g0)
            return np.exp(np.clip(expo, -700.0, 0.0)) * _mbar(los, z)

        val, _ = _checked_integral(f)
        return val

    # exponential y weight on a log axis
    def outer(t):
        y = np.exp(t)
        return np.array([
            inner(float(yy)) * math.pi * lam * math.exp(-math.pi * lam * yy) * yy
            for yy in np.atleast_1d(y)
        ])

    val, _ = _checked_integral(outer, density=2.0)
    return val


def rate_d(bundle, weak=False):
    """Dense regime: all stations active, serving link inside the ball."""
    cfg = bundle.config
    g0 = cfg.g0
    lam = cfg.lambda_bs
    los = bundle.los
    f_los = _mix(bundle, "LOS")
    f_nlos = _mix(bundle, "NLOS")
    th = bundle.theta_los_ball
    th_n = bundle.theta_nlos_out_ball
    kap_d = (los.kappa / bundle.nlos.kappa) \
        * bundle.d1 ** (los.alpha - bundle.nlos.alpha)
    a_half = los.alpha / 2.0
    pl_th = math.pi * lam * th

    if weak:
        def inner(y):
            def f(t):
                z = np.exp(t)
                expo = (y * f_los(z / g0)
                        - pl_th * f_los((y / pl_th) ** a_half * z / g0)
                        - y)
                return np.exp(np.clip(expo, -700.0, 50.0)) * _mbar(los, z)

            val, _ = _checked_integral(f)
            return val

        def outer(t):
            y = np.exp(t)
            return np.array([inner(float(yy)) * yy for yy in np.atleast_1d(y)])

        val, _ = _checked_integral(outer, density=2.0)
        return val

    y_nodes, y_weights = _unit_interval_nodes()

    def inner(y):
        def f(t):
            z = np.exp(t)
            expo = -pl_th * (
                y - y * f_los(z / g0) + f_los(y ** a_half * z / g0)
            ) + math.pi * lam * th_n * f_nlos(kap_d * y ** a_half * z / g0)
            return np.exp(np.clip(expo, -700.0, 0.0)) * _mbar(los, z)

        val, _ = _checked_integral(f)
        return val

    return pl_th * _double_integral(inner, y_nodes, y_weights)


def _rate_nlos_out_sparse(bundle):
    """Shared outside-ball contribution of the sparse regimes."""
    cfg = bundle.config
    g0 = cfg.g0
    lam = cfg.lambda_bs
    nlos = bundle.nlos
    f_nlos = _mix(bundle, "NLOS")
    phi = bundle.phi_nlos_out
    p_n = bundle.p_noise_nlos
    a_half = nlos.alpha / 2.0
    scale = math.pi * lam * phi

    def inner(y):
        noise = (y / scale) ** a_half / p_n / g0

        def f(t):
            z = np.exp(t)
            expo = -noise * z - (y - y * f_nlos(z / g0))
            return np.exp(np.clip(expo, -700.0, 0.0)) * _mbar(nlos, z)

        val, _ = _checked_integral(f)
        return val

    def outer(t):
        y = np.exp(t)
        return np.array([inner(float(yy)) * yy for yy in np.atleast_1d(y)])

    val, _ = _checked_integral(outer, density=2.0)
    return val


def rate_s(bundle, weak=False):
    """Sparse regime: inside-ball and outside-ball terms together."""
    cfg = bundle.config
    g0 = cfg.g0
    lam = cfg.lambda_bs
    los = bundle.los
    f_los = _mix(bundle, "LOS")
    th = bundle.theta_los_ball
    p_nd = bundle.p_noise_ball
    a_half = los.alpha / 2.0
    pl_th = math.pi * lam * th
    y_nodes, y_weights = _unit_interval_nodes()

    if weak:
        def inner(y):
            def f(t):
                z = np.exp(t)
                susc = y - y * f_los(z / g0) + f_los(y ** a_half * z / g0)
                lin = np.maximum(1.0 - pl_th * susc, 0.0)
                return np.exp(-y ** a_half * z / (p_nd * g0)) \
                    * _mbar(los, z) * lin

            val, _ = _checked_integral(f)
            return val
    else:
        def inner(y):
            def f(t):
                z = np.exp(t)
                expo = (
                    -y ** a_half * z / (p_nd * g0)
                    - pl_th * (y - y * f_los(z / g0)
                               + f_los(y ** a_half * z / g0))
                )
                return np.exp(np.clip(expo, -700.0, 0.0)) * _mbar(los, z)

            val, _ = _checked_integral(f)
            return val

    r_in = pl_th * _double_integral(inner, y_nodes, y_weights)
    return r_in + _rate_nlos_out_sparse(bundle)


def rate_vs(bundle):
    """Very sparse regime; identical to the sparse outside-ball term."""
    return _rate_nlos_out_sparse(bundle)


def nrb_effect_s(n_rb, f_value, alpha):
    """Closed-form block-count factor of the sparse inside-ball rate."""
    if f_value <= 0:
        return float(n_rb)
    s = 2.0 / alpha
    return (s * f_value ** (-s) * n_rb ** (1.0 - s)
            * lower_incomplete_gamma(s, n_rb * f_value))


def blockage_effect_s(d1, z, theta, q_in, alpha, g0):
    """Closed-form ball-radius factor of the sparse inside-ball rate."""
    if d1 <= 0:
        return 0.0
    s = 2.0 / alpha
    arg = d1 ** alpha * z / g0
    return theta * q_in * s * (z / g0) ** (-s) * lower_incomplete_gamma(s, arg)


# ---------------------------------------------------------------------------
# planning report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegimeReport:
    regime: str
    rate_estimate: float
    ase_estimate: float
    validity_flags: dict
    local_min_density: float
    local_max_density: float
    predicted_min_density: float
    predicted_max_density: float
    avoid_range: tuple
    collapsed_from_balls: int
    sweep_densities: tuple
    sweep_rates: tuple

    def to_json(self, **kw):
        return json.dumps(asdict(self), sort_keys=True, **kw)


def classify_regime(config, d1):
    """Regime label from the density ratio and cell-to-ball size."""
    ratio = config.lambda_bs / config.lambda_mt
    r_cell = config.r_cell
    if ratio >= 10.0 and r_cell <= d1 / 3.0:
        return "VD"
    if ratio <= 0.1 and r_cell >= 3.0 * d1:
        return "VS"
    return "D" if r_cell < d1 else "S"


def _full_rate(mb, states, config, lam):
    rates, _, _ = rate_by_state(mb, states, config.replace(lambda_bs=lam))
    return sum(rates.values())


def regime_report(config, fitted: MultiBallModel, states, n_sweep=48):
    """Locate the rate-vs-density extrema and compare with the predictors.

    Multi-ball inputs are collapsed to their first ball for the guideline;
    the report records the collapse so callers can judge the approximation.
    """
    bundle = single_ball_bundle(fitted, states, config)
    mb = MultiBallModel(
        (bundle.d1,),
        {"LOS": (bundle.q_los_in, bundle.q_los_out),
         "NLOS": (1.0 - bundle.q_los_in, 1.0 - bundle.q_los_out)},
    )
    pred_min = config.lambda_mt / config.n_rb
    pred_max = 1.0 / (math.pi * bundle.d1 ** 2)
    expect_extrema = pred_min > pred_max

    lam_lo = min(pred_min, pred_max) / 30.0
    lam_hi = max(pred_min, pred_max) * 30.0
    lams = np.geomspace(lam_lo, lam_hi, n_sweep)
    rates = np.array([_full_rate(mb, states, config, lam) for lam in lams])

    local_min = local_max = None
    logr = np.log(np.maximum(rates, 1e-300))
    for i in range(1, len(lams) - 1):
        if logr[i] < logr[i - 1] - 1e-4 and logr[i] < logr[i + 1] - 1e-4:
            local_min = _golden_refine(
                lambda lam: _full_rate(mb, states, config, lam),
                lams[i - 1], lams[i], lams[i + 1], minimize=True)
        if logr[i] > logr[i - 1] + 1e-4 and logr[i] > logr[i + 1] + 1e-4:
            local_max = _golden_refine(
                lambda lam: _full_rate(mb, states, config, lam),
                lams[i - 1], lams[i], lams[i + 1], minimize=False)

    rate_here = _full_rate(mb, states, config, config.lambda_bs)
    from . import load as load_mod
    sel = load_mod.p_sel(config.lambda_bs, config.lambda_mt, config.n_rb)
    regime = classify_regime(config, bundle.d1)
    flags = {
        "extrema_expected": bool(expect_extrema),
        "density_ratio": config.lambda_bs / config.lambda_mt,
        "r_cell_over_d1": config.r_cell / bundle.d1,
        "collapsed": fitted.ball_count > 1,
    }
    avoid = (pred_max, pred_min) if expect_extrema else ()
    return RegimeReport(
        regime=regime,
        rate_estimate=rate_here,
        ase_estimate=config.lambda_mt * sel * rate_here / math.log(2.0),
        validity_flags=flags,
        local_min_density=local_min,
        local_max_density=local_max,
        predicted_min_density=pred_min,
        predicted_max_density=pred_max,
        avoid_range=avoid,
        collapsed_from_balls=fitted.ball_count,
        sweep_densities=tuple(float(v) for v in lams),
        sweep_rates=tuple(float(v) for v in rates),
    )


def _golden_refine(func, lo, mid, hi, minimize=True):
    sign = 1.0 if minimize else -1.0
    res = optimize.minimize_scalar(
        lambda t: sign * func(math.exp(t)),
        bracket=(math.log(lo), math.log(mid), math.log(hi)),
        method="golden", options={"xtol": 1e-3},
    )
    return math.exp(res.x)
