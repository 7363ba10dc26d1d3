"""Traffic load: cell areas, scheduling and idling probabilities.

The cell-area distribution is the moment-matched gamma surrogate with
shape 3.5; conditioning one user into a cell tilts the shape to 4.5.
p_sel is the chance a typical terminal gets a resource block, p_off the
chance a base station leaves a given block silent. Both reduce to
hypergeometric-series expressions in rho = lambda_mt / lambda_bs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .errors import DomainError, NonConvergenceError
from .intensity import intensity_measure

_SHAPE = 3.5


def cell_area_pdf(lambda_bs, area):
    """Gamma-surrogate density of the serving-cell area."""
    if lambda_bs <= 0:
        raise DomainError("density must be positive")
    area = np.asarray(area, dtype=float)
    rate = _SHAPE * lambda_bs
    log_pdf = (
        _SHAPE * math.log(rate)
        + (_SHAPE - 1.0) * np.log(np.maximum(area, 1e-300))
        - rate * area
        - math.lgamma(_SHAPE)
    )
    out = np.where(area >= 0, np.exp(log_pdf), 0.0)
    if np.isscalar(area) or out.ndim == 0:
        return float(out)
    return out


def _hyp_series_2f1(a, b, c, w, max_terms=200_000):
    """2F1(a, b; c; w) for 0 <= w < 1 by direct summation.

    Terms grow polynomially and decay geometrically, so a cumulative
    product with an explicit geometric tail bound is enough.
    """
    if not 0.0 <= w < 1.0:
        raise DomainError("series argument must lie in [0, 1)")
    if w == 0.0:
        return 1.0
    total = 1.0
    term = 1.0
    for k in range(max_terms):
        term *= (a + k) * (b + k) / ((c + k) * (1.0 + k)) * w
        total += term
        if k > 4:
            ratio = abs((a + k) * (b + k) / ((c + k) * (1.0 + k))) * w
            if ratio < 1.0 and abs(term) * ratio / (1.0 - ratio) < 1e-16 * abs(total):
                return total
    raise NonConvergenceError("hypergeometric load series stalled")


def p_sel(lambda_bs, lambda_mt, n_rb):
    """Probability that a typical terminal is scheduled on a block."""
    rho, n = _check_load_args(lambda_bs, lambda_mt, n_rb)
    w = rho / (_SHAPE + rho)
    log_fa = (
        4.5 * math.log(_SHAPE)
        + gammaln(4.5 + n)
        - gammaln(4.5)
        + n * math.log(rho)
        - (4.5 + n) * math.log(_SHAPE + rho)
    )
    fb = _hyp_series_2f1(1.0, 4.5 + n, 1.0 + n, w) / math.gamma(1.0 + n)
    fc = n * _hyp_series_2f1(1.0, 4.5 + n, 2.0 + n, w) / math.gamma(2.0 + n)
    val = 1.0 - math.exp(log_fa) * (fb - fc)
    return min(max(val, 0.0), 1.0)


def p_off(lambda_bs, lambda_mt, n_rb):
    """Probability that a base station is idle on a given block."""
    rho, n = _check_load_args(lambda_bs, lambda_mt, n_rb)
    w = rho / (_SHAPE + rho)
    log_front = (
        _SHAPE * math.log(_SHAPE)
        - gammaln(_SHAPE)
        + (1.0 + n) * math.log(rho)
        - (4.5 + n) * math.log(_SHAPE + rho)
    )
    f_2n2 = _hyp_series_2f1(1.0, 4.5 + n, 2.0 + n, w)
    pa = math.exp(log_front + gammaln(4.5 + n) - gammaln(2.0 + n)) * f_2n2
    pb = math.exp(log_front + gammaln(4.5 + n) - math.log(n) - gammaln(1.0 + n)) * f_2n2
    log_front_c = (
        _SHAPE * math.log(_SHAPE)
        - gammaln(_SHAPE)
        + (2.0 + n) * math.log(rho)
        - (5.5 + n) * math.log(_SHAPE + rho)
    )
    pc = math.exp(
        log_front_c + gammaln(5.5 + n) - math.log(n) - gammaln(3.0 + n)
    ) * _hyp_series_2f1(2.0, 5.5 + n, 3.0 + n, w)
    val = 1.0 - rho / n - pa + pb + pc
    return min(max(val, 0.0), 1.0)


def _check_load_args(lambda_bs, lambda_mt, n_rb):
    if lambda_bs <= 0 or lambda_mt <= 0:
        raise DomainError("densities must be positive")
    if n_rb < 1:
        raise DomainError("need at least one resource block")
    return lambda_mt / lambda_bs, float(int(n_rb))


@dataclass(frozen=True)
class LoadProfile:
    p_sel: float
    p_off: float
    lambda_bs_active: float
    regime_tags: tuple = ()


def load_profile(lambda_bs, lambda_mt, n_rb, full_load=False):
    """Exact load profile of a deployment triplet."""
    if full_load:
        return LoadProfile(p_sel=p_sel(lambda_bs, lambda_mt, n_rb),
                           p_off=0.0, lambda_bs_active=lambda_bs,
                           regime_tags=("full-load",))
    po = p_off(lambda_bs, lambda_mt, n_rb)
    return LoadProfile(
        p_sel=p_sel(lambda_bs, lambda_mt, n_rb),
        p_off=po,
        lambda_bs_active=(1.0 - po) * lambda_bs,
    )


def asymptotic_load(lambda_bs, lambda_mt, n_rb, regime):
    """Closed-form dense or sparse limits of the load probabilities."""
    rho, n = _check_load_args(lambda_bs, lambda_mt, n_rb)
    if regime == "dense":
        sel = 1.0 - (
            math.exp(gammaln(4.5 + n) - gammaln(4.5) - gammaln(1.0 + n))
            / (1.0 + n)
            * (rho / _SHAPE) ** n
        )
        off = 1.0 - rho / n
        tags = ("dense", "VD-valid") if rho < 1 else ("dense",)
    elif regime == "sparse":
        sel = n / rho
        off = (
            (4.0 / 63.0)
            * _SHAPE ** _SHAPE / math.gamma(_SHAPE)
            * math.exp(gammaln(4.5 + n) - gammaln(1.0 + n))
            * rho ** (-_SHAPE)
        )
        tags = ("sparse", "VS-valid") if rho > 1 else ("sparse",)
    else:
        raise DomainError("regime must be 'dense' or 'sparse'")
    sel = min(max(sel, 0.0), 1.0)
    off = min(max(off, 0.0), 1.0)
    return LoadProfile(p_sel=sel, p_off=off,
                       lambda_bs_active=(1.0 - off) * lambda_bs,
                       regime_tags=tags)


def association_probabilities(model_or_mb, states, lambda_bs, prefer_im=True):
    """Per-state probability that the typical terminal associates there.

    Integrates each state's serving-link density against the survival of
    all states; the measures come from the IM closed form when a
    multi-ball model is supplied (provenance recorded in the result).
    """
    measures = {
        ch.name: intensity_measure(model_or_mb, ch, states, lambda_bs,
                                   prefer_im=prefer_im)
        for ch in states
    }

    def total(x):
        return sum(
            float(np.asarray(m.evaluator(x)).reshape(()))
            for m in measures.values()
        )

    t_mid = _find_mass_center(total)
    out = {}
    for ch in states:
        meas = measures[ch.name]

        def integrand(t, meas=meas):
            x = math.exp(t)
            lam_tot = total(x)
            if lam_tot > 40.0:
                return 0.0
            d = float(np.asarray(meas.derivative(x)).reshape(()))
            return d * math.exp(-lam_tot) * x

        val, _ = integrate.quad(integrand, t_mid - 40.0, t_mid + 12.0,
                                limit=400, epsabs=1e-10, epsrel=1e-8)
        out[ch.name] = val
    provenance = {s: measures[s].provenance for s in measures}
    return out, provenance


def _find_mass_center(total):
    """Log path loss where the total intensity reaches one point."""
    lo, hi = -60.0, 80.0
    f = lambda t: total(math.exp(t)) - 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
