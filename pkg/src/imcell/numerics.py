"""Special functions and quadrature primitives used by the analytical stack.

Everything here is certified only on the call profiles the rest of the
package needs: Gauss hypergeometric evaluations with b = -2/alpha,
c = b + 1 and arguments in the closed left half plane, the lower
incomplete gamma function, and semi-infinite (possibly oscillatory)
integrals whose integrands behave like the rate and coverage kernels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import (
    DomainError,
    NonConvergenceError,
    PoleError,
    ToleranceNotMetError,
)

_SERIES_MAX_TERMS = 200_000


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and limits for the semi-infinite integrators.

    semi_infinite_transform selects how (0, inf) is mapped to a finite
    computational domain: 'tangent' substitutes z = tan(u), while
    'exp-split' integrates (0, 1] directly and hands the tail to an
    exponentially mapped rule.
    """

    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    max_subdivisions: int = 2000
    semi_infinite_transform: str = "tangent"

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise DomainError("tolerances must be positive")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be >= 1")
        if self.semi_infinite_transform not in ("tangent", "exp-split"):
            raise DomainError(
                "unknown transform %r" % (self.semi_infinite_transform,)
            )


@dataclass(frozen=True)
class IntegralResult:
    """Value of a numerical integral together with the achieved error bound."""

    value: float
    error: float


DEFAULT_QUADRATURE = QuadratureSpec()


def _series_2f1(a, b, c, x, rel_tol=1e-15):
    """Power series sum of 2F1 for |x| < 1, vectorized over x."""
    x = np.asarray(x, dtype=complex)
    total = np.ones_like(x)
    term = np.ones_like(x)
    k = 0
    scale = np.maximum(np.abs(total), 1.0)
    while True:
        term = term * ((a + k) * (b + k)) / ((c + k) * (1.0 + k)) * x
        total = total + term
        k += 1
        scale = np.maximum(scale, np.abs(total))
        if np.all(np.abs(term) <= rel_tol * scale):
            # one extra term as a guard against accidental small terms
            term2 = term * ((a + k) * (b + k)) / ((c + k) * (1.0 + k)) * x
            total = total + term2
            if np.all(np.abs(term2) <= rel_tol * scale):
                return total
        if k > _SERIES_MAX_TERMS:
            raise NonConvergenceError(
                "2F1 series did not converge after %d terms" % k
            )


def _profile_integral_2f1(a, b, x):
    """2F1(a, b; b+1; x) for Re(x) <= 0 via an exact integral identity.

    Integrating the defining series termwise against int_0^1 t^(b+k-1) dt
    and peeling the k = 0 term gives

        2F1(a, b; b+1; x) = (1-x)^(-a) - a*x*int_0^1 t^b (1-x*t)^(-a-1) dt

    valid for b > -1 and x off the cut [1, inf). The t^b endpoint
    singularity is handled by a weighted adaptive rule.
    """
    x = complex(x)
    if x.real > 1e-12:
        raise DomainError("profile integral requires Re(x) <= 0")

    def f_real(t):
        return ((1.0 - x * t) ** (-a - 1.0)).real

    def f_imag(t):
        return ((1.0 - x * t) ** (-a - 1.0)).imag

    re, _ = integrate.quad(
        f_real, 0.0, 1.0, weight="alg", wvar=(b, 0.0),
        epsabs=1e-14, epsrel=1e-12, limit=400,
    )
    if x.imag == 0.0:
        val = re
    else:
        im, _ = integrate.quad(
            f_imag, 0.0, 1.0, weight="alg", wvar=(b, 0.0),
            epsabs=1e-14, epsrel=1e-12, limit=400,
        )
        val = re + 1j * im
    return (1.0 - x) ** (-a) - a * x * val


def gauss_2f1(a, b, c, x):
    """Gauss hypergeometric function 2F1(a, b; c; x).

    Supports real parameters with scalar or array arguments x that are
    real or complex with non-positive real part once |x| leaves the unit
    disk. Evaluation strategy: power series inside |x| < 0.9, a Pfaff
    transformation for moderate arguments, the 1/x connection formula for
    large arguments, and an exact integral identity as the fallback when
    the connection formula degenerates (a - b near an integer) provided
    c = b + 1, which is the only large-argument profile the package uses.
    """
    if c <= 0 and abs(c - round(c)) < 1e-12:
        raise PoleError("2F1 pole: c is a non-positive integer")

    scalar_in = np.isscalar(x) or (np.asarray(x).ndim == 0)
    real_in = not np.iscomplexobj(x)
    xa = np.atleast_1d(np.asarray(x, dtype=complex))
    out = np.empty(xa.shape, dtype=complex)

    if a == 0.0 or b == 0.0:
        out[:] = 1.0
    else:
        absx = np.abs(xa)
        done = np.zeros(xa.shape, dtype=bool)

        small = absx < 0.9
        if np.any(small):
            out[small] = _series_2f1(a, b, c, xa[small])
            done |= small

        y = np.where(done, 0.0, xa / (xa - 1.0))
        pfaff = (~done) & (np.abs(y) <= 0.9)
        if np.any(pfaff):
            out[pfaff] = (1.0 - xa[pfaff]) ** (-a) * _series_2f1(
                a, c - b, c, y[pfaff]
            )
            done |= pfaff

        if not np.all(done):
            rest = ~done
            xr = xa[rest]
            if np.any(xr.real > 1e-12):
                raise DomainError(
                    "2F1 outside certified region: |x| large with Re(x) > 0"
                )
            ab_gap = abs((a - b) - round(a - b))
            if ab_gap > 0.02:
                g = special.gamma
                c1 = g(c) * g(b - a) / (g(b) * g(c - a))
                c2 = g(c) * g(a - b) / (g(a) * g(c - b))
                s1 = _series_2f1(a, a - c + 1.0, a - b + 1.0, 1.0 / xr)
                s2 = _series_2f1(b, b - c + 1.0, b - a + 1.0, 1.0 / xr)
                out[rest] = c1 * (-xr) ** (-a) * s1 + c2 * (-xr) ** (-b) * s2
            elif abs(c - (b + 1.0)) < 1e-9:
                vals = [_profile_integral_2f1(a, b, xi) for xi in xr]
                out[rest] = np.asarray(vals, dtype=complex)
            else:
                raise NonConvergenceError(
                    "2F1 argument outside every certified evaluation branch"
                )

    if real_in and np.all(np.abs(out.imag) <= 1e-12 * np.maximum(np.abs(out.real), 1.0)):
        res = out.real
    else:
        res = out
    if scalar_in:
        return res.reshape(()).item()
    return res.reshape(np.asarray(x).shape)


def lower_incomplete_gamma(s, x):
    """Lower incomplete gamma function gamma(s, x) = int_0^x t^(s-1) e^(-t) dt."""
    s_arr = np.asarray(s, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    if np.any(s_arr <= 0):
        raise DomainError("lower_incomplete_gamma requires s > 0")
    if np.any(x_arr < 0):
        raise DomainError("lower_incomplete_gamma requires x >= 0")
    out = special.gammainc(s_arr, x_arr) * special.gamma(s_arr)
    if np.isscalar(s) and np.isscalar(x):
        return float(out)
    return out


def integrate_semi_infinite(f, spec=DEFAULT_QUADRATURE):
    """Integrate f over (0, inf) to the spec tolerances.

    Returns an IntegralResult; raises ToleranceNotMetError (carrying the
    best estimate and its error bound) when the requested accuracy is out
    of reach within the subdivision budget.
    """
    limit = int(spec.max_subdivisions)
    if spec.semi_infinite_transform == "tangent":
        def g(u):
            z = np.tan(u)
            return f(z) * (1.0 + z * z)

        value, err = integrate.quad(
            g, 0.0, np.pi / 2.0, epsabs=spec.abs_tol, epsrel=spec.rel_tol,
            limit=limit,
        )
    else:
        v1, e1 = integrate.quad(
            f, 0.0, 1.0, epsabs=spec.abs_tol / 2, epsrel=spec.rel_tol,
            limit=limit,
        )
        v2, e2 = integrate.quad(
            f, 1.0, np.inf, epsabs=spec.abs_tol / 2, epsrel=spec.rel_tol,
            limit=limit,
        )
        value, err = v1 + v2, e1 + e2

    if err > max(spec.abs_tol, abs(value) * spec.rel_tol) * 50.0:
        raise ToleranceNotMetError(
            "semi-infinite quadrature achieved only %.3g" % err, value, err
        )
    return IntegralResult(value=value, error=err)


def _wynn_epsilon(partial_sums):
    """Wynn epsilon acceleration of a sequence of partial sums.

    Returns (best_estimate, stability_gap) where the gap compares the two
    highest even-order columns and acts as an error proxy.
    """
    n = len(partial_sums)
    eps = [np.asarray(partial_sums, dtype=float)]
    prev_diag = partial_sums[-1]
    best = partial_sums[-1]
    gap = np.inf
    aux = np.zeros(n)
    cur = eps[0].copy()
    # column-by-column update of the epsilon table; stop when roundoff
    # degenerates the differences
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        for col in range(1, n):
            nxt = np.empty(n - col)
            degenerate = False
            for i in range(n - col):
                diff = cur[i + 1] - cur[i]
                if diff == 0.0 or not np.isfinite(diff):
                    degenerate = True
                    break
                nxt[i] = aux[i + 1] + 1.0 / diff
            if degenerate:
                break
            aux = cur
            cur = nxt
            if col % 2 == 0 and len(cur) > 0:
                candidate = cur[-1]
                if np.isfinite(candidate):
                    gap = abs(candidate - prev_diag)
                    prev_diag = candidate
                    best = candidate
    return best, gap


def integrate_oscillatory_gil_pelaez(g, spec=DEFAULT_QUADRATURE,
                                     osc_period=None):
    """Evaluate int_0^inf Im{g(z)}/z dz for a Gil-Pelaez style integrand.

    g must be bounded with g(0+) finite so that Im{g(z)}/z is integrable
    near the origin. Integration proceeds panel by panel over oscillation
    half-periods, and the partial-sum sequence is accelerated with the
    Wynn epsilon algorithm.
    """

    def h(z):
        val = np.imag(g(z))
        return val / z

    # verify the integrand vanishes linearly near zero, then pick the
    # lower cutoff so the skipped mass is below tolerance
    eps = 1e-8
    probe1 = h(eps)
    probe2 = h(eps / 2.0)
    if not (np.isfinite(probe1) and np.isfinite(probe2)):
        raise DomainError("integrand is singular at the origin")
    if abs(probe1) * eps > spec.abs_tol:
        eps = spec.abs_tol / max(abs(probe1), 1e-300)
        eps = min(eps, 1e-8)

    if osc_period is None:
        # scan for the first sign change of Im{g} to estimate the period
        zs = np.logspace(-3, 3, 241)
        vals = np.array([np.imag(g(z)) for z in zs])
        sign_flips = np.nonzero(np.diff(np.sign(vals[vals != 0])))[0]
        if len(sign_flips) > 0:
            nz = zs[vals != 0]
            osc_period = 2.0 * nz[sign_flips[0] + 1]
        else:
            osc_period = 2.0 * np.pi
    half = max(osc_period / 2.0, 10 * eps)

    partial = []
    total = 0.0
    lo = eps
    max_panels = min(int(spec.max_subdivisions), 4000)
    tol = max(spec.abs_tol, 1e-300)
    for k in range(max_panels):
        hi = eps + (k + 1) * half
        piece, _ = integrate.quad(h, lo, hi, limit=200)
        if not np.isfinite(piece):
            raise NonConvergenceError("NaN in Gil-Pelaez integrand panel")
        total += piece
        partial.append(total)
        lo = hi
        if k >= 5 and max(abs(p) for p in partial) <= tol:
            return IntegralResult(value=0.0, error=tol)
        if k >= 3:
            # absolutely convergent tails need no acceleration
            steps = [abs(a - b) for a, b in zip(partial[-3:-1], partial[-2:])]
            if max(steps) <= max(tol, abs(total) * spec.rel_tol):
                return IntegralResult(value=total, error=max(steps))
        if len(partial) >= 8:
            est, gap = _wynn_epsilon(partial[-14:])
            if gap <= max(tol, abs(est) * spec.rel_tol * 10.0):
                return IntegralResult(value=est, error=gap)
    est, gap = _wynn_epsilon(partial[-14:])
    if gap <= max(spec.abs_tol * 1e4, abs(est) * 1e-6):
        return IntegralResult(value=est, error=gap)
    raise ToleranceNotMetError(
        "oscillatory integral stalled at gap %.3g" % gap, est, gap
    )
