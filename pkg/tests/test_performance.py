import math

import numpy as np
import pytest
from scipy import integrate

from imcell.errors import DomainError, ScopeError
from imcell.model import (
    ChannelState,
    MultiBallModel,
    MultiLobePattern,
    NetworkConfig,
)
from imcell.performance import (
    _Context,
    ase,
    coverage_probability,
    interference_exponent,
    potential_throughput,
    rate_by_state,
    rate_decomposition,
    sweep,
)
from conftest import KAPPA, LAMBDA_MT_DENSE, NOISE_RB, make_states

ONE_BALL = MultiBallModel((38.7305,), {"LOS": (0.3999, 0.0),
                                       "NLOS": (0.6001, 1.0)})


def dense_config(r_cell=60.0, **kw):
    args = dict(lambda_bs=1.0 / (math.pi * r_cell ** 2),
                lambda_mt=LAMBDA_MT_DENSE, n_rb=4, p_bs=0.1,
                sigma_n2=NOISE_RB)
    args.update(kw)
    return NetworkConfig(**args)


class TestInterferenceExponent:
    def test_zero_at_origin(self, states):
        cfg = dense_config()
        assert interference_exponent(states, ONE_BALL, cfg, 0.0, 1e8) == 0.0

    def test_nonpositive_and_decreasing(self, states):
        cfg = dense_config()
        zs = np.logspace(-3, 4, 40)
        vals = interference_exponent(states, ONE_BALL, cfg, zs, 1e8)
        assert np.all(vals <= 1e-12)
        assert np.all(np.diff(vals) <= 1e-12)

    def test_single_ball_first_branch(self, states):
        # serving below both ball edges: the exponent combines the
        # inside-ball term and the edge term of each state
        cfg = dense_config()
        ctx = _Context(ONE_BALL, states, cfg)
        x = float(states[0].path_loss(10.0))
        z = 3.7
        expected = 0.0
        for st in ctx.per_state:
            edge = st.edges[0]
            assert x < edge
            f_z = complex(st.fading_mix_exact(np.array([z]))[0]).real
            f_edge = complex(
                st.fading_mix_exact(np.array([z * x / edge]))[0]).real
            pref = math.pi * ctx.lam_i * st.theta
            expected += pref * st.q[0] * (st.area(x) * f_z
                                          - st.area(edge) * f_edge)
            expected += pref * st.q[1] * st.area(edge) * f_edge
        got = interference_exponent(states, ONE_BALL, cfg, z, x)
        assert got == pytest.approx(expected, rel=1e-4)

    def test_against_monte_carlo_interference_field(self, states):
        # sample the interferer path-loss processes above x from the
        # matched intensity by inversion, then average exp(-w I) directly;
        # the analytic exponent is parameterized by u = P_RB w / x
        cfg = dense_config(r_cell=100.0, full_load=True)
        x = float(states[0].path_loss(30.0))
        w = 1.0 / (cfg.p_rb * 3e8)
        rng = np.random.default_rng(11)
        n_trials = 6000
        from imcell.intensity import im_intensity

        grids = []
        for ch in states:
            xi = np.geomspace(x, x * 1e10, 6000)
            lam_vals = np.asarray(
                im_intensity(ONE_BALL, states, cfg.lambda_bs, ch.name, xi))
            grids.append((xi, lam_vals, ch))
        vals = np.empty(n_trials)
        for t in range(n_trials):
            total = 0.0
            for xi, lam_vals, ch in grids:
                lam_x, lam_top = lam_vals[0], lam_vals[-1]
                n_pts = rng.poisson(lam_top - lam_x)
                if n_pts == 0:
                    continue
                u = lam_x + rng.random(n_pts) * (lam_top - lam_x)
                losses = np.interp(u, lam_vals, xi)
                g = rng.gamma(ch.m, ch.omega / ch.m, n_pts)
                total += float(np.sum(cfg.p_rb * g / losses))
            vals[t] = math.exp(-w * total)
        analytic = interference_exponent(states, ONE_BALL, cfg,
                                         cfg.p_rb * w, x)
        mc = math.log(vals.mean())
        se = vals.std(ddof=1) / math.sqrt(n_trials) / vals.mean()
        assert analytic == pytest.approx(mc, abs=4 * se + 5e-3)


class TestRate:
    def test_ase_scales_linearly_when_terminals_vanish(self, states):
        cfg1 = dense_config(lambda_mt=1e-9)
        cfg2 = dense_config(lambda_mt=2e-9)
        a1 = ase(ONE_BALL, states, cfg1)
        a2 = ase(ONE_BALL, states, cfg2)
        assert a1.ase == pytest.approx(a2.ase / 2.0, rel=1e-3)
        assert a1.ase < 1e-7

    def test_finite_with_noise_floor(self, states):
        res = ase(ONE_BALL, states, dense_config())
        assert np.isfinite(res.ase) and res.ase > 0
        assert res.rate_nats > 0

    def test_relation_between_ase_and_rate(self, states):
        cfg = dense_config()
        res = ase(ONE_BALL, states, cfg)
        assert res.ase == pytest.approx(
            cfg.lambda_mt * res.p_sel * res.rate_nats / math.log(2.0),
            rel=1e-12)

    def test_against_nested_scalar_quadrature(self, states):
        # independent evaluation with scipy nested quad and exact special
        # functions, no shared grids or tables
        cfg = dense_config()
        ctx = _Context(ONE_BALL, states, cfg)
        rates, err, _ = rate_by_state(ONE_BALL, states, cfg)
        from imcell.intensity import im_intensity, im_intensity_derivative

        def oracle(si):
            st = ctx.per_state[si]
            ch = states[si]

            def t_hat(z, x):
                tot = 0.0
                for s2 in ctx.per_state:
                    pref = math.pi * ctx.lam_i * s2.theta
                    e = s2.edges
                    for b in range(len(e)):
                        if x >= e[b]:
                            continue
                        lo = max(x, e[b - 1] if b > 0 else 0.0)
                        f_lo = s2.fading_mix_exact(
                            np.array([z * x / lo]))[0].real
                        f_hi = s2.fading_mix_exact(
                            np.array([z * x / e[b]]))[0].real
                        tot += pref * s2.q[b] * (
                            s2.area(lo) * f_lo - s2.area(e[b]) * f_hi)
                    lo = max(x, e[-1])
                    tot += pref * s2.q[-1] * s2.area(lo) * \
                        s2.fading_mix_exact(np.array([z * x / lo]))[0].real
                return tot

            def inner(x):
                cn = ctx.noise_scale * x

                def f(z):
                    mbar = 1.0 - (1.0 + z * st.omega / st.m) ** (-st.m)
                    ex = t_hat(z / ctx.g0, x) - cn * z
                    return math.exp(max(ex, -700.0)) * mbar / z

                v, _ = integrate.quad(f, 0, np.inf, limit=200)
                return v

            def outer(t):
                x = math.exp(t)
                d = float(im_intensity_derivative(
                    ONE_BALL, states, cfg.lambda_bs, ch.name, x))
                tot = sum(float(im_intensity(
                    ONE_BALL, states, cfg.lambda_bs, c2.name, x))
                    for c2 in states)
                if tot > 38.0:
                    return 0.0
                return d * math.exp(-tot) * inner(x) * x

            v, _ = integrate.quad(outer, math.log(1e5), math.log(1e16),
                                  limit=120, epsrel=1e-7)
            return v

        ref = oracle(0) + oracle(1)
        assert sum(rates.values()) == pytest.approx(ref, rel=2e-4)

    def test_ase_increases_with_boresight_gain(self, states):
        vals = []
        for g0 in (1.0, 3.0, 9.0):
            cfg = dense_config(g0=g0)
            vals.append(ase(ONE_BALL, states, cfg).ase)
        assert vals[0] < vals[1] < vals[2]

    def test_density_invariance_interference_limited(self):
        # single unbounded state, full load, vanishing noise: the classical
        # scale-free network. the rate must not move with the density
        st = (ChannelState("S", 1.0, 4.0, 0.0, 0.0, 1.0, 1.0),)
        mb = MultiBallModel((100.0,), {"S": (1.0, 1.0)})
        rates = []
        for lam in (1e-5, 1e-3):
            cfg = NetworkConfig(lambda_bs=lam, lambda_mt=10 * lam, n_rb=1,
                                p_bs=1.0, sigma_n2=0.0, full_load=True)
            r, _, _ = rate_by_state(mb, st, cfg)
            rates.append(r["S"])
        assert rates[0] == pytest.approx(rates[1], rel=0.02)

    def test_requires_ball_model(self, states):
        with pytest.raises(DomainError):
            ase("nope", states, dense_config())

    def test_sweep_preserves_order(self):
        out = sweep(lambda v: v * v, [3.0, 1.0, 2.0])
        assert out == [9.0, 1.0, 4.0]


class TestCoverage:
    def test_classical_closed_form(self):
        st = (ChannelState("S", 1.0, 4.0, 0.0, 0.0, 1.0, 1.0),)
        mb = MultiBallModel((100.0,), {"S": (1.0, 1.0)})
        cfg = NetworkConfig(lambda_bs=1e-4, lambda_mt=2e-4, n_rb=1,
                            p_bs=1.0, sigma_n2=0.0, full_load=True)
        for t_db in (0.0, 5.0, 10.0):
            t = 10.0 ** (t_db / 10.0)
            cov, _, _ = coverage_probability(mb, st, cfg, t)
            ref = 1.0 / (1.0 + math.sqrt(t) * math.atan(math.sqrt(t)))
            assert cov == pytest.approx(ref, abs=1e-4)

    def test_limits_in_threshold(self, states):
        cfg = dense_config()
        hi, _, _ = coverage_probability(ONE_BALL, states, cfg, 1e4)
        lo, _, _ = coverage_probability(ONE_BALL, states, cfg, 1e-4)
        assert hi < 0.05
        assert lo > 0.95

    def test_nonincreasing_in_threshold(self, states):
        cfg = dense_config()
        ts = np.logspace(-1.5, 2.0, 20)
        covs = [coverage_probability(ONE_BALL, states, cfg, t)[0] for t in ts]
        assert all(b <= a + 1e-6 for a, b in zip(covs[:-1], covs[1:]))

    def test_pt_wiring(self, states):
        cfg = dense_config()
        t = 2.0
        res = potential_throughput(ONE_BALL, states, cfg, t)
        assert res.pt == pytest.approx(
            cfg.lambda_mt * res.p_sel * math.log2(1.0 + t) * res.coverage,
            rel=1e-12)
        assert 0.0 <= res.coverage <= 1.0

    def test_rejects_nonpositive_threshold(self, states):
        with pytest.raises(DomainError):
            potential_throughput(ONE_BALL, states, dense_config(), 0.0)


class TestDecomposition:
    def test_terms_sum_to_rate(self, states):
        cfg = dense_config()
        parts = rate_decomposition(ONE_BALL, states, cfg)
        rates, err, _ = rate_by_state(ONE_BALL, states, cfg)
        assert sum(parts.values()) == pytest.approx(
            sum(rates.values()), rel=1e-9)

    def test_outside_los_vanishes_with_zero_mass(self, states):
        cfg = dense_config()
        parts = rate_decomposition(ONE_BALL, states, cfg)
        assert parts["LOS,out"] == 0.0
        total = sum(parts.values())
        assert parts["LOS,out"] / total < 1e-3

    def test_all_los_degenerate(self, states):
        mb = MultiBallModel((38.7305,), {"LOS": (1.0, 1.0),
                                         "NLOS": (0.0, 0.0)})
        parts = rate_decomposition(mb, states, dense_config())
        assert parts["NLOS,in"] == 0.0
        assert parts["NLOS,out"] == 0.0

    def test_scope_errors(self, states):
        two_ball = MultiBallModel((10.0, 50.0),
                                  {"LOS": (0.9, 0.4, 0.0),
                                   "NLOS": (0.1, 0.6, 1.0)})
        with pytest.raises(ScopeError):
            rate_decomposition(two_ball, states, dense_config())
        with pytest.raises(ScopeError):
            rate_decomposition(ONE_BALL, states[:1], dense_config())

    def test_fitted_los_out_negligible(self, states, rs_fit1):
        parts = rate_decomposition(rs_fit1.multiball, states, dense_config())
        assert parts["LOS,out"] / sum(parts.values()) < 1e-3
