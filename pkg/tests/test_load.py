import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import gammaln

from imcell.errors import DomainError
from imcell.load import (
    association_probabilities,
    asymptotic_load,
    cell_area_pdf,
    load_profile,
    p_off,
    p_sel,
)
from imcell.model import MultiBallModel, RandomShapeLinkModel
from conftest import make_states


# truncated-series oracles built from the crowd distributions of the
# moment-matched cell-area surrogate
def _pmf_tagged(n, rho):
    return math.exp(
        4.5 * math.log(3.5) + gammaln(n + 4.5) - gammaln(n + 1.0)
        - gammaln(4.5) + n * math.log(rho) - (n + 4.5) * math.log(3.5 + rho))


def _pmf_plain(n, rho):
    return math.exp(
        3.5 * math.log(3.5) + gammaln(n + 3.5) - gammaln(n + 1.0)
        - gammaln(3.5) + n * math.log(rho) - (n + 3.5) * math.log(3.5 + rho))


def p_sel_series(rho, n_rb, n_max=120_000):
    total = 0.0
    for n in range(n_max):
        p = _pmf_tagged(n, rho)
        total += p if n < n_rb else (n_rb / (n + 1.0)) * p
        if n > 10 * rho + 300 and p < 1e-18:
            break
    return total


def p_off_series(rho, n_rb):
    return sum((1.0 - n / n_rb) * _pmf_plain(n, rho)
               for n in range(int(n_rb) + 1))


class TestCellArea:
    def test_normalization(self):
        lam = 2.5e-4
        val, _ = integrate.quad(lambda a: cell_area_pdf(lam, a), 0, np.inf,
                                limit=300)
        assert val == pytest.approx(1.0, rel=1e-9)

    def test_mean_is_inverse_density(self):
        lam = 2.5e-4
        val, _ = integrate.quad(lambda a: a * cell_area_pdf(lam, a), 0,
                                np.inf, limit=300)
        assert val == pytest.approx(1.0 / lam, rel=1e-9)

    def test_mode(self):
        lam = 1e-3
        mode = (2.5 / 3.5) / lam
        grid = np.linspace(0.2 * mode, 3.0 * mode, 4001)
        pdf = cell_area_pdf(lam, grid)
        assert grid[np.argmax(pdf)] == pytest.approx(mode, rel=2e-3)


class TestLoadFormulas:
    GRID = [(rho, n) for rho in (0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0)
            for n in (1, 2, 4, 8)]

    @pytest.mark.parametrize("rho,n", GRID)
    def test_p_sel_matches_series(self, rho, n):
        assert abs(p_sel(1.0, rho, n) - p_sel_series(rho, n)) < 1e-8

    @pytest.mark.parametrize("rho,n", GRID)
    def test_p_off_matches_series(self, rho, n):
        assert abs(p_off(1.0, rho, n) - p_off_series(rho, n)) < 1e-8

    def test_no_terminals_limit(self):
        assert p_sel(1.0, 1e-9, 4) == pytest.approx(1.0, abs=1e-8)
        assert p_off(1.0, 1e-9, 4) == pytest.approx(1.0, abs=1e-8)

    def test_sparse_p_sel_limit(self):
        # heavily loaded: selection chance approaches n_rb / rho
        assert p_sel(1.0, 100.0, 4) == pytest.approx(0.04, rel=0.10)

    def test_monotone_in_station_density(self):
        lams = np.linspace(0.5, 10.0, 12)
        sel = [p_sel(l, 5.0, 2) for l in lams]
        act = [1.0 - p_off(l, 5.0, 2) for l in lams]
        assert all(b >= a - 1e-12 for a, b in zip(sel[:-1], sel[1:]))
        assert all(b <= a + 1e-12 for a, b in zip(act[:-1], act[1:]))

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            p_sel(0.0, 1.0, 1)
        with pytest.raises(DomainError):
            p_off(1.0, 1.0, 0)

    def test_full_load_profile(self):
        prof = load_profile(1.0, 2.0, 2, full_load=True)
        assert prof.p_off == 0.0
        assert prof.lambda_bs_active == 1.0


class TestAsymptoticLoad:
    @pytest.mark.parametrize("n", [1, 2, 4, 8])
    def test_dense_limits_within_two_percent(self, n):
        dense = asymptotic_load(1.0, 0.01, n, "dense")
        assert abs(dense.p_sel / p_sel(1.0, 0.01, n) - 1.0) < 0.02
        assert abs(dense.p_off / p_off(1.0, 0.01, n) - 1.0) < 0.02

    @pytest.mark.parametrize("n", [1, 2, 4, 8])
    def test_sparse_p_sel_within_two_percent(self, n):
        sparse = asymptotic_load(1.0, 100.0, n, "sparse")
        assert abs(sparse.p_sel / p_sel(1.0, 100.0, n) - 1.0) < 0.02

    @pytest.mark.parametrize("n", [1, 2, 4, 8])
    @pytest.mark.xfail(
        strict=True,
        reason="the sparse idle-probability limit converges like "
               "(1 + 3.5/rho)**-3.5, an 11-31 percent relative gap at "
               "rho = 100; two percent is unreachable at this operating "
               "point (see the decisions ledger)")
    def test_sparse_p_off_within_two_percent(self, n):
        sparse = asymptotic_load(1.0, 100.0, n, "sparse")
        assert abs(sparse.p_off / p_off(1.0, 100.0, n) - 1.0) < 0.02

    def test_sparse_p_off_limit_is_correct_leading_order(self):
        # the closed form is the true rho -> inf leading coefficient: the
        # relative gap shrinks like 12.25/rho
        for n in (1, 2):
            gap_100 = abs(asymptotic_load(1.0, 100.0, n, "sparse").p_off
                          / p_off(1.0, 100.0, n) - 1.0)
            gap_1k = abs(asymptotic_load(1.0, 1000.0, n, "sparse").p_off
                         / p_off(1.0, 1000.0, n) - 1.0)
            assert gap_1k < gap_100 / 5.0
            assert gap_1k < 0.025

    def test_dense_example_value(self):
        prof = asymptotic_load(1.0, 0.01, 1, "dense")
        assert prof.p_off == pytest.approx(0.99, abs=1e-12)

    def test_sparse_example_value(self):
        prof = asymptotic_load(1.0, 100.0, 4, "sparse")
        assert prof.p_sel == pytest.approx(0.04, abs=1e-12)

    def test_unknown_regime(self):
        with pytest.raises(DomainError):
            asymptotic_load(1.0, 1.0, 1, "medium")


class TestAssociation:
    def test_single_state_sums_to_one(self):
        states = make_states()[:1]
        mb = MultiBallModel((50.0,), {"LOS": (1.0, 1.0)})
        probs, prov = association_probabilities(mb, states, 1e-4)
        assert probs["LOS"] == pytest.approx(1.0, abs=1e-6)
        assert prov["LOS"] == "im-approximation"

    def test_two_identical_states_split_evenly(self):
        base = make_states()[0]
        twin = type(base)("NLOS", base.kappa, base.alpha, base.mu_db,
                          base.sigma_db, base.m, base.omega)
        states = (base, twin)
        mb = MultiBallModel((50.0,), {"LOS": (0.5, 0.5), "NLOS": (0.5, 0.5)})
        probs, _ = association_probabilities(mb, states, 1e-4)
        assert probs["LOS"] == pytest.approx(0.5, abs=1e-6)
        assert probs["NLOS"] == pytest.approx(0.5, abs=1e-6)

    def test_exact_path_sums_to_one(self):
        states = make_states()
        model = RandomShapeLinkModel(1.0, 0.046)
        probs, prov = association_probabilities(model, states,
                                                1.0 / (math.pi * 50.0 ** 2),
                                                prefer_im=False)
        assert prov["LOS"] == "exact-with-shadowing"
        assert sum(probs.values()) == pytest.approx(1.0, abs=1e-6)

    def test_against_simulated_association_frequency(self):
        from imcell.model import NetworkConfig
        from imcell.simulator import SimConfig, run_campaign

        states = make_states()
        model = RandomShapeLinkModel(1.0, 0.046)
        lam = 1.0 / (math.pi * 50.0 ** 2)
        probs, _ = association_probabilities(model, states, lam,
                                             prefer_im=False)
        net = NetworkConfig(lambda_bs=lam, lambda_mt=2 * lam, n_rb=1,
                            p_bs=0.1, sigma_n2=1e-14)
        cfg = SimConfig(region_radius=10 * net.r_cell, drops=60, seed=3,
                        model=model, states=states, network=net,
                        max_measured_per_drop=400)
        camp = run_campaign(cfg)
        est = camp.association["LOS"]
        assert abs(est.mean - probs["LOS"]) < 1.5 * est.ci95_halfwidth + 0.005
