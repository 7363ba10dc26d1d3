"""Monte Carlo system-level simulator.

Implements the unapproximated network model: Poisson base stations and
terminals in a disk, per-link states sampled from the exact link-state
probabilities, log-normal shadowing, gamma fading, strongest-average
-power association, random per-block scheduling, and SINR measured on a
uniformly chosen resource block. Serves as the ground truth against
which every analytic expression is validated.

Randomness is counter-based: each drop owns a Philox stream keyed by
(seed, drop index), so campaigns are reproducible regardless of how the
drops are distributed over workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import NetworkConfig

_GUARD_DEFAULT = 0.5


@dataclass(frozen=True)
class SimConfig:
    region_radius: float
    drops: int
    seed: int
    model: object
    states: tuple
    network: NetworkConfig
    thresholds: tuple = ()
    guard_fraction: float = _GUARD_DEFAULT
    max_measured_per_drop: int = 2000
    batch_size: int = 16384
    workers: int = 1

    def __post_init__(self):
        if self.drops < 1:
            raise DomainError("need at least one drop")
        r_cell = self.network.r_cell
        if self.region_radius < 10.0 * r_cell:
            raise DomainError(
                "region radius %.1f is below 10 average cell radii (%.1f); "
                "boundary bias would be unbounded"
                % (self.region_radius, 10.0 * r_cell)
            )


@dataclass(frozen=True)
class SimEstimate:
    mean: float
    ci95_halfwidth: float
    drops_used: int


@dataclass
class Realization:
    bs_xy: np.ndarray
    mt_xy: np.ndarray


@dataclass
class Association:
    serving: np.ndarray          # serving BS index per MT
    cell_counts: np.ndarray      # attached MTs per BS
    measured_idx: np.ndarray     # MT indices measured for SINR
    measured_loss: np.ndarray    # (n_meas, n_bs) inverse mean power
    measured_state: np.ndarray   # (n_meas, n_bs) state index per link


def _rng_for_drop(seed, drop_index):
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, drop_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def drop_network(cfg: SimConfig, rng) -> Realization:
    """Sample one Poisson realization of base stations and terminals."""
    area = math.pi * cfg.region_radius ** 2

    def disk(n):
        r = cfg.region_radius * np.sqrt(rng.random(n))
        phi = rng.uniform(0.0, 2.0 * math.pi, n)
        return np.column_stack([r * np.cos(phi), r * np.sin(phi)])

    n_bs = rng.poisson(cfg.network.lambda_bs * area)
    n_mt = rng.poisson(cfg.network.lambda_mt * area)
    return Realization(bs_xy=disk(max(n_bs, 1)), mt_xy=disk(max(n_mt, 1)))


def _sample_links(cfg, rng, dists):
    """Per-link state index and inverse mean power for a distance block."""
    states = cfg.states
    loss = np.empty_like(dists)
    u = rng.random(dists.shape)
    acc = np.zeros_like(dists)
    chosen = np.full(dists.shape, -1, dtype=np.int8)
    for k, ch in enumerate(states):
        p = np.asarray(cfg.model.probability(ch.name, dists))
        acc = acc + p
        sel = (chosen < 0) & (u < acc)
        chosen[sel] = k
    chosen[chosen < 0] = len(states) - 1
    shadow = rng.standard_normal(dists.shape)
    for k, ch in enumerate(states):
        mask = chosen == k
        if not np.any(mask):
            continue
        if ch.name == "OUT":
            loss[mask] = np.inf
            continue
        x = np.exp(ch.mu_nat + ch.sigma_nat * shadow[mask])
        loss[mask] = ch.kappa * dists[mask] ** ch.alpha / x
    return chosen, loss


def associate(cfg: SimConfig, real: Realization, rng) -> Association:
    """Attach every terminal to its strongest-average-power base station."""
    n_mt = len(real.mt_xy)
    n_bs = len(real.bs_xy)
    guard = cfg.guard_fraction * cfg.region_radius
    inside = np.nonzero(np.hypot(real.mt_xy[:, 0], real.mt_xy[:, 1]) <= guard)[0]
    if len(inside) > cfg.max_measured_per_drop:
        inside = inside[rng.choice(len(inside), cfg.max_measured_per_drop,
                                   replace=False)]
    measured = np.zeros(n_mt, dtype=bool)
    measured[inside] = True

    serving = np.empty(n_mt, dtype=np.int64)
    counts = np.zeros(n_bs, dtype=np.int64)
    meas_loss = np.empty((len(inside), n_bs))
    meas_state = np.empty((len(inside), n_bs), dtype=np.int8)
    sorted_inside = np.sort(inside)
    meas_pos = {int(i): k for k, i in enumerate(sorted_inside)}

    for lo in range(0, n_mt, cfg.batch_size):
        hi = min(lo + cfg.batch_size, n_mt)
        d = np.hypot(
            real.mt_xy[lo:hi, 0][:, None] - real.bs_xy[None, :, 0],
            real.mt_xy[lo:hi, 1][:, None] - real.bs_xy[None, :, 1],
        )
        np.maximum(d, 1e-3, out=d)
        st_idx, loss = _sample_links(cfg, rng, d)
        serving[lo:hi] = np.argmin(loss, axis=1)
        np.add.at(counts, serving[lo:hi], 1)
        batch_meas = np.nonzero(measured[lo:hi])[0]
        for j in batch_meas:
            k = meas_pos[lo + int(j)]
            meas_loss[k] = loss[j]
            meas_state[k] = st_idx[j]

    return Association(
        serving=serving, cell_counts=counts, measured_idx=sorted_inside,
        measured_loss=meas_loss, measured_state=meas_state,
    )


def schedule(cfg: SimConfig, counts, rng):
    """Random per-block scheduling: which blocks each base station uses."""
    n_rb = cfg.network.n_rb
    n_bs = len(counts)
    used = np.zeros((n_bs, n_rb), dtype=bool)
    if cfg.network.full_load:
        used[:] = True
        return used
    for b in range(n_bs):
        k = min(int(counts[b]), n_rb)
        if k == n_rb:
            used[b] = True
        elif k > 0:
            used[b, rng.choice(n_rb, k, replace=False)] = True
    return used


def measure(cfg: SimConfig, assoc: Association, used, rng):
    """Per-measured-terminal SINR, rate, and coverage indicators."""
    net = cfg.network
    n_meas = len(assoc.measured_idx)
    thresholds = np.asarray(cfg.thresholds, dtype=float)
    rates = np.zeros(n_meas)
    log2_rates = np.zeros(n_meas)
    cov = np.zeros((n_meas, len(thresholds)))
    sel_probs = np.zeros(n_meas)
    states = cfg.states
    outage_flags = 0

    m_arr = np.array([ch.m for ch in states])
    om_arr = np.array([ch.omega for ch in states])

    for k in range(n_meas):
        loss_row = assoc.measured_loss[k]
        state_row = assoc.measured_state[k]
        mt_index = assoc.measured_idx[k]
        b0 = assoc.serving[mt_index]
        l0 = loss_row[b0]
        if not np.isfinite(l0):
            outage_flags += 1
            continue
        s0 = int(state_row[b0])
        n_cell = assoc.cell_counts[b0]
        sel_probs[k] = min(n_cell, net.n_rb) / max(n_cell, 1)

        rb = rng.integers(net.n_rb)
        mask = used[:, rb].copy()
        mask[b0] = False
        mask &= np.isfinite(loss_row) & (loss_row > l0)
        idx = np.nonzero(mask)[0]

        g0 = rng.gamma(states[s0].m, states[s0].omega / states[s0].m)
        signal = net.p_rb * net.g0 * g0 / l0
        interference = 0.0
        if len(idx):
            st = state_row[idx].astype(int)
            g = rng.gamma(m_arr[st], om_arr[st] / m_arr[st])
            th_bs = rng.uniform(-math.pi, math.pi, len(idx))
            th_mt = rng.uniform(-math.pi, math.pi, len(idx))
            gain = net.pattern_bs.gain(th_bs) * net.pattern_mt.gain(th_mt)
            interference = float(np.sum(net.p_rb * gain * g / loss_row[idx]))
        sinr = signal / (net.sigma_n2 + interference)
        rates[k] = math.log1p(sinr)
        log2_rates[k] = rates[k] / math.log(2.0)
        if len(thresholds):
            cov[k] = sinr >= thresholds
    return {
        "rates": rates,
        "log2_rates": log2_rates,
        "coverage": cov,
        "sel_probs": sel_probs,
        "outage_count": outage_flags,
        "n_meas": n_meas,
    }


def run_drop(cfg: SimConfig, drop_index):
    """One complete drop; returns per-drop summary statistics."""
    rng = _rng_for_drop(cfg.seed, drop_index)
    real = drop_network(cfg, rng)
    assoc = associate(cfg, real, rng)
    used = schedule(cfg, assoc.cell_counts, rng)
    res = measure(cfg, assoc, used, rng)

    n_rb = cfg.network.n_rb
    p_off_emp = float(np.mean(1.0 - used.sum(axis=1) / n_rb))
    p_sel_emp = float(np.mean(res["sel_probs"])) if res["n_meas"] else 0.0
    mean_rate = float(np.mean(res["rates"])) if res["n_meas"] else 0.0
    mean_log2 = float(np.mean(res["log2_rates"])) if res["n_meas"] else 0.0
    cov_mean = (res["coverage"].mean(axis=0)
                if res["n_meas"] else np.zeros(len(cfg.thresholds)))

    # association frequency per state among measured terminals
    state_freq = np.zeros(len(cfg.states))
    for k, mt_index in enumerate(assoc.measured_idx):
        b0 = assoc.serving[mt_index]
        if np.isfinite(assoc.measured_loss[k, b0]):
            state_freq[int(assoc.measured_state[k, b0])] += 1
    if res["n_meas"]:
        state_freq = state_freq / res["n_meas"]

    return {
        "rate": mean_rate,
        "log2_rate": mean_log2,
        "coverage": np.asarray(cov_mean),
        "p_sel": p_sel_emp,
        "p_off": p_off_emp,
        "ase": cfg.network.lambda_mt * p_sel_emp * mean_log2,
        "assoc": state_freq,
        "outage_count": res["outage_count"],
        "n_meas": res["n_meas"],
    }


@dataclass(frozen=True)
class CampaignResult:
    ase: SimEstimate
    rate: SimEstimate
    coverage: tuple
    p_sel: SimEstimate
    p_off: SimEstimate
    association: dict
    thresholds: tuple
    outage_fraction: float
    samples: int


def _estimate(values):
    values = np.asarray(values, dtype=float)
    n = len(values)
    mean = float(values.mean())
    if n > 1:
        half = 1.96 * float(values.std(ddof=1)) / math.sqrt(n)
    else:
        half = math.inf
    return SimEstimate(mean=mean, ci95_halfwidth=half, drops_used=n)


def run_campaign(cfg: SimConfig):
    """Run all drops and reduce them into campaign estimates."""
    indices = list(range(cfg.drops))
    if cfg.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_drop_worker, [(cfg, i) for i in indices]))
    else:
        results = [run_drop(cfg, i) for i in indices]

    cov_rows = np.array([r["coverage"] for r in results])
    coverage = tuple(
        _estimate(cov_rows[:, j]) for j in range(cov_rows.shape[1])
    )
    assoc_rows = np.array([r["assoc"] for r in results])
    association = {
        ch.name: _estimate(assoc_rows[:, k])
        for k, ch in enumerate(cfg.states)
    }
    total_meas = sum(r["n_meas"] for r in results)
    total_out = sum(r["outage_count"] for r in results)
    return CampaignResult(
        ase=_estimate([r["ase"] for r in results]),
        rate=_estimate([r["rate"] for r in results]),
        coverage=coverage,
        p_sel=_estimate([r["p_sel"] for r in results]),
        p_off=_estimate([r["p_off"] for r in results]),
        association=association,
        thresholds=tuple(cfg.thresholds),
        outage_fraction=total_out / max(total_meas, 1),
        samples=total_meas,
    )


def _drop_worker(args):
    cfg, index = args
    return run_drop(cfg, index)
