"""Operator batch interface: fits, sweeps, campaigns, validation.

Every subcommand reads one run-configuration file and writes its results
atomically (temp file plus rename) with a reproducibility header: tool
version, configuration hash, and seed. Exit codes: 0 success, 2 bad
configuration, 3 numerical failure, 4 validation threshold exceeded.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from . import asymptotics, performance
from .config import (
    atomic_write,
    load_config,
    multiball_section,
    preset_text,
    replace_linkstate,
)
from .errors import ConfigError, ImcellError
from .intensity import fit_link_model
from .model import MultiBallLinkModel, fit_multilobe
from .simulator import SimConfig, run_campaign

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VALIDATION = 4


def _header(run_cfg, seed=None):
    lines = [
        "# imcell %s" % __version__,
        "# config_sha256 = %s" % run_cfg.config_hash,
    ]
    if seed is not None:
        lines.append("# seed = %s" % seed)
    return "\n".join(lines) + "\n"


def _csv(run_cfg, columns, rows, seed=None):
    out = [_header(run_cfg, seed=seed).rstrip("\n")]
    out.append(",".join(columns))
    for row in rows:
        out.append(",".join(_fmt(v) for v in row))
    return "\n".join(out) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return "%.10g" % v
    return str(v)


def _require_ball(run_cfg):
    if not isinstance(run_cfg.link_model, MultiBallLinkModel):
        raise ConfigError(
            "this command needs a multiball link model; run fit-intensity "
            "first or supply multiball parameters"
        )
    return run_cfg.link_model.ball


def cmd_fit_intensity(args):
    run_cfg = load_config(args.config)
    fit_opts = run_cfg.fit
    fit = fit_link_model(
        run_cfg.link_model, run_cfg.states,
        b_hat=fit_opts.get("b_hat", 1),
        x_im=fit_opts.get("x_im"),
        decades=fit_opts.get("decades"),
        n_starts=fit_opts.get("n_starts", 16),
        seed=fit_opts.get("seed", 7),
    )
    section = multiball_section(fit.multiball, x_im=fit.x_im,
                                residual=fit.residual)
    text = _header(run_cfg, seed=fit_opts.get("seed", 7))
    text += replace_linkstate(run_cfg.raw_text, section)
    atomic_write(args.output, text)
    print("fitted %d-ball model -> %s (rmse %.4g)"
          % (fit.multiball.ball_count, args.output, fit.residual))
    return EXIT_OK


def cmd_fit_antenna(args):
    run_cfg = load_config(args.config)
    if "pattern" not in run_cfg.fit:
        raise ConfigError("config needs a [fit] section with a target pattern")
    pattern = fit_multilobe(run_cfg.fit["pattern"],
                            run_cfg.fit.get("lobes", 5))
    lines = [_header(run_cfg).rstrip("\n")]
    lines.append("[antenna.bs]")
    lines.append("type = multilobe")
    lines.append("angles = " + ", ".join(
        "%.17g" % a for a in pattern.angles[1:-1]))
    lines.append("gains = " + ", ".join("%.17g" % g for g in pattern.gains))
    atomic_write(args.output, "\n".join(lines) + "\n")
    print("fitted %d-lobe pattern -> %s" % (pattern.lobe_count, args.output))
    return EXIT_OK


def _sweep_grid(run_cfg):
    grid = run_cfg.sweep.get("grid", ())
    if not grid:
        raise ConfigError("sweep grid is empty")
    increasing = all(b > a for a, b in zip(grid[:-1], grid[1:]))
    decreasing = all(b < a for a, b in zip(grid[:-1], grid[1:]))
    if len(grid) > 1 and not (increasing or decreasing):
        raise ConfigError("sweep grid must be strictly monotone")
    return grid


def cmd_ase(args):
    run_cfg = load_config(args.config)
    ball = _require_ball(run_cfg)
    grid = _sweep_grid(run_cfg)
    rows = []
    for lam in grid:
        net = run_cfg.network.replace(lambda_bs=lam)
        res = performance.ase(ball, run_cfg.states, net)
        rows.append((lam, net.lambda_mt, net.n_rb, res.rate_nats, res.ase,
                     res.p_sel, res.p_off, res.quadrature_error))
    text = _csv(run_cfg,
                ("lambda_bs", "lambda_mt", "n_rb", "rate_nats", "ase",
                 "p_sel", "p_off", "quad_error"), rows)
    atomic_write(args.output, text)
    print("wrote %d ASE points -> %s" % (len(rows), args.output))
    return EXIT_OK


def cmd_pt(args):
    run_cfg = load_config(args.config)
    ball = _require_ball(run_cfg)
    thresholds = run_cfg.sweep.get("thresholds_db", (0.0,))
    rows = []
    for t_db in thresholds:
        t = 10.0 ** (t_db / 10.0)
        res = performance.potential_throughput(
            ball, run_cfg.states, run_cfg.network, t)
        rows.append((run_cfg.network.lambda_bs, t_db, res.coverage, res.pt,
                     res.p_sel, res.quadrature_error))
    text = _csv(run_cfg,
                ("lambda_bs", "threshold_db", "coverage", "pt",
                 "p_sel", "quad_error"), rows)
    atomic_write(args.output, text)
    print("wrote %d PT points -> %s" % (len(rows), args.output))
    return EXIT_OK


def _sim_config(run_cfg, lam=None):
    sim = run_cfg.sim
    net = run_cfg.network if lam is None else run_cfg.network.replace(lambda_bs=lam)
    region = sim.get("region_factor", 10.0) * net.r_cell
    thresholds = tuple(
        10.0 ** (t / 10.0) for t in sim.get("thresholds_db", ())
    )
    return SimConfig(
        region_radius=region,
        drops=sim.get("drops", 10),
        seed=sim.get("seed", 1),
        model=run_cfg.link_model,
        states=tuple(run_cfg.states),
        network=net,
        thresholds=thresholds,
        max_measured_per_drop=sim.get("max_measured_per_drop", 1000),
        workers=sim.get("workers", 1),
    )


def cmd_simulate(args):
    run_cfg = load_config(args.config)
    grid = run_cfg.sweep.get("grid") or (run_cfg.network.lambda_bs,)
    rows = []
    for lam in grid:
        cfg = _sim_config(run_cfg, lam)
        camp = run_campaign(cfg)
        rows.append((lam, cfg.network.lambda_mt, cfg.network.n_rb,
                     camp.rate.mean, camp.rate.ci95_halfwidth,
                     camp.ase.mean, camp.ase.ci95_halfwidth,
                     camp.p_sel.mean, camp.p_off.mean, camp.samples))
    text = _csv(run_cfg,
                ("lambda_bs", "lambda_mt", "n_rb", "rate_nats", "rate_ci95",
                 "ase", "ase_ci95", "p_sel", "p_off", "samples"),
                rows, seed=run_cfg.sim.get("seed", 1))
    atomic_write(args.output, text)
    print("wrote %d campaign points -> %s" % (len(rows), args.output))
    return EXIT_OK


def cmd_plan(args):
    run_cfg = load_config(args.config)
    ball = _require_ball(run_cfg)
    report = asymptotics.regime_report(run_cfg.network, ball, run_cfg.states)
    atomic_write(args.output, report.to_json(indent=2) + "\n")
    print("regime %s, local min %s, local max %s -> %s"
          % (report.regime, report.local_min_density,
             report.local_max_density, args.output))
    return EXIT_OK


def cmd_validate(args):
    run_cfg = load_config(args.config)
    ball = _require_ball(run_cfg)
    grid = _sweep_grid(run_cfg)
    threshold = args.threshold
    if threshold is None:
        threshold = run_cfg.validate.get("max_rel_error", 0.10)
    rows = []
    for lam in grid:
        net = run_cfg.network.replace(lambda_bs=lam)
        ana = performance.ase(ball, run_cfg.states, net)
        camp = run_campaign(_sim_config(run_cfg, lam))
        sim_val = camp.ase.mean
        rel = abs(ana.ase - sim_val) / max(abs(sim_val), 1e-300)
        rows.append((lam, ana.ase, sim_val, camp.ase.ci95_halfwidth, rel))
    text = _csv(run_cfg,
                ("lambda_bs", "ase_analytic", "ase_sim", "sim_ci95",
                 "rel_error"), rows, seed=run_cfg.sim.get("seed", 1))
    atomic_write(args.output, text)
    failed = [r for r in rows
              if r[4] > max(threshold, 2.0 * r[3] / max(abs(r[2]), 1e-300))]
    print("validated %d points, max rel error %.3f -> %s"
          % (len(rows), max(r[4] for r in rows), args.output))
    return EXIT_VALIDATION if failed else EXIT_OK


def cmd_preset(args):
    text = preset_text(args.name)
    if args.output:
        atomic_write(args.output, text)
        print("wrote preset %s -> %s" % (args.name, args.output))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="imcell",
        description="Intensity-matched analysis of Poisson cellular networks",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, needs_output=True):
        p = sub.add_parser(name)
        p.add_argument("config", help="run configuration file")
        if needs_output:
            p.add_argument("-o", "--output", required=True)
        p.set_defaults(func=func)
        return p

    add("fit-intensity", cmd_fit_intensity)
    add("fit-antenna", cmd_fit_antenna)
    add("ase", cmd_ase)
    add("pt", cmd_pt)
    add("simulate", cmd_simulate)
    add("plan", cmd_plan)
    v = add("validate", cmd_validate)
    v.add_argument("--threshold", type=float, default=None,
                   help="maximum relative error before exit code 4")
    p = sub.add_parser("preset")
    p.add_argument("name", help="bundled preset name")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_preset)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except ImcellError as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print("i/o error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
