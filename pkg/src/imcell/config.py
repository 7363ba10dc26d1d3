"""Run configuration files: parsing, writing, and bundled presets.

A run file is a single INI document with [states], [state.NAME],
[linkstate], [antenna.bs], [antenna.mt], [network] sections plus
optional [sweep], [sim], [fit] and [validate] blocks. dB-valued keys
carry a _db / _dbm suffix; all other physical quantities are SI.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import os
import tempfile
from dataclasses import dataclass
from importlib import resources

from .errors import ConfigError
from .model import (
    ChannelState,
    LinearLinkModel,
    MmWaveLinkModel,
    MultiBallLinkModel,
    MultiBallModel,
    MultiLobePattern,
    NetworkConfig,
    OMNI,
    RandomShapeLinkModel,
    ThreeGPPLinkModel,
    threegpp_pattern,
    uwla_pattern,
)

_SPEED_OF_LIGHT = 3.0e8


@dataclass
class RunConfig:
    states: tuple
    link_model: object
    network: NetworkConfig
    sweep: dict
    sim: dict
    fit: dict
    validate: dict
    raw_text: str

    @property
    def config_hash(self):
        return hashlib.sha256(self.raw_text.encode()).hexdigest()[:16]


def _floats(raw):
    return tuple(float(v.strip()) for v in raw.split(",") if v.strip())


def _parse_states(cp):
    try:
        ids = [s.strip() for s in cp.get("states", "ids").split(",") if s.strip()]
    except (configparser.NoSectionError, configparser.NoOptionError) as exc:
        raise ConfigError("missing [states] ids") from exc
    states = []
    for name in ids:
        section = "state.%s" % name
        if not cp.has_section(section):
            raise ConfigError("missing section [%s]" % section)
        if cp.has_option(section, "kappa"):
            kappa = cp.getfloat(section, "kappa")
        elif cp.has_option(section, "f0_ghz"):
            f0 = cp.getfloat(section, "f0_ghz") * 1e9
            kappa = (4.0 * math.pi * f0 / _SPEED_OF_LIGHT) ** 2
        else:
            raise ConfigError("state %s needs kappa or f0_ghz" % name)
        states.append(ChannelState(
            name=name,
            kappa=kappa,
            alpha=cp.getfloat(section, "alpha"),
            mu_db=cp.getfloat(section, "mu_db", fallback=0.0),
            sigma_db=cp.getfloat(section, "sigma_db", fallback=0.0),
            m=cp.getfloat(section, "m", fallback=1.0),
            omega=cp.getfloat(section, "omega", fallback=1.0),
        ))
    return tuple(states)


def _parse_link_model(cp, states):
    if not cp.has_section("linkstate"):
        raise ConfigError("missing [linkstate] section")
    variant = cp.get("linkstate", "variant").strip().lower()
    g = lambda k: cp.getfloat("linkstate", k)
    if variant in ("threegpp", "3gpp"):
        return ThreeGPPLinkModel(g("a"), g("b"), g("c"))
    if variant in ("random_shape", "rs"):
        return RandomShapeLinkModel(g("a"), g("b"))
    if variant == "linear":
        return LinearLinkModel(g("a"), g("b"), g("c"))
    if variant in ("mmwave", "empirical_mmwave"):
        return MmWaveLinkModel(g("a"), g("b"), g("c"))
    if variant == "multiball":
        radii = _floats(cp.get("linkstate", "radii"))
        probs = {}
        for ch in states:
            key = "q_%s" % ch.name.lower()
            if not cp.has_option("linkstate", key):
                raise ConfigError("multiball needs %s" % key)
            probs[ch.name] = _floats(cp.get("linkstate", key))
        return MultiBallLinkModel(MultiBallModel(tuple(radii), probs))
    raise ConfigError("unknown link-state variant %r" % variant)


def _parse_pattern(cp, section):
    if not cp.has_section(section):
        return OMNI
    kind = cp.get(section, "type", fallback="omni").strip().lower()
    if kind == "omni":
        return OMNI
    if kind == "multilobe":
        angles = _floats(cp.get(section, "angles")) + (math.pi,)
        gains = _floats(cp.get(section, "gains"))
        return MultiLobePattern((0.0,) + angles, gains)
    raise ConfigError("unknown antenna type %r (fit continuous patterns "
                      "with the fit-antenna command first)" % kind)


def continuous_pattern(cp, section):
    """A continuous fit target described in a config section."""
    kind = cp.get(section, "target").strip().lower()
    if kind == "threegpp":
        return threegpp_pattern(
            phi_3db_deg=cp.getfloat(section, "phi_3db_deg", fallback=35.0),
            att_db=cp.getfloat(section, "att_db", fallback=23.0),
            switch_deg=cp.getfloat(section, "switch_deg", fallback=48.46),
            peak_gain=cp.getfloat(section, "peak_gain", fallback=9.33),
        )
    if kind == "uwla":
        return uwla_pattern(
            n_elements=cp.getint(section, "n_elements", fallback=8),
            spacing=cp.getfloat(section, "spacing", fallback=0.5),
            peak_gain=cp.getfloat(section, "peak_gain", fallback=12.1631),
        )
    raise ConfigError("unknown fit target %r" % kind)


def _parse_network(cp, patterns):
    sec = "network"
    if not cp.has_section(sec):
        raise ConfigError("missing [network] section")
    if cp.has_option(sec, "lambda_bs"):
        lambda_bs = cp.getfloat(sec, "lambda_bs")
    elif cp.has_option(sec, "r_cell_m"):
        lambda_bs = 1.0 / (math.pi * cp.getfloat(sec, "r_cell_m") ** 2)
    else:
        raise ConfigError("network needs lambda_bs or r_cell_m")
    if cp.has_option(sec, "lambda_mt"):
        lambda_mt = cp.getfloat(sec, "lambda_mt")
    elif cp.has_option(sec, "r_mt_m"):
        lambda_mt = 1.0 / (math.pi * cp.getfloat(sec, "r_mt_m") ** 2)
    else:
        raise ConfigError("network needs lambda_mt or r_mt_m")

    if cp.has_option(sec, "p_bs_watt"):
        p_bs = cp.getfloat(sec, "p_bs_watt")
    else:
        p_bs = 10.0 ** (cp.getfloat(sec, "p_bs_dbm") / 10.0) * 1e-3

    if cp.has_option(sec, "sigma_n2_watt"):
        sigma_n2 = cp.getfloat(sec, "sigma_n2_watt")
    elif cp.has_option(sec, "noise_dbm"):
        sigma_n2 = 10.0 ** (cp.getfloat(sec, "noise_dbm") / 10.0) * 1e-3
    elif cp.has_option(sec, "bandwidth_hz"):
        dbm = (-174.0
               + 10.0 * math.log10(cp.getfloat(sec, "bandwidth_hz"))
               + cp.getfloat(sec, "noise_figure_db", fallback=0.0))
        sigma_n2 = 10.0 ** (dbm / 10.0) * 1e-3
    else:
        sigma_n2 = 0.0

    g0 = cp.getfloat(sec, "g0") if cp.has_option(sec, "g0") else None
    return NetworkConfig(
        lambda_bs=lambda_bs, lambda_mt=lambda_mt,
        n_rb=cp.getint(sec, "n_rb", fallback=1),
        p_bs=p_bs, sigma_n2=sigma_n2,
        pattern_bs=patterns[0], pattern_mt=patterns[1], g0=g0,
        full_load=cp.getboolean(sec, "full_load", fallback=False),
    )


def _parse_sweep(cp):
    if not cp.has_section("sweep"):
        return {}
    out = {"parameter": cp.get("sweep", "parameter", fallback="lambda_bs")}
    if cp.has_option("sweep", "grid"):
        out["grid"] = _floats(cp.get("sweep", "grid"))
    elif cp.has_option("sweep", "r_cell_grid_m"):
        radii = _floats(cp.get("sweep", "r_cell_grid_m"))
        out["grid"] = tuple(1.0 / (math.pi * r * r) for r in radii)
    else:
        out["grid"] = ()
    if cp.has_option("sweep", "thresholds_db"):
        out["thresholds_db"] = _floats(cp.get("sweep", "thresholds_db"))
    return out


def _parse_simple(cp, section, casts):
    if not cp.has_section(section):
        return {}
    out = {}
    for key, cast in casts.items():
        if cp.has_option(section, key):
            out[key] = cast(cp.get(section, key))
    return out


def load_config(path_or_text, is_text=False):
    """Parse a run configuration file (or literal text)."""
    if is_text:
        text = path_or_text
    else:
        with open(path_or_text, "r", encoding="utf-8") as fh:
            text = fh.read()
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
        states = _parse_states(cp)
        link = _parse_link_model(cp, states)
        patterns = (_parse_pattern(cp, "antenna.bs"),
                    _parse_pattern(cp, "antenna.mt"))
        network = _parse_network(cp, patterns)
    except (configparser.Error, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    sweep = _parse_sweep(cp)
    sim = _parse_simple(cp, "sim", {
        "drops": int, "seed": int, "region_factor": float,
        "max_measured_per_drop": int, "workers": int,
        "thresholds_db": _floats,
    })
    fit = _parse_simple(cp, "fit", {
        "b_hat": int, "x_im": float, "decades": float,
        "n_starts": int, "seed": int, "lobes": int, "target": str,
    })
    if cp.has_section("fit") and cp.has_option("fit", "target"):
        fit["pattern"] = continuous_pattern(cp, "fit")
    validate = _parse_simple(cp, "validate", {
        "max_rel_error": float, "metric": str,
    })
    return RunConfig(states=states, link_model=link, network=network,
                     sweep=sweep, sim=sim, fit=fit, validate=validate,
                     raw_text=text)


def multiball_section(mb: MultiBallModel, x_im=None, residual=None):
    """Render a fitted multi-ball model as [linkstate] config lines."""
    lines = ["[linkstate]", "variant = multiball"]
    lines.append("radii = " + ", ".join("%.17g" % r for r in mb.radii))
    for name, qs in mb.probs.items():
        lines.append("q_%s = %s" % (
            name.lower(), ", ".join("%.17g" % q for q in qs)))
    if x_im is not None:
        lines.append("# fitted with x_im = %.17g" % x_im)
    if residual is not None:
        lines.append("# log-domain rmse = %.6g" % residual)
    return "\n".join(lines) + "\n"


def replace_linkstate(text, section_text):
    """Swap the [linkstate] section of a config document."""
    lines = text.splitlines()
    out = []
    skipping = False
    replaced = False
    for line in lines:
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            if stripped == "[linkstate]":
                skipping = True
                replaced = True
                out.append(section_text.rstrip())
                continue
            skipping = False
        if not skipping:
            out.append(line)
    if not replaced:
        out.append("")
        out.append(section_text.rstrip())
    return "\n".join(out) + "\n"


def atomic_write(path, text):
    """Write file contents via a temp file plus rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def preset_text(name):
    """Text of a bundled preset configuration."""
    ref = resources.files("imcell").joinpath("presets/%s.ini" % name)
    try:
        return ref.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError("no preset named %r" % name) from exc


def load_preset(name):
    return load_config(preset_text(name), is_text=True)
