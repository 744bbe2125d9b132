"""Command-line front end: presets, sweeps, curve CSVs, oracle reports.

Verbs:
    untrusted      sweep (m_min, q), write points + min-QBER frontier CSVs
    trusted        same with detector model, per photon number m
    oracle         analytic vs Monte Carlo comparison with z-scores
    presets        list / show the figure presets

Exit codes: 0 success, 2 config error, 3 numerical non-convergence,
4 oracle disagreement.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .amplitudes import AmplitudeDistribution
from .attack import AttackParams, dead_time_pad
from .detection import DetectorModel
from .montecarlo import SimConfig, simulate
from .sweep import CurvePoint, FrontierPoint, GridSpec
from .trusted import FixedPointError, PhotonNumberDistribution, trusted_curve, trusted_rates
from .untrusted import ChannelModel, untrusted_curve, untrusted_gain, untrusted_qber

__all__ = ["main", "entrypoint", "Preset", "PRESETS"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOCONVERGE = 3
EXIT_ORACLE = 4

CSV_COLUMNS = ["m_min", "q", "gain", "qber", "dc_rate", "distance_km"]
ORACLE_Z_LIMIT = 4.0


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass(frozen=True)
class Preset:
    """Named parameter set matching one published measurement configuration."""

    name: str
    scenario: str
    mu_alpha: float
    pad: int
    m_max: int
    t_dead: float | None = None
    f_clock: float | None = None
    p_dark: float | None = None
    eta_det: float | None = None
    gamma: float | None = None
    loss_b: float | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Preset":
        return cls(**data)


PRESETS: dict[str, Preset] = {
    preset.name: preset
    for preset in [
        Preset("fig-untrusted-mu0.2-d500", "untrusted", 0.2, 500, 25,
               t_dead=50e-9, f_clock=10e9),
        Preset("fig-untrusted-mu0.17-d50", "untrusted", 0.17, 50, 25,
               t_dead=50e-9, f_clock=1e9),
        Preset("fig-untrusted-mu0.16-d50", "untrusted", 0.16, 50, 25,
               t_dead=50e-9, f_clock=1e9),
        Preset("fig-untrusted-mu0.2-d50", "untrusted", 0.2, 50, 25,
               t_dead=50e-9, f_clock=1e9),
        Preset("fig-trusted-mu0.2-d500", "trusted", 0.2, 500, 500,
               t_dead=50e-9, f_clock=10e9, p_dark=2.5e-9, eta_det=0.005),
        Preset("fig-trusted-mu0.17-d50", "trusted", 0.17, 50, 50,
               t_dead=50e-9, f_clock=1e9, p_dark=7.8e-6, eta_det=0.0327),
        Preset("fig-trusted-mu0.16-d50", "trusted", 0.16, 50, 50,
               t_dead=50e-9, f_clock=1e9, p_dark=2.7e-7, eta_det=0.0045),
        Preset("fig-trusted-mu0.2-d50", "trusted", 0.2, 50, 50,
               t_dead=50e-9, f_clock=1e9, p_dark=3.5e-8, eta_det=0.0011),
    ]
}


def _fmt(value) -> str:
    """12 significant digits; None becomes the explicit empty marker."""
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _atomic_write_csv(path: Path, columns: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(columns)
            writer.writerows(rows)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def _point_row(point: CurvePoint) -> list[str]:
    return [
        str(point.m_min),
        _fmt(point.q),
        _fmt(point.gain),
        _fmt(point.qber),
        _fmt(point.dc_rate),
        _fmt(point.distance_km),
    ]


def _write_curve(out_dir: Path, stem: str, points: list[CurvePoint],
                 frontier: list[FrontierPoint]) -> list[str]:
    points_path = out_dir / f"{stem}_points.csv"
    frontier_path = out_dir / f"{stem}_frontier.csv"
    ordered = sorted(points, key=lambda pt: (pt.m_min, pt.q))
    _atomic_write_csv(points_path, CSV_COLUMNS, [_point_row(pt) for pt in ordered])
    _atomic_write_csv(
        frontier_path,
        CSV_COLUMNS + ["frontier_kind"],
        [_point_row(fp) + [fp.frontier_kind] for fp in frontier],
    )
    return [str(points_path), str(frontier_path)]


def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level config must be an object")
    if "config" in data and "verb" in data:  # a manifest round-trips as a config
        inner = data["config"]
        if not isinstance(inner, dict):
            raise ConfigError(f"{path}: manifest 'config' must be an object")
        return inner
    return data


def _parse_dist(label: str) -> AmplitudeDistribution:
    if label in ("flat", "binomial", "optimal"):
        return AmplitudeDistribution(label)
    if label.startswith("custom:"):
        path = label[len("custom:"):]
        try:
            with open(path, encoding="utf-8") as handle:
                data = json.load(handle)
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        table = data.get("coefficients", data) if isinstance(data, dict) else None
        if not isinstance(table, dict):
            raise ConfigError(f"{path}: custom distribution must map k to amplitude arrays")
        overrides = data.get("m_overrides") if isinstance(data, dict) else None
        try:
            return AmplitudeDistribution.custom(table, overrides)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    raise ConfigError(f"unknown distribution {label!r}; "
                      "use flat, binomial, optimal, or custom:<file>")


def _merge_config(defaults: dict, file_config: dict, preset: Preset | None,
                  flag_values: dict) -> dict:
    """Precedence: defaults < config file < preset < explicit flags."""
    config = dict(defaults)
    unknown = set(file_config) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
    config.update(file_config)
    if preset is not None:
        for key, value in preset.to_dict().items():
            if key in ("name", "scenario"):
                continue
            if key in config and value is not None:
                config[key] = value
    config.update({k: v for k, v in flag_values.items() if v is not None})
    return config


def _detector_from_config(config: dict) -> DetectorModel:
    t_dead = config.get("t_dead")
    f_clock = config.get("f_clock")
    if t_dead is None or f_clock is None:
        # Synthesize timing that makes the pad count exact: pad slots at 1 GHz.
        f_clock = 1e9
        t_dead = config["pad"] / f_clock
    det = DetectorModel(
        eta_det=config["eta_det"], p_dark=config["p_dark"],
        t_dead=t_dead, f_clock=f_clock,
    )
    if det.dead_time_slots() != config["pad"]:
        raise ConfigError(
            f"detector timing gives {det.dead_time_slots()} dead slots, "
            f"but pad={config['pad']} was configured"
        )
    return det


def _channel_from_config(config: dict) -> ChannelModel | None:
    gamma, loss_b, eta = config.get("gamma"), config.get("loss_b"), config.get("eta_det")
    if gamma is None:
        return None
    if loss_b is None or eta is None:
        raise ConfigError("distance output needs gamma, loss_b, and eta_det together")
    return ChannelModel(gamma=gamma, loss_b=loss_b, eta_det=eta)


def _manifest(verb: str, config: dict, outputs: list[str], rows: int, started: float) -> dict:
    return {
        "tool": "dpsbound",
        "version": __version__,
        "verb": verb,
        "config": config,
        "outputs": outputs,
        "rows": rows,
        "wall_time_s": round(time.monotonic() - started, 3),
    }


def _emit_manifest(manifest: dict, out_dir: Path | None) -> None:
    text = json.dumps(manifest, indent=2, sort_keys=True)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "manifest.json").write_text(text + "\n", encoding="utf-8")
    print(text)


def _resolve_preset(name: str | None, scenario: str) -> Preset | None:
    if name is None:
        return None
    preset = PRESETS.get(name)
    if preset is None:
        raise ConfigError(f"unknown preset {name!r}; see 'dpsbound presets list'")
    if preset.scenario != scenario:
        raise ConfigError(f"preset {name!r} is a {preset.scenario} preset")
    return preset


_UNTRUSTED_DEFAULTS = {
    "mu": 0.2, "pad": 500, "m_max": 25,
    "m_min_lo": 1, "m_min_hi": None, "m_min_step": 1, "q_steps": 101,
    "dist": "optimal", "gamma": None, "loss_b": None, "eta_det": None,
    "out": "out", "mu_alpha": None, "t_dead": None, "f_clock": None,
    "p_dark": None,
}

_TRUSTED_DEFAULTS = {
    "mu": 0.2, "pad": 50, "m_max": None,
    "m_min_lo": 1, "m_min_hi": None, "m_min_step": 1, "q_steps": 101,
    "dist": "optimal", "p_dark": 1e-6, "eta_det": 0.1,
    "photon_numbers": [1], "t_dead": None, "f_clock": None,
    "gamma": None, "loss_b": None, "out": "out", "mu_alpha": None,
}

_ORACLE_DEFAULTS = {
    "scenario": "untrusted", "mu": 0.2, "m_min": 3, "m_max": 8, "q": 0.5,
    "pad": 20, "dist": "optimal", "p_dark": 2e-4, "eta_det": 0.25,
    "photon_number": 1, "pulses": 1_000_000, "seed": 20240801,
    "t_dead": None, "f_clock": None, "mu_alpha": None,
}


def _normalize_mu(config: dict) -> None:
    # Presets carry mu_alpha; flags and files use the shorter "mu".
    if config.get("mu_alpha") is not None:
        config["mu"] = config.pop("mu_alpha")
    else:
        config.pop("mu_alpha", None)


def _run_untrusted(args: argparse.Namespace) -> int:
    started = time.monotonic()
    file_config = _load_config_file(args.config) if args.config else {}
    preset = _resolve_preset(args.preset, "untrusted")
    flags = {
        "mu": args.mu, "pad": args.pad, "m_max": args.m_max,
        "m_min_lo": args.m_min[0] if args.m_min else None,
        "m_min_hi": args.m_min[1] if args.m_min else None,
        "m_min_step": args.m_min_step, "q_steps": args.q_steps,
        "dist": args.dist, "gamma": args.gamma, "loss_b": args.loss_b,
        "eta_det": args.eta_det, "out": args.out,
    }
    config = _merge_config(_UNTRUSTED_DEFAULTS, file_config, preset, flags)
    _normalize_mu(config)
    if config["m_min_hi"] is None:
        config["m_min_hi"] = config["m_max"] - 1
    dist = _parse_dist(config["dist"])
    grid = GridSpec(config["m_min_lo"], config["m_min_hi"],
                    q_steps=config["q_steps"], m_min_step=config["m_min_step"])
    channel = _channel_from_config(config)
    result = untrusted_curve(config["mu"], config["pad"], config["m_max"], dist, grid,
                             channel=channel)
    out_dir = Path(config["out"])
    outputs = _write_curve(out_dir, "untrusted", result.points, result.frontier)
    _emit_manifest(_manifest("untrusted", config, outputs, len(result.points), started),
                   out_dir)
    return EXIT_OK


def _run_trusted(args: argparse.Namespace) -> int:
    started = time.monotonic()
    file_config = _load_config_file(args.config) if args.config else {}
    preset = _resolve_preset(args.preset, "trusted")
    flags = {
        "mu": args.mu, "pad": args.pad, "m_max": args.m_max,
        "m_min_lo": args.m_min[0] if args.m_min else None,
        "m_min_hi": args.m_min[1] if args.m_min else None,
        "m_min_step": args.m_min_step, "q_steps": args.q_steps,
        "dist": args.dist, "p_dark": args.p_dark, "eta_det": args.eta_det,
        "photon_numbers": args.photon_number,
        "gamma": args.gamma, "loss_b": args.loss_b, "out": args.out,
    }
    config = _merge_config(_TRUSTED_DEFAULTS, file_config, preset, flags)
    _normalize_mu(config)
    d_tilde = config["pad"]
    if config["m_max"] is None:
        config["m_max"] = d_tilde
    if config["m_max"] > d_tilde:
        raise ConfigError(
            f"m_max={config['m_max']} exceeds the dead time of {d_tilde} slots; "
            "a block must fit inside one dead-time window so it clicks at most once"
        )
    if config["m_max"] != d_tilde:
        raise ConfigError("the trusted sweep fixes m_max to the dead time in slots")
    if config["m_min_hi"] is None:
        config["m_min_hi"] = config["m_max"] - 1
    dist = _parse_dist(config["dist"])
    detector = _detector_from_config(config)
    grid = GridSpec(config["m_min_lo"], config["m_min_hi"],
                    q_steps=config["q_steps"], m_min_step=config["m_min_step"])
    channel = _channel_from_config(config)

    outputs: list[str] = []
    rows = 0
    out_dir = Path(config["out"])
    for m in config["photon_numbers"]:
        result = trusted_curve(config["mu"], d_tilde, detector, dist, int(m), grid,
                               channel=channel)
        outputs += _write_curve(out_dir, f"trusted_m{int(m)}", result.points, result.frontier)
        rows += len(result.points)
    _emit_manifest(_manifest("trusted", config, outputs, rows, started), out_dir)
    return EXIT_OK


def _zscore(sim_value: float, sim_stderr: float, analytic: float, n: int) -> float:
    # Conservative scale: never smaller than the analytic binomial error,
    # so rare-event comparisons stay well-defined at zero observed counts.
    analytic_stderr = (analytic * (1.0 - analytic) / n) ** 0.5 if n > 0 else 0.0
    scale = max(sim_stderr, analytic_stderr)
    if scale == 0.0:
        return 0.0
    return (sim_value - analytic) / scale


def _run_oracle(args: argparse.Namespace) -> int:
    started = time.monotonic()
    file_config = _load_config_file(args.config) if args.config else {}
    scenario = args.scenario or file_config.get("scenario") or _ORACLE_DEFAULTS["scenario"]
    preset = _resolve_preset(args.preset, scenario)
    flags = {
        "scenario": args.scenario, "mu": args.mu, "m_min": args.m_min,
        "m_max": args.m_max, "q": args.q, "pad": args.pad, "dist": args.dist,
        "p_dark": args.p_dark, "eta_det": args.eta_det,
        "photon_number": args.photon_number, "pulses": args.pulses, "seed": args.seed,
    }
    config = _merge_config(_ORACLE_DEFAULTS, file_config, preset, flags)
    _normalize_mu(config)
    if config["scenario"] == "trusted" and config["m_max"] > config["pad"]:
        raise ConfigError("m_max must not exceed the dead time in slots")

    params = AttackParams(mu_alpha=config["mu"], m_min=config["m_min"],
                          m_max=config["m_max"], q=config["q"], pad=config["pad"])
    dist = _parse_dist(config["dist"])

    if config["scenario"] == "untrusted":
        analytic = {"gain": untrusted_gain(params), "qber": untrusted_qber(params, dist)}
        sim_config = SimConfig(params=params, dist=dist, scenario="untrusted",
                               n_pulses=config["pulses"], seed=config["seed"])
    else:
        detector = _detector_from_config(config)
        outcome = trusted_rates(params, detector, dist, int(config["photon_number"]))
        analytic = {"gain": outcome.gain, "qber": outcome.qber, "dc_rate": outcome.dc_rate}
        sim_config = SimConfig(
            params=params, dist=dist, scenario="trusted",
            n_pulses=config["pulses"], seed=config["seed"], detector=detector,
            photons=PhotonNumberDistribution.single(int(config["photon_number"])),
        )
    result = simulate(sim_config)

    sim_values = {"gain": (result.gain_hat, result.gain_stderr, result.n_pulses),
                  "qber": (result.qber_hat, result.qber_stderr, result.n_clicks),
                  "dc_rate": (result.dc_hat, result.dc_stderr, result.n_pulses)}
    comparisons = {}
    worst = 0.0
    for name, expected in analytic.items():
        value, stderr, n = sim_values[name]
        z = _zscore(value, stderr, expected, n)
        worst = max(worst, abs(z))
        comparisons[name] = {"analytic": expected, "simulated": value,
                             "stderr": stderr, "z": z}
    report = {
        "tool": "dpsbound",
        "version": __version__,
        "verb": "oracle",
        "config": config,
        "comparisons": comparisons,
        "counts": {"pulses": result.n_pulses, "clicks": result.n_clicks,
                   "errors": result.n_errors, "double_clicks": result.n_double_clicks},
        "max_abs_z": worst,
        "agrees": worst <= ORACLE_Z_LIMIT,
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK if worst <= ORACLE_Z_LIMIT else EXIT_ORACLE


def _run_presets(args: argparse.Namespace) -> int:
    if args.presets_command == "list":
        for name in sorted(PRESETS):
            preset = PRESETS[name]
            print(f"{name}: {preset.scenario}, mu={preset.mu_alpha}, pad={preset.pad}, "
                  f"m_max={preset.m_max}")
        return EXIT_OK
    preset = PRESETS.get(args.name)
    if preset is None:
        raise ConfigError(f"unknown preset {args.name!r}")
    print(json.dumps(preset.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpsbound",
        description="Security-bound curves for DPS QKD under sequential USD attacks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file (or a previous run manifest)")
        p.add_argument("--preset", help="named figure preset; see 'presets list'")
        p.add_argument("--mu", type=float, help="mean photon number per pulse")
        p.add_argument("--pad", type=int, help="dead-time padding / dead time in slots")
        p.add_argument("--m-max", type=int, help="maximum USD run length")
        p.add_argument("--dist", help="flat | binomial | optimal | custom:<file>")
        p.add_argument("--eta-det", type=float, help="detection efficiency")

    for verb in ("untrusted", "trusted"):
        p = sub.add_parser(verb, help=f"{verb}-device sweep")
        add_common(p)
        p.add_argument("--m-min", type=int, nargs=2, metavar=("LO", "HI"),
                       help="m_min sweep range (inclusive)")
        p.add_argument("--m-min-step", type=int, help="stride through the m_min range")
        p.add_argument("--q-steps", type=int, help="number of uniform q samples in [0, 1]")
        p.add_argument("--gamma", type=float, help="fiber loss coefficient dB/km")
        p.add_argument("--loss-b", type=float, help="receiver loss dB")
        p.add_argument("--out", help="output directory")
        if verb == "trusted":
            p.add_argument("--p-dark", type=float, help="per-slot dark-count probability")
            p.add_argument("--photon-number", type=int, nargs="+", metavar="M",
                           help="photon numbers m to sweep")
        p.set_defaults(func=_run_untrusted if verb == "untrusted" else _run_trusted)

    p = sub.add_parser("oracle", help="analytic vs Monte Carlo comparison")
    add_common(p)
    p.add_argument("--scenario", choices=["untrusted", "trusted"])
    p.add_argument("--m-min", type=int, help="minimum USD run length")
    p.add_argument("--q", type=float, help="resend probability at m_min")
    p.add_argument("--p-dark", type=float, help="per-slot dark-count probability")
    p.add_argument("--photon-number", type=int, help="photon number m")
    p.add_argument("--pulses", type=int, help="simulated pulse budget")
    p.add_argument("--seed", type=int, help="RNG seed")
    p.set_defaults(func=_run_oracle)

    p = sub.add_parser("presets", help="inspect the figure presets")
    presets_sub = p.add_subparsers(dest="presets_command", required=True)
    presets_sub.add_parser("list", help="list preset names")
    show = presets_sub.add_parser("show", help="dump one preset as JSON")
    show.add_argument("name")
    p.set_defaults(func=_run_presets)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FixedPointError as exc:
        print(f"non-convergence: {exc} (last iterates {exc.last_iterates})", file=sys.stderr)
        return EXIT_NOCONVERGE
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entrypoint() -> None:  # console-script shim
    sys.exit(main())
