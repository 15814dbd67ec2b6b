"""Command-line experiment runner.

Every subcommand reads an optional JSON config, writes its outputs into
``--out`` and records the fully resolved config plus seed next to them as
``resolved_config.json``. Outputs depend only on (config, seed, data files).
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import config as cfgmod
from . import perf
from .array import VariationSpec
from .data import default_mnist_dir, load_mnist
from .device import (MtjDeviceParams, Pulse, llg_switch_fractions, params_from_dict,
                     params_to_dict, psw_law, switching_constant, theta0)
from .errors import ConfigError, MtjGxnorError, ParameterError
from .rng import RngStreams, derive_seed, make_generator
from .training import config_from_dict, metrics_csv, run_training, summary

log = logging.getLogger("mtj_gxnor")

MAX_SEED = 2 ** 64


# ---- shared helpers ----

def write_csv(path: Path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def fmt(x) -> str:
    return f"{x:.10g}"


def load_config(path) -> dict:
    return {} if path is None else cfgmod.read_json(path)


def device_from(section, path=None) -> MtjDeviceParams:
    """Device block: a path to a parameter file, an inline object, or absent."""
    if section is None:
        return MtjDeviceParams()
    if isinstance(section, str):
        dev_path = Path(section)
        if path is not None and not dev_path.is_absolute():
            dev_path = Path(path).parent / dev_path
        return params_from_dict(cfgmod.read_json(dev_path), dev_path)
    if isinstance(section, dict):
        return params_from_dict(section, path)
    raise ConfigError("device must be a file path or an object", path=path, field="device")


def record(out: Path, command: str, seed: int, resolved: dict):
    cfgmod.dump_json({"command": command, "seed": seed, "config": resolved},
                     out / "resolved_config.json")


def list_of_numbers(cfg: dict, key: str, default, path=None) -> list:
    if key not in cfg:
        return list(default)
    value = cfg[key]
    if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ConfigError("expected a list of numbers", path=path,
                          line=cfgmod.line_of(path, key) if path else None, field=key)
    return list(value)


# ---- device-sweep ----

DEVICE_SWEEP_KEYS = {"device", "widths_ns", "voltages_v", "states"}
DEFAULT_WIDTHS_NS = (0.02, 0.05, 0.08, 0.1, 0.13, 0.16, 0.2, 0.3, 0.5, 1.0, 2.0)


def cmd_device_sweep(cfg: dict, seed: int, out: Path, path=None):
    cfgmod.check_keys(cfg, DEVICE_SWEEP_KEYS, path)
    p = device_from(cfg.get("device"), path)
    widths = list_of_numbers(cfg, "widths_ns", DEFAULT_WIDTHS_NS, path)
    volts = list_of_numbers(cfg, "voltages_v", [p.v_up], path)
    states = cfg.get("states", ["on", "off"])
    if not set(states) <= {"on", "off"}:
        raise ConfigError("states must be 'on' or 'off'", path=path, field="states")
    c_const = switching_constant(p)
    rows = []
    for state in states:
        r = p.r_on if state == "on" else p.r_off
        for v in volts:
            for w in widths:
                # magnitude sweep: the pulse polarity is the one that leaves `state`
                prob = float(psw_law(w * 1e-9, abs(v), r, theta0(p), c_const))
                rows.append([fmt(w), fmt(abs(v)), state, fmt(r), fmt(prob)])
    write_csv(out / "device_sweep.csv", ["width_ns", "voltage_v", "r_state", "resistance_ohm",
                                         "p_sw"], rows)
    record(out, "device-sweep", seed, {"device": params_to_dict(p), "widths_ns": widths,
                                       "voltages_v": volts, "states": list(states)})
    return rows


# ---- llg-validate ----

LLG_KEYS = {"device", "voltage_v", "widths_ns", "trials", "dt_ps", "temperature_k",
            "n_widths", "p_range", "out_of_plane", "sigmas"}


def widths_for_probabilities(p: MtjDeviceParams, voltage: float, probs) -> list:
    """Pulse widths (s) where the analytic law hits each target probability."""
    c_const = switching_constant(p)
    th0 = theta0(p)
    out = []
    for target in probs:
        f = lambda w: float(psw_law(w, voltage, p.r_on, th0, c_const)) - target  # noqa: E731
        out.append(brentq(f, 1e-15, 100 * p.t_up, xtol=1e-16))
    return out


def cmd_llg_validate(cfg: dict, seed: int, out: Path, path=None):
    cfgmod.check_keys(cfg, LLG_KEYS, path)
    p = device_from(cfg.get("device"), path)
    if "temperature_k" in cfg:
        p = p.replace(temperature=float(cfg["temperature_k"]))
        if p.temperature == 0:
            p = p.replace(theta0_override=None)
    trials = int(cfgmod.number(cfg, "trials", 10000, path))
    if trials < 100:
        raise ParameterError(f"llg-validate needs at least 100 trials, got {trials}")
    voltage = float(cfgmod.number(cfg, "voltage_v", p.v_up, path))
    dt = cfgmod.to_si("dt_ps", cfgmod.number(cfg, "dt_ps", 0.1, path))
    sigmas = float(cfgmod.number(cfg, "sigmas", 3.0, path))
    if "widths_ns" in cfg:
        widths = [w * 1e-9 for w in list_of_numbers(cfg, "widths_ns", (), path)]
    else:
        lo, hi = cfg.get("p_range", [0.08, 0.92])
        n = int(cfgmod.number(cfg, "n_widths", 10, path))
        ref = p if p.temperature > 0 else p.replace(temperature=300.0)
        widths = widths_for_probabilities(ref, voltage, np.linspace(lo, hi, n))
    frac = llg_switch_fractions(p, voltage, widths, trials, make_generator(seed, "llg"), dt,
                                bool(cfg.get("out_of_plane", True)))
    c_const = switching_constant(p)
    th0 = theta0(p)
    rows = []
    n_pass = 0
    for w, f in zip(widths, frac):
        analytic = float(psw_law(w, voltage, p.r_on, th0, c_const)) if th0 > 0 else float("nan")
        sigma = math.sqrt(analytic * (1 - analytic) / trials) if th0 > 0 else float("nan")
        ok = bool(abs(f - analytic) <= sigmas * sigma) if th0 > 0 else False
        n_pass += ok
        rows.append([fmt(w * 1e9), trials, int(round(f * trials)), fmt(f), fmt(analytic),
                     fmt(analytic - sigmas * sigma), fmt(analytic + sigmas * sigma),
                     "pass" if ok else "fail"])
    write_csv(out / "llg_validate.csv", ["width_ns", "trials", "switched", "fraction",
                                         "analytic", "ci_low", "ci_high", "result"], rows)
    report = {"points": len(rows), "within_ci": n_pass, "sigmas": sigmas, "trials": trials,
              "voltage_v": voltage}
    cfgmod.dump_json(report, out / "llg_summary.json")
    record(out, "llg-validate", seed, {"device": params_to_dict(p), "voltage_v": voltage,
                                       "widths_ns": [w * 1e9 for w in widths],
                                       "trials": trials, "dt_ps": dt * 1e12,
                                       "sigmas": sigmas,
                                       "out_of_plane": bool(cfg.get("out_of_plane", True))})
    return report


# ---- train / sweep ----

TRAIN_KEYS = {"train", "device", "data_dir"}
SWEEP_KEYS = TRAIN_KEYS | {"grid", "workers", "seed_policy"}
DEVICE_OVERRIDES = {"theta0_rad": "theta0_override", "r_on_ohm": "r_on", "r_off_ohm": "r_off"}
VARIATION_OVERRIDES = {"resistance_rsd": "resistance_rsd", "theta0_rsd": "theta0_rsd",
                       "temperature_k": "temperature"}


def train_config(section: dict, seed: int, path=None):
    section = dict(section or {})
    section["seed"] = seed
    try:
        return config_from_dict(section)
    except TypeError as exc:
        raise ConfigError(str(exc), path=path, field="train") from exc


def load_data(data_dir):
    directory = default_mnist_dir() if data_dir is None else Path(data_dir)
    return load_mnist(directory, "train"), load_mnist(directory, "test")


def apply_overrides(tcfg, params: MtjDeviceParams, overrides: dict):
    """Apply one sweep point: device, variation or training-config fields."""
    var = tcfg.variation
    train_kw = {}
    for key, value in overrides.items():
        if key in DEVICE_OVERRIDES:
            params = params.replace(**{DEVICE_OVERRIDES[key]: float(value)})
        elif key in VARIATION_OVERRIDES:
            var = replace(var, **{VARIATION_OVERRIDES[key]: float(value)})
        elif key in tcfg.__dataclass_fields__ and key not in ("seed", "variation"):
            train_kw[key] = value
        else:
            raise ConfigError("unknown sweep parameter", field=key)
    return replace(tcfg, variation=var, **train_kw), params


def _write_training(out: Path, prefix: str, history, tcfg, energy, params):
    (out / f"{prefix}metrics.csv").write_text(metrics_csv(history, None), encoding="utf-8",
                                               newline="")
    s = summary(history, tcfg, energy)
    s["device"] = params_to_dict(params)
    cfgmod.dump_json(s, out / f"{prefix}summary.json")
    return s


def _log_epoch(m):
    log.info("epoch %d loss %.4f train %.4f test %.4f", m.epoch, m.loss, m.train_acc,
             m.test_acc)


def cmd_train(cfg: dict, seed: int, out: Path, path=None):
    cfgmod.check_keys(cfg, TRAIN_KEYS, path)
    params = device_from(cfg.get("device"), path)
    tcfg = train_config(cfg.get("train"), seed, path)
    train_set, test_set = load_data(cfg.get("data_dir"))
    record(out, "train", seed, {"train": tcfg.as_dict(), "device": params_to_dict(params),
                                "data_dir": cfg.get("data_dir")})
    _, history, energy = run_training(tcfg, train_set, test_set, params, _log_epoch)
    return _write_training(out, "", history, tcfg, energy, params)


def _sweep_point(args):
    index, tcfg, params, data_dir, out = args
    train_set, test_set = load_data(data_dir)
    _, history, energy = run_training(tcfg, train_set, test_set, params)
    s = _write_training(Path(out), f"point{index:03d}_", history, tcfg, energy, params)
    return index, s


def sweep_points(cfg: dict, seed: int, path=None):
    grid = cfg.get("grid", {})
    if not isinstance(grid, dict):
        raise ConfigError("grid must map parameter names to value lists", path=path,
                          field="grid")
    keys = sorted(grid)
    for k in keys:
        if not isinstance(grid[k], list):
            raise ConfigError("expected a list of values", path=path, field=k,
                              line=cfgmod.line_of(path, k) if path else None)
    policy = cfg.get("seed_policy", "split")
    if policy not in ("split", "shared"):
        raise ConfigError("seed_policy must be 'split' or 'shared'", path=path,
                          field="seed_policy")
    combos = list(itertools.product(*(grid[k] for k in keys))) if keys else []
    points = []
    for i, values in enumerate(combos):
        # split: point i trains with the seed derived from (master seed, "sweep/<i>")
        point_seed = seed if policy == "shared" else derive_seed(seed, f"sweep/{i}") % MAX_SEED
        points.append((i, point_seed, dict(zip(keys, values))))
    return keys, points


def cmd_sweep(cfg: dict, seed: int, out: Path, path=None):
    cfgmod.check_keys(cfg, SWEEP_KEYS, path)
    params = device_from(cfg.get("device"), path)
    base = train_config(cfg.get("train"), seed, path)
    keys, points = sweep_points(cfg, seed, path)
    jobs = []
    for i, point_seed, overrides in points:
        tcfg, p = apply_overrides(replace(base, seed=point_seed), params, overrides)
        jobs.append((i, tcfg, p, cfg.get("data_dir"), str(out)))
    if jobs:
        load_data(cfg.get("data_dir"))   # fail early if the dataset is missing
    record(out, "sweep", seed, {"train": base.as_dict(), "device": params_to_dict(params),
                                "grid": cfg.get("grid", {}), "data_dir": cfg.get("data_dir"),
                                "seed_policy": cfg.get("seed_policy", "split"),
                                "points": [{"index": i, "seed": s, **o}
                                           for i, s, o in points]})
    workers = int(cfg.get("workers", 1))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = dict(pool.map(_sweep_point, jobs))
    else:
        results = dict(_sweep_point(j) for j in jobs)
    header = ["index", "seed", *keys, "final_test_acc", "best_test_acc", "final_train_acc"]
    rows = []
    for i, point_seed, overrides in points:
        s = results[i]
        rows.append([i, point_seed, *(overrides[k] for k in keys), fmt(s["final_test_acc"]),
                     fmt(s["best_test_acc"]), fmt(s["final_train_acc"])])
    write_csv(out / "sweep.csv", header, rows)
    return rows


# ---- perf ----

PERF_KEYS = {"profile", "assumptions", "convention"}


def cmd_perf(cfg: dict, seed: int, out: Path, path=None):
    cfgmod.check_keys(cfg, PERF_KEYS, path)
    warnings = []
    section = cfg.get("profile")
    if section is None:
        profile = perf.ARRAY_128
        warnings.append("no power profile given; using the built-in 128x128 defaults")
        log.warning(warnings[-1])
    elif isinstance(section, str):
        prof_path = Path(section)
        if path is not None and not prof_path.is_absolute():
            prof_path = Path(path).parent / prof_path
        profile = perf.profile_from_dict(cfgmod.read_json(prof_path), prof_path)
    else:
        profile = perf.profile_from_dict(section, path)
    assumptions = perf.assumptions_from_dict(cfg.get("assumptions", {}), path)
    try:
        convention = perf.UpdateConvention(cfg.get("convention", "per_mtj"))
    except ValueError as exc:
        raise ConfigError(str(exc), path=path, field="convention") from exc
    report = perf.system_efficiency(profile, assumptions, convention)
    bit_stream = perf.system_efficiency(profile, perf.BIT_STREAM_PRESET, convention)
    result = {
        "array": {
            "feedforward_tops_per_w": perf.feedforward_efficiency(profile),
            "update_tops_per_w": {c.value: perf.update_efficiency(profile, c)
                                  for c in perf.UpdateConvention},
        },
        "system": report.as_dict(),
        "bit_stream_inverse_read_tops_per_w": bit_stream.phases[2].tops_per_watt,
        "warnings": warnings,
    }
    cfgmod.dump_json(result, out / "perf.json")
    record(out, "perf", seed, {"profile": perf.profile_to_dict(profile),
                               "assumptions": report.assumptions,
                               "convention": convention.value})
    print(report.table())
    return result


COMMANDS = {
    "device-sweep": cmd_device_sweep,
    "llg-validate": cmd_llg_validate,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "perf": cmd_perf,
}


def seed_arg(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--seed", type=seed_arg, default=0, help="master seed (u64)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="mtj-gxnor", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, args.seed, args.out, args.config)
    except MtjGxnorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
