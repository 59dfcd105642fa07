"""Command-line experiment orchestration with CSV/JSON outputs.

Every run is driven by a config (JSON file merged with flag overrides),
validated up front, and serialized deterministically: identical config and
seed produce byte-identical output files.  Each file carries the config hash
and library version in its header.

Exit codes: 0 success, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, features, kernel, rfm, spectrum, sphere, train2nn
from ._rng import substream
from .activation import parse_activation

__all__ = ["main", "ConfigError"]

_CAP_POINTS = 8000
_CAP_FEATURES = 8000
_CAP_TOTAL_WIDTH = 8192
_CAP_HIDDEN = 4096


class ConfigError(ValueError):
    """Invalid or unknown configuration."""


def _env_int(name: str, fallback: int) -> int:
    raw = os.environ.get(name)
    if raw is None:
        return fallback
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"environment variable {name}={raw!r} is not an integer") from exc


def _load_config(defaults: dict, args: argparse.Namespace) -> dict:
    cfg = dict(defaults)
    if args.config:
        try:
            payload = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        unknown = set(payload) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg.update(payload)
    for key in defaults:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    if "seed" in cfg and cfg["seed"] is None:
        cfg["seed"] = _env_int("NNGPLAB_SEED", 0)
    return cfg


def _config_hash(command: str, cfg: dict) -> str:
    canon = json.dumps({"command": command, **cfg}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def _write_csv(path: Path, header: list[str], rows, meta: dict) -> None:
    lines = [f"# {key}: {value}" for key, value in meta.items()]
    lines.append(",".join(header))
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    with open(path, "w", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", newline="\n") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _meta(command: str, cfg: dict) -> dict:
    return {"config_hash": _config_hash(command, cfg), "version": __version__}


def _check_cap(value: int, cap: int, what: str, unsafe: bool) -> None:
    if value > cap and not unsafe:
        raise ConfigError(
            f"{what} {value} exceeds the desk-scale cap {cap}; pass --unsafe-large to override"
        )


def _activation(text: str):
    try:
        return parse_activation(text)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _depth1_kernel(spec, dim: int) -> kernel.KernelModel:
    if spec.name == "gaussian":
        return kernel.closed_gaussian_kernel(dim)
    if spec.name == "cos":
        return kernel.closed_cos_kernel(dim, a=spec.a)
    if spec.name == "sin":
        return kernel.closed_sin_kernel(dim, a=spec.a)
    return kernel.recursion_kernel(spec, 1, dim)


# ---------------------------------------------------------------- commands


def cmd_kernel_eval(cfg: dict, out: Path, unsafe: bool, workers: int) -> None:
    spec = _activation(cfg["activation"])
    dim = int(cfg["n"])
    depth = int(cfg["depth"])
    model = kernel.recursion_kernel(spec, depth, dim, quad_order=int(cfg["quad_order"]))
    if cfg["points"] is not None:
        pts = np.asarray(cfg["points"], dtype=float)
        if pts.ndim != 2 or pts.shape[1] != dim:
            raise ConfigError("points must be a list of vectors of dimension n")
    else:
        pts = sphere.sample_sphere(dim, int(cfg["sample_count"]), int(cfg["seed"]))
    if cfg["pairs"] is not None:
        pairs = [(int(i), int(j)) for i, j in cfg["pairs"]]
    else:
        pairs = [(i, j) for i in range(len(pts)) for j in range(i, len(pts))]
    rows = [
        (i, j, kernel.nngp_eval(model, pts[i], pts[j])) for i, j in pairs
    ]
    _write_csv(out / "kernel_eval.csv", ["x_id", "y_id", "value"], rows, _meta("kernel-eval", cfg))


def cmd_spectrum(cfg: dict, out: Path, unsafe: bool, workers: int) -> None:
    spec = _activation(cfg["activation"])
    n_points, n_features = int(cfg["n_points"]), int(cfg["n_features"])
    _check_cap(n_points, _CAP_POINTS, "n_points", unsafe)
    _check_cap(n_features, _CAP_FEATURES, "n_features", unsafe)
    report = spectrum.empirical_spectrum(
        spec, int(cfg["n"]), n_points, n_features, int(cfg["seed"])
    )
    cut_rule = cfg["cut_rule"]
    if isinstance(cut_rule, str) and cut_rule != "plateau":
        raise ConfigError("cut_rule must be 'plateau' or an integer index")
    report = spectrum.build_report(report, cut_rule=cut_rule, margin=float(cfg["margin"]))
    meta = _meta("spectrum", cfg)
    rows = []
    for idx, value in enumerate(report.eigenvalues, start=1):
        log_val = math.log(value) if value > 0 else float("nan")
        rows.append(
            (idx, value, math.log(idx), log_val, idx <= report.cut_index)
        )
    _write_csv(
        out / "spectrum.csv",
        ["rank", "eigenvalue", "log_rank", "log_eigenvalue", "in_fit_prefix"],
        rows,
        meta,
    )
    _write_json(
        out / "spectrum_summary.json",
        {
            **meta,
            "activation": spec.label(),
            "n": int(cfg["n"]),
            "slope": report.slope,
            "intercept": report.intercept,
            "cut_index": report.cut_index,
            "class_label": report.class_label,
            "threshold": report.threshold,
            "truncation_warning": report.truncation_warning,
        },
    )


def cmd_rate(cfg: dict, out: Path, unsafe: bool, workers: int) -> None:
    spec = _activation(cfg["activation"])
    dim = int(cfg["n"])
    t_values = [int(t) for t in cfg["t_values"]]
    if len(t_values) < 2:
        raise ConfigError("t_values needs at least two entries")
    for t in t_values:
        _check_cap(t, _CAP_TOTAL_WIDTH, "T", unsafe)
    seeds = [int(s) for s in cfg["seeds"]]
    model = _depth1_kernel(spec, dim)
    m = int(cfg["target_centers"])
    target_seed = int(substream(int(cfg["seed"]), "rate-target").integers(2**62))
    centers = sphere.sample_sphere(dim, m, target_seed)
    coeffs = substream(int(cfg["seed"]), "rate-coeffs").standard_normal(m) / math.sqrt(m)
    target = rfm.make_kernel_combo_target(model, centers, coeffs)
    result = rfm.rate_experiment(
        spec,
        target,
        t_values,
        seeds,
        n_train=int(cfg["n_train"]),
        dim=dim,
        n_test=None if cfg["n_test"] is None else int(cfg["n_test"]),
        ridge=cfg["ridge"],
        data_seed=int(cfg["seed"]),
        workers=workers,
    )
    meta = _meta("rate", cfg)
    _write_csv(
        out / "rate_table.csv",
        ["T", "seed", "train_rmse", "test_rmse"],
        result.rows,
        meta,
    )
    _write_csv(
        out / "rate_summary.csv",
        ["slope", "intercept"],
        [(result.slope, result.intercept)],
        meta,
    )
    _write_json(
        out / "rate_summary.json",
        {
            **meta,
            "activation": spec.label(),
            "slope": result.slope,
            "intercept": result.intercept,
            "rkhs_norm": result.rkhs_norm,
            "t_values": list(result.t_values),
            "mean_test_rmse": list(result.mean_rmse),
            "std_test_rmse": list(result.std_rmse),
        },
    )


def cmd_rfm_harmonic(cfg: dict, out: Path, unsafe: bool, workers: int) -> None:
    specs = [_activation(text) for text in cfg["activations"]]
    t_values = [int(t) for t in cfg["t_values"]]
    for t in t_values:
        _check_cap(t, _CAP_TOTAL_WIDTH, "T", unsafe)
    rows = rfm.harmonic_mse_experiment(
        specs,
        int(cfg["n"]),
        [int(k) for k in cfg["k_values"]],
        t_values,
        [int(s) for s in cfg["seeds"]],
        n_train=int(cfg["n_train"]),
        n_test=int(cfg["n_test"]),
        ridge=cfg["ridge"],
        data_seed=int(cfg["seed"]),
        workers=workers,
    )
    meta = _meta("rfm-harmonic", cfg)
    _write_csv(
        out / "rfm_harmonic.csv",
        ["k", "activation", "T", "seed", "train_mse", "test_mse"],
        rows,
        meta,
    )
    means = {}
    for k, label, t, _, _, test_mse in rows:
        means.setdefault((k, label, t), []).append(test_mse)
    mean_rows = [
        (k, label, t, float(np.mean(v))) for (k, label, t), v in sorted(means.items())
    ]
    _write_csv(
        out / "rfm_harmonic_means.csv",
        ["k", "activation", "T", "mean_test_mse"],
        mean_rows,
        meta,
    )


def cmd_train(cfg: dict, out: Path, unsafe: bool, workers: int) -> None:
    spec = _activation(cfg["activation"])
    hidden = int(cfg["hidden"])
    _check_cap(hidden, _CAP_HIDDEN, "hidden", unsafe)
    dim, k = int(cfg["n"]), int(cfg["k"])
    train_data, test_data, _ = rfm.build_harmonic_dataset(
        dim, k, int(cfg["n_train"]), int(cfg["n_test"]), int(cfg["seed"])
    )
    seeds = [int(s) for s in cfg["seeds"]]
    rows = []
    traces = []
    for s in seeds:
        if cfg["init_from_rfm"]:
            fmap = features.sample_feature_map(
                features.NetworkShape(n0=dim, hidden=(1,), T=hidden), spec, s
            )
            fitted = rfm.fit(fmap, train_data, ridge=cfg["ridge"])
            net = train2nn.init_from_rfm(fitted)
        else:
            net = train2nn.init_standard(dim, hidden, spec, s)
        result = train2nn.train(
            net,
            train_data,
            epochs=int(cfg["epochs"]),
            batch_size=int(cfg["batch_size"]),
            seed=s,
            lr=float(cfg["lr"]),
            test_data=test_data,
        )
        traces.append(result)
        rows.extend(
            (e, tm, vm, s)
            for e, tm, vm in zip(result.epochs, result.train_mse, result.test_mse)
        )
    meta = _meta("train", cfg)
    _write_csv(
        out / "train_trace.csv", ["epoch", "train_mse", "test_mse", "seed"], rows, meta
    )
    mean_rows = [
        (
            epoch,
            float(np.mean([t.train_mse[i] for t in traces])),
            float(np.mean([t.test_mse[i] for t in traces])),
        )
        for i, epoch in enumerate(traces[0].epochs)
    ]
    _write_csv(
        out / "train_trace_mean.csv",
        ["epoch", "mean_train_mse", "mean_test_mse"],
        mean_rows,
        meta,
    )


def cmd_probe(cfg: dict, out: Path, unsafe: bool, workers: int) -> None:
    spec = _activation(cfg["activation"])
    dim = int(cfg["n"])
    seed = int(cfg["seed"])
    reps = int(cfg["repetitions"])
    meta = _meta("probe", cfg)
    if cfg["mode"] == "variance":
        h_values = [int(h) for h in cfg["h_values"]]
        width_values = [int(w) for w in cfg["width_values"]]
        x, y = sphere.sample_sphere(dim, 2, seed)
        max_h = max(h_values)
        cells = [(h, w) for h in h_values for w in width_values]

        def run(cell):
            h, w = cell
            shape = features.NetworkShape(n0=dim, hidden=(w,) * h, T=1)
            return features.variance_probe(shape, spec, x, y, h, reps, seed)

        probes = [run(c) for c in cells]
        rows = []
        for probe in probes:
            widths = list(probe.widths) + [""] * (max_h - len(probe.widths))
            rows.append(
                (probe.h, *widths, probe.repetitions,
                 probe.measured_variance, probe.theorem_bound, probe.passed)
            )
        header = ["h"] + [f"n{i}" for i in range(1, max_h + 1)] + [
            "repetitions", "measured_variance", "theorem2_bound", "pass",
        ]
        _write_csv(out / "variance_probe.csv", header, rows, meta)
    elif cfg["mode"] == "deviation":
        n1_values = [int(w) for w in cfg["n1_values"]]
        n2 = int(cfg["n2"])
        pts = sphere.sample_sphere(dim, 2 * int(cfg["pair_count"]), seed)
        pairs = [(pts[2 * i], pts[2 * i + 1]) for i in range(int(cfg["pair_count"]))]
        rows = []
        for n1 in n1_values:
            shape = features.NetworkShape(n0=dim, hidden=(n1, n2), T=1)
            for row in features.deviation_probe(shape, spec, pairs, reps, seed):
                rows.append(
                    (n1, n2, row.pair_index, row.emp_mean, row.emp_stderr,
                     row.nngp_value, row.gap, row.significant)
                )
        _write_csv(
            out / "deviation_probe.csv",
            ["n1", "n2", "pair", "emp_mean", "stderr", "nngp", "gap", "significant"],
            rows,
            meta,
        )
    else:
        raise ConfigError("probe mode must be 'variance' or 'deviation'")


def cmd_funk_hecke(cfg: dict, out: Path, unsafe: bool, workers: int) -> None:
    spec = _activation(cfg["activation"])
    dim = int(cfg["n"])
    model = (
        _depth1_kernel(spec, dim)
        if int(cfg["depth"]) == 1
        else kernel.recursion_kernel(spec, int(cfg["depth"]), dim)
    )
    profile = kernel.unit_sphere_profile(model)
    quad_order = cfg["quad_order"]
    rows = [
        (k, sphere.funk_hecke(profile, dim, k, quad_order=quad_order))
        for k in range(int(cfg["k_max"]) + 1)
    ]
    _write_csv(out / "funk_hecke.csv", ["k", "lambda"], rows, _meta("funk-hecke", cfg))


_COMMANDS = {
    "kernel-eval": (
        cmd_kernel_eval,
        {
            "activation": "gaussian", "n": 3, "depth": 1, "quad_order": 40,
            "points": None, "sample_count": 8, "pairs": None, "seed": None,
        },
    ),
    "spectrum": (
        cmd_spectrum,
        {
            "activation": "cos:a=1.0", "n": 3, "n_points": 4000,
            "n_features": 4000, "cut_rule": "plateau", "margin": 0.15,
            "seed": None,
        },
    ),
    "rate": (
        cmd_rate,
        {
            "activation": "cos:a=1.0", "n": 3,
            "t_values": [64, 128, 256, 512, 1024, 2048, 4096],
            "seeds": [0, 1, 2, 3, 4], "n_train": 8192, "n_test": None,
            "ridge": None, "target_centers": 8, "seed": None,
        },
    ),
    "rfm-harmonic": (
        cmd_rfm_harmonic,
        {
            "activations": ["relu", "cos:a=1.0", "gaussian"], "n": 3,
            "k_values": [4, 6], "t_values": [4096], "seeds": [0, 1, 2],
            "n_train": 8192, "n_test": 2000, "ridge": None, "seed": None,
        },
    ),
    "train": (
        cmd_train,
        {
            "activation": "gaussian", "n": 3, "k": 6, "hidden": 1024,
            "lr": 0.01, "epochs": 200, "batch_size": 128,
            "seeds": [0, 1, 2, 3, 4], "init_from_rfm": False,
            "n_train": 10000, "n_test": 2000, "ridge": None, "seed": None,
        },
    ),
    "probe": (
        cmd_probe,
        {
            "mode": "variance", "activation": "gaussian", "n": 3,
            "h_values": [1, 2, 3], "width_values": [16, 64, 256],
            "repetitions": 2000, "n1_values": [16, 64, 256], "n2": 512,
            "pair_count": 5, "seed": None,
        },
    ),
    "funk-hecke": (
        cmd_funk_hecke,
        {
            "activation": "gaussian", "n": 3, "k_max": 20,
            "quad_order": None, "depth": 1, "seed": None,
        },
    ),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nngplab",
        description="Reproduce kernel, random-feature and spectrum experiments at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, defaults) in _COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--unsafe-large", action="store_true")
        for key, default in defaults.items():
            flag = "--" + key.replace("_", "-")
            if isinstance(default, bool):
                p.add_argument(flag, dest=key, default=None, type=_parse_bool)
            elif isinstance(default, int) and not isinstance(default, bool):
                p.add_argument(flag, dest=key, default=None, type=int)
            elif isinstance(default, float):
                p.add_argument(flag, dest=key, default=None, type=float)
            elif isinstance(default, list):
                p.add_argument(flag, dest=key, default=None, type=_parse_json_list)
            else:
                p.add_argument(flag, dest=key, default=None)
    return parser


def _parse_bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes"):
        return True
    if text.lower() in ("0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _parse_json_list(text: str):
    value = json.loads(text)
    if not isinstance(value, list):
        raise argparse.ArgumentTypeError("expected a JSON list")
    return value


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handler, defaults = _COMMANDS[args.command]
    try:
        cfg = _load_config(defaults, args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        workers = args.threads if args.threads is not None else _env_int("NNGPLAB_THREADS", 1)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        handler(cfg, out, args.unsafe_large, workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
