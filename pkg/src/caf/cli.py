"""Command-line entry point: synth, train, evaluate, interpret.

Every command is a pure function of its flags, input files, and seed, so
identical invocations write identical outputs (the training history CSV's
wall-clock seconds column is the one timing exception).

Exit codes: 0 success, 2 configuration or usage error, 3 data error,
4 numeric divergence. Log level comes from the CAF_LOG environment variable
(error, info, or debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation, interpret
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    SplitSpec,
    SynthSpec,
    compute_stats,
    make_windows,
    normalize,
    parse_csv,
    repair_gaps,
    split,
    synth_generate,
    write_csv,
    write_event_log,
)
from .errors import CafError, ConfigError, DataError, DivergedError, NumericError, SchemaError
from .graph import load_network, validate_assumptions
from .model import Forecaster, ModelConfig
from .rng import derive_seed
from .training import TrainConfig, fit, write_history_csv

log = logging.getLogger("caf")

_CONFIG_KEYS = {"model", "train", "split"}
_SPLIT_KEYS = {
    "mode", "fractions", "train_years", "val_years", "test_years",
    "train_months", "test_months", "years", "val_fraction",
}


def _setup_logging() -> None:
    level = os.environ.get("CAF_LOG", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise ConfigError(f"CAF_LOG must be one of {sorted(levels)}, got {level!r}")
    logging.basicConfig(level=levels[level], format="%(levelname)s %(message)s")


def _load_run_config(path) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    unknown = set(obj) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    return obj


def _split_spec_from(obj: dict | None) -> SplitSpec:
    if not obj:
        return SplitSpec()
    unknown = set(obj) - _SPLIT_KEYS
    if unknown:
        raise ConfigError(f"unknown split keys {sorted(unknown)}")
    kwargs = dict(obj)
    for key in ("fractions", "train_years", "val_years", "test_years",
                "train_months", "test_months", "years"):
        if kwargs.get(key) is not None:
            kwargs[key] = tuple(kwargs[key])
    return SplitSpec(**kwargs)


def _model_config_from(obj: dict | None) -> ModelConfig:
    if obj is None:
        raise ConfigError("run config must carry a 'model' section")
    kwargs = dict(obj)
    if "quantiles" in kwargs:
        kwargs["quantiles"] = tuple(kwargs["quantiles"])
    try:
        return ModelConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad model config: {exc}") from exc


def _train_config_from(obj: dict | None, seed_override: int | None) -> TrainConfig:
    kwargs = dict(obj or {})
    if seed_override is not None:
        kwargs["seed"] = seed_override
    try:
        return TrainConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad train config: {exc}") from exc


def _prepared_windows(data_path, net, model_cfg, split_spec, max_gap, stats=None):
    ds = repair_gaps(parse_csv(data_path, net.variables), max_gap=max_gap)
    parts = split(ds, split_spec)
    if stats is None:
        stats = compute_stats(parts[0])
    windows = [
        make_windows(normalize(part, stats), model_cfg.history, model_cfg.horizon,
                     net.target_variable)
        if len(part) else None
        for part in parts
    ]
    return ds, parts, windows, stats


# -- commands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = SynthSpec(
        spike_rate=args.spike_rate,
        noise_std=args.noise,
        start=args.start,
        monthly_spike_scale=tuple((int(m), float(s)) for m, s in
                                  (pair.split(":") for pair in args.scale_month)),
    )
    ds, events, net_cfg = synth_generate(args.seed, args.hours, spec)
    write_csv(ds, out / "data.csv")
    write_event_log(events, out / "events.json")
    with open(out / "network.json", "w", encoding="utf-8") as fh:
        json.dump(net_cfg, fh, sort_keys=True, indent=2)
    log.info("wrote %s rows to %s", len(ds), out / "data.csv")
    return 0


def cmd_train(args) -> int:
    run_cfg = _load_run_config(args.config)
    split_spec = _split_spec_from(run_cfg.get("split"))
    train_cfg = _train_config_from(run_cfg.get("train"), args.seed)

    if args.resume:
        model, params = load_checkpoint(args.resume)
        net, model_cfg, stats = model.net, model.config, model.stats
        _, _, windows, _ = _prepared_windows(
            args.data, net, model_cfg, split_spec, args.max_gap, stats=stats
        )
    else:
        net = load_network(args.network)
        for warning in validate_assumptions(net).warnings:
            log.warning("network: %s", warning)
        model_cfg = _model_config_from(run_cfg.get("model"))
        _, _, windows, stats = _prepared_windows(
            args.data, net, model_cfg, split_spec, args.max_gap
        )
        model = Forecaster(model_cfg, net, stats=stats)
        params = model.init_params(derive_seed(train_cfg.seed, "params"))

    train_ws, val_ws, _ = windows
    if val_ws is None or len(val_ws) == 0:
        raise ConfigError("training requires a non-empty validation split")
    log.info(
        "training on %d windows (validating on %d), %d parameter values",
        len(train_ws), len(val_ws), params.n_values(),
    )
    result = fit(
        model, params, train_ws, val_ws, train_cfg,
        log=lambda row: log.info(
            "epoch %3d  train %.5f  val %.5f", row["epoch"], row["train_cql"], row["val_cql"]
        ),
    )
    save_checkpoint(args.out, model, params)
    if args.history:
        write_history_csv(result.history, args.history, append=bool(args.resume))
    log.info("best epoch %d (val %.5f); checkpoint at %s",
             result.best_epoch, result.best_val_cql, args.out)
    return 0


def cmd_evaluate(args) -> int:
    run_cfg = _load_run_config(args.config)
    include_model = not args.baselines_only

    if include_model and not args.ckpt:
        raise ConfigError("evaluation needs --ckpt (or pass --baselines-only)")

    if args.ckpt:
        model, params = load_checkpoint(args.ckpt)
        net, model_cfg = model.net, model.config
    else:
        if not args.network:
            raise ConfigError("--baselines-only evaluation needs --network")
        net = load_network(args.network)
        model_cfg = _model_config_from(run_cfg.get("model"))

    if args.split == "monthly-shift":
        # refits per split mode and year; the checkpoint supplies configuration
        train_cfg = _train_config_from(run_cfg.get("train"), None)
        ds = repair_gaps(parse_csv(args.data, net.variables), max_gap=args.max_gap)
        stable_spec = _split_spec_from(run_cfg.get("split"))
        report = evaluation.compare_shift(
            ds, net, model_cfg, train_cfg,
            stable_spec=stable_spec,
            include_model=include_model,
        )
    else:
        split_spec = _split_spec_from(run_cfg.get("split"))
        stats = model.stats if args.ckpt else None
        _, _, windows, stats = _prepared_windows(
            args.data, net, model_cfg, split_spec, args.max_gap, stats=stats
        )
        train_ws, _, test_ws = windows
        y_true = evaluation.denormalized_targets(test_ws)
        quantiles = model_cfg.quantiles
        methods = {}
        sigma_p = evaluation.persistence_sigma(train_ws)
        methods["persistence"] = evaluation.denormalize_forecasts(
            test_ws, evaluation.baseline_persistence(test_ws, quantiles, sigma_p)
        )
        if model_cfg.history >= 12:
            sigma_s = evaluation.seasonal_sigma(train_ws, period=12)
            methods["seasonal_naive"] = evaluation.denormalize_forecasts(
                test_ws, evaluation.baseline_seasonal_naive(test_ws, quantiles, sigma_s)
            )
        if include_model:
            methods["model"] = evaluation.model_forecasts(model, params, test_ws)
        report = {
            "quantiles": list(quantiles),
            "stable": {
                "n_windows": len(test_ws),
                "methods": {
                    name: evaluation.score_all_levels(y_true, fc, quantiles)
                    for name, fc in methods.items()
                },
            },
        }

    text = evaluation.format_report_table(report)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, separators=(",", ":"))
    table_path = Path(args.out).with_suffix(".txt")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_interpret(args) -> int:
    run_cfg = _load_run_config(args.config)
    model, params = load_checkpoint(args.ckpt)
    net, model_cfg = model.net, model.config
    split_spec = _split_spec_from(run_cfg.get("split"))
    _, parts, windows, _ = _prepared_windows(
        args.data, net, model_cfg, split_spec, args.max_gap, stats=model.stats
    )
    test_ws = windows[2]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    traces = []
    for start in range(0, len(test_ws), 256):
        sub = test_ws.subset(np.arange(start, min(start + 256, len(test_ws))))
        _, chunk = model.forward_batch(sub.x, sub.times, params, want_trace=True)
        traces.extend(chunk)
    stamp = f"{_stamp(test_ws.origins[0])}_{_stamp(test_ws.origins[-1])}"
    labels = net.variables

    if args.what == "heatmap":
        matrix = interpret.spatial_heatmap(traces, reduce=args.reduce)
        csv_path, svg_path = interpret.write_heatmap_artifacts(matrix, labels, out, stamp)
    elif args.what == "importance":
        stats = interpret.variable_importance(traces, labels)
        csv_path, svg_path = interpret.write_importance_artifacts(stats, out, stamp)
        if args.variable:
            raw = parts[2].column(args.variable)
            idx = {ts: i for i, ts in enumerate(parts[2].timestamps.tolist())}
            observations = np.array([raw[idx[ts]] for ts in test_ws.origins.tolist()])
            rows = interpret.importance_timeline(
                traces, test_ws.origins, args.variable, labels, observations
            )
            interpret.write_timeline_artifacts(rows, args.variable, out, stamp)
    elif args.what == "temporal":
        offsets, curves = interpret.temporal_weight_curves(traces)
        csv_path, svg_path = interpret.write_curves_artifacts(offsets, curves, out, stamp)
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown artifact {args.what!r}")
    log.info("wrote %s and %s", csv_path, svg_path)
    return 0


def _stamp(ts) -> str:
    return str(ts).replace(":", "").replace("-", "")


# -- argument parsing --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="caf",
        description="Causal attention forecaster: train, evaluate, and interpret "
        "probabilistic multi-horizon forecasts with a declared cause structure.",
    )
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap (this implementation runs single-threaded)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset with planted structure")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hours", type=int, default=4000)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--spike-rate", type=float, default=SynthSpec.spike_rate)
    p.add_argument("--noise", type=float, default=SynthSpec.noise_std)
    p.add_argument("--start", default=SynthSpec.start)
    p.add_argument("--scale-month", action="append", default=[],
                   metavar="MONTH:FACTOR", help="scale spike rate in one month")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a model and write a checkpoint")
    p.add_argument("--data", required=True, help="CSV data file")
    p.add_argument("--network", help="network declaration JSON (omit with --resume)")
    p.add_argument("--config", help="run config JSON with model/train/split sections")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="training history CSV path")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--seed", type=int, help="override the training seed")
    p.add_argument("--max-gap", type=int, default=6)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint and the baselines")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt")
    p.add_argument("--network", help="needed for --baselines-only")
    p.add_argument("--config", help="run config JSON (split/train sections)")
    p.add_argument("--split", choices=["chronological", "monthly-shift"],
                   default="chronological")
    p.add_argument("--baselines-only", action="store_true")
    p.add_argument("--out", required=True, help="JSON report path (.txt table beside it)")
    p.add_argument("--max-gap", type=int, default=6)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("interpret", help="emit attention/importance artifacts")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--what", choices=["heatmap", "importance", "temporal"], required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="run config JSON (split section)")
    p.add_argument("--variable", help="also emit a timeline for this variable")
    p.add_argument("--reduce", choices=["mean", "single"], default="mean")
    p.add_argument("--max-gap", type=int, default=6)
    p.set_defaults(func=cmd_interpret)
    return parser


def main(argv=None) -> int:
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        return args.func(args)
    except (ConfigError,) as exc:
        log.error("config: %s", exc)
        return 2
    except (SchemaError, DataError) as exc:
        log.error("data: %s", exc)
        return 3
    except DivergedError as exc:
        log.error("diverged: %s", exc)
        return 4
    except NumericError as exc:
        log.error("numeric: %s", exc)
        return 4
    except OSError as exc:
        log.error("io: %s", exc)
        return 3
    except CafError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
