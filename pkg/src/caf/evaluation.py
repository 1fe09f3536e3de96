"""Test-set scoring, sanity baselines, and the stable-vs-shift harness.

Scores are computed in original (denormalized) units. The level-q loss is
reported both as the raw sum over test origins and horizons and as the
per-point average (denominator: number of windows times horizon length).
The calibration rate counts observations strictly below the level-q
forecast; ties count as not below.

Baselines forecast in the windows' own units and share the quantile recipe
y_base + z_q * sigma with sigma a pooled residual standard deviation from
the training windows and z_q the standard normal quantile.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .data import SplitSpec, WindowSet, compute_stats, make_windows, normalize, split
from .errors import ConfigError
from .model import Forecaster, ModelConfig
from .params import ParamStore
from .rng import derive_seed
from .training import TrainConfig, fit


@dataclass(frozen=True)
class QLevelScore:
    total: float  # summed pinball loss over all origins and horizons
    average: float  # total / (n_windows * horizon)
    n_points: int


def _level_index(quantiles, q: float) -> int:
    for i, level in enumerate(quantiles):
        if abs(level - q) < 1e-12:
            return i
    raise ConfigError(f"level {q} is not among the trained quantiles {tuple(quantiles)}")


def q_level_ql(y: np.ndarray, forecasts: np.ndarray, quantiles, q: float) -> QLevelScore:
    """Summed and per-point pinball loss at one level over (N, tau) targets."""
    col = _level_index(quantiles, q)
    yhat = forecasts[..., col]
    err = y - yhat
    loss = np.maximum(q * err, (q - 1.0) * err)
    return QLevelScore(total=float(loss.sum()), average=float(loss.mean()), n_points=loss.size)


def q_rate(y: np.ndarray, forecasts: np.ndarray, quantiles, q: float) -> float:
    """Fraction of observations strictly below the level-q forecast."""
    col = _level_index(quantiles, q)
    return float((y < forecasts[..., col]).mean())


def score_all_levels(y: np.ndarray, forecasts: np.ndarray, quantiles) -> dict:
    out = {}
    for q in quantiles:
        ql = q_level_ql(y, forecasts, quantiles, q)
        rate = q_rate(y, forecasts, quantiles, q)
        out[f"{q:g}"] = {
            "total_ql": ql.total,
            "avg_ql": ql.average,
            "q_rate": rate,
            "abs_gap": abs(q - rate),
        }
    return out


# -- unit handling ---------------------------------------------------------------


def _target_scale(ws: WindowSet) -> tuple[float, float]:
    if ws.stats is None:
        return 0.0, 1.0
    i = ws.variables.index(ws.target)
    return float(ws.stats.mean[i]), float(ws.stats.std[i])


def denormalized_targets(ws: WindowSet) -> np.ndarray:
    mean, std = _target_scale(ws)
    return ws.y * std + mean


def denormalize_forecasts(ws: WindowSet, forecasts: np.ndarray) -> np.ndarray:
    mean, std = _target_scale(ws)
    return forecasts * std + mean


def target_history(ws: WindowSet) -> np.ndarray:
    """(N, B) target-variable history in window units."""
    return ws.x[:, :, ws.variables.index(ws.target)]


# -- baselines ----------------------------------------------------------------------


def persistence_sigma(train: WindowSet) -> float:
    """Pooled std of horizon residuals y_{u+k} - y_u over the training windows."""
    last = target_history(train)[:, -1:]
    return float((train.y - last).std())


def baseline_persistence(ws: WindowSet, quantiles, sigma: float) -> np.ndarray:
    """Forecast the last observed target value, offset by z_q * sigma per level."""
    last = target_history(ws)[:, -1]
    z = ndtri(np.asarray(quantiles, dtype=np.float64))
    tau = ws.y.shape[1]
    base = np.repeat(last[:, None], tau, axis=1)
    return base[:, :, None] + z * sigma


def _seasonal_rows(history: int, horizon: int, period: int) -> np.ndarray:
    if history < period:
        raise ConfigError(f"seasonal baseline needs history >= period ({history} < {period})")
    rows = []
    for k in range(1, horizon + 1):
        lag = period * int(np.ceil(k / period))
        rows.append(history - 1 + k - lag)
    return np.asarray(rows)


def seasonal_sigma(train: WindowSet, period: int = 12) -> float:
    hist = target_history(train)
    rows = _seasonal_rows(hist.shape[1], train.y.shape[1], period)
    return float((train.y - hist[:, rows]).std())


def baseline_seasonal_naive(ws: WindowSet, quantiles, sigma: float, period: int = 12) -> np.ndarray:
    """Forecast the target one season back, offset by z_q * sigma per level."""
    hist = target_history(ws)
    rows = _seasonal_rows(hist.shape[1], ws.y.shape[1], period)
    z = ndtri(np.asarray(quantiles, dtype=np.float64))
    return hist[:, rows][:, :, None] + z * sigma


# -- model scoring ---------------------------------------------------------------------


def model_forecasts(model: Forecaster, params: ParamStore, ws: WindowSet,
                    chunk: int = 256) -> np.ndarray:
    """Denormalized (N, tau, |Q|) forecasts, evaluated in chunks."""
    outs = []
    for start in range(0, len(ws), chunk):
        sub = ws.subset(np.arange(start, min(start + chunk, len(ws))))
        yhat, _ = model.forward_batch(sub.x, sub.times, params)
        outs.append(yhat.values)
    return model.denormalize_target(np.concatenate(outs, axis=0))


# -- stable vs shift harness --------------------------------------------------------------


def _windows_for(parts, model_cfg: ModelConfig, target: str, stride: int = 1):
    train_ds, val_ds, test_ds = parts
    stats = compute_stats(train_ds)
    out = []
    for ds in (train_ds, val_ds, test_ds):
        out.append(
            make_windows(
                normalize(ds, stats), model_cfg.history, model_cfg.horizon, target,
                stride=stride,
            )
        )
    return out, stats


def _score_split(
    net,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    parts,
    include_model: bool,
    seed_label: str,
    stride: int = 1,
) -> dict:
    (train_ws, val_ws, test_ws), stats = _windows_for(parts, model_cfg, net.target_variable, stride)
    y_true = denormalized_targets(test_ws)
    quantiles = model_cfg.quantiles

    methods: dict[str, np.ndarray] = {}
    sigma_p = persistence_sigma(train_ws)
    methods["persistence"] = denormalize_forecasts(
        test_ws, baseline_persistence(test_ws, quantiles, sigma_p)
    )
    if model_cfg.history >= 12:
        sigma_s = seasonal_sigma(train_ws, period=12)
        methods["seasonal_naive"] = denormalize_forecasts(
            test_ws, baseline_seasonal_naive(test_ws, quantiles, sigma_s, period=12)
        )
    if include_model:
        model = Forecaster(model_cfg, net, stats=stats)
        params = model.init_params(derive_seed(train_cfg.seed, f"params/{seed_label}"))
        fit(model, params, train_ws, val_ws, train_cfg)
        methods["model"] = model_forecasts(model, params, test_ws)

    return {
        "n_windows": len(test_ws),
        "methods": {name: score_all_levels(y_true, fc, quantiles) for name, fc in methods.items()},
    }


def compare_shift(
    ds,
    net,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    stable_spec: SplitSpec | None = None,
    shift_spec: SplitSpec | None = None,
    include_model: bool = True,
    stride: int = 1,
) -> dict:
    """Score every method under the chronological and the monthly-shift split.

    The shift protocol fits year-specifically: each year with both training
    and test months gets its own fit, and scores are pooled across years.
    """
    stable_spec = stable_spec or SplitSpec(mode="chronological")
    shift_spec = shift_spec or SplitSpec(mode="monthly-shift")
    report: dict = {"quantiles": list(model_cfg.quantiles)}

    report["stable"] = _score_split(
        net, model_cfg, train_cfg, split(ds, stable_spec), include_model, "stable", stride
    )

    years = sorted(set(ds.years().tolist())) if shift_spec.years is None else list(shift_spec.years)
    months = ds.calendar()[:, 0]
    ds_years = ds.years()
    per_year = []
    usable_years = []
    for year in years:
        in_year = ds_years == year
        if not (
            np.isin(months[in_year], shift_spec.train_months).any()
            and np.isin(months[in_year], shift_spec.test_months).any()
        ):
            continue
        year_spec = SplitSpec(
            mode="monthly-shift",
            train_months=shift_spec.train_months,
            test_months=shift_spec.test_months,
            years=(year,),
            val_fraction=shift_spec.val_fraction,
        )
        per_year.append(
            _score_split(
                net, model_cfg, train_cfg, split(ds, year_spec), include_model,
                f"shift/{year}", stride,
            )
        )
        usable_years.append(year)
    if not per_year:
        raise ConfigError("no year has both training and test months for the shift protocol")

    pooled: dict = {"years": usable_years, "n_windows": sum(r["n_windows"] for r in per_year)}
    method_names = per_year[0]["methods"].keys()
    pooled["methods"] = {}
    for name in method_names:
        pooled["methods"][name] = {}
        for q in model_cfg.quantiles:
            key = f"{q:g}"
            totals = sum(r["methods"][name][key]["total_ql"] for r in per_year)
            below = sum(r["methods"][name][key]["q_rate"] * r["n_windows"] for r in per_year)
            n_windows = pooled["n_windows"]
            rate = below / n_windows
            pooled["methods"][name][key] = {
                "total_ql": totals,
                "avg_ql": totals / (n_windows * model_cfg.horizon),
                "q_rate": rate,
                "abs_gap": abs(q - rate),
            }
    report["shift"] = pooled
    return report


def format_report_table(report: dict) -> str:
    """Aligned-column text rendering of a compare/evaluate report."""
    lines = []
    for section in ("stable", "shift"):
        if section not in report:
            continue
        block = report[section]
        lines.append(f"[{section}]  windows={block['n_windows']}")
        methods = block["methods"]
        header = f"  {'metric':<12}{'q':>6}" + "".join(f"{m:>18}" for m in methods)
        lines.append(header)
        for metric, fmt in (("avg_ql", "{:.6f}"), ("q_rate", "{:.3f}"), ("abs_gap", "{:.3f}")):
            for q in report["quantiles"]:
                key = f"{q:g}"
                row = f"  {metric:<12}{key:>6}"
                for m in methods:
                    row += f"{fmt.format(methods[m][key][metric]):>18}"
                lines.append(row)
        lines.append("")
    return "\n".join(lines)
