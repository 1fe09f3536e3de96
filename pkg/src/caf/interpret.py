"""Diagnostic artifacts derived from attention traces.

Three families of output, each as CSV plus SVG:

* spatial heatmaps -- the second spatial attention pass at one in-window
  step, either for a single window or averaged over many; forbidden cells
  are exactly zero by construction;
* variable importance -- per-window encoder selection weights averaged over
  the B in-window steps, then summarized over windows (mean, std, deciles);
* temporal weight curves -- per horizon step k, the median decoder attention
  row over windows, indexed by the time offset t from the forecast origin
  (t ranges over -B+1 .. tau; cells with t > k are masked to zero).

The in-window averaging choice for importance is a documented convention of
this package, not a property of the traces themselves.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, StateError
from .model import AttentionTrace
from .svg import heatmap_svg, line_plot_svg


def _require(traces: list[AttentionTrace], minimum: int = 1) -> None:
    if len(traces) < minimum:
        raise StateError(f"need at least {minimum} trace(s), got {len(traces)}")


def spatial_heatmap(traces: list[AttentionTrace], reduce: str = "mean", step: int = -1) -> np.ndarray:
    """p x p second-pass spatial attention at in-window step `step`.

    reduce="single" takes the first trace; "mean" averages over all traces.
    """
    _require(traces)
    if reduce == "single":
        return traces[0].spatial_second[step].copy()
    if reduce == "mean":
        return np.mean([t.spatial_second[step] for t in traces], axis=0)
    raise ConfigError(f"unknown reduce mode {reduce!r}")


def per_window_importance(traces: list[AttentionTrace]) -> np.ndarray:
    """(N, p) encoder selection weights, averaged over the B in-window steps."""
    _require(traces)
    return np.stack([t.vsn_encoder_weights.mean(axis=0) for t in traces])


def variable_importance(traces: list[AttentionTrace], variables: list[str]) -> dict:
    """Cross-window summary of each variable's selection weight."""
    _require(traces, minimum=2)
    imp = per_window_importance(traces)
    out = {}
    for j, name in enumerate(variables):
        col = imp[:, j]
        out[name] = {
            "mean": float(col.mean()),
            "std": float(col.std()),
            "q10": float(np.quantile(col, 0.10)),
            "q50": float(np.quantile(col, 0.50)),
            "q90": float(np.quantile(col, 0.90)),
        }
    return out


def temporal_weight_curves(traces: list[AttentionTrace]) -> tuple[np.ndarray, np.ndarray]:
    """Median decoder attention per horizon step.

    Returns (offsets, curves): offsets are the time positions t in
    {-B+1, ..., tau} relative to the forecast origin; curves[k-1, j] is the
    median over windows of the decoder attention from horizon step k to
    offset offsets[j].
    """
    _require(traces)
    total = traces[0].temporal_decoder.shape[0]
    horizon = traces[0].vsn_local_weights.shape[0]
    history = total - horizon
    stacked = np.stack([t.temporal_decoder[history:, :] for t in traces])  # (N, tau, B+tau)
    curves = np.median(stacked, axis=0)
    offsets = np.arange(-history + 1, horizon + 1)
    return offsets, curves


def importance_timeline(
    traces: list[AttentionTrace],
    origins: np.ndarray,
    variable: str,
    variables: list[str],
    observations: np.ndarray,
) -> list[tuple]:
    """(timestamp, importance, raw observation) per window for one variable."""
    if variable not in variables:
        raise ConfigError(f"unknown variable {variable!r}")
    _require(traces)
    if not (len(traces) == len(origins) == len(observations)):
        raise StateError("traces, origins and observations must align")
    j = variables.index(variable)
    imp = per_window_importance(traces)[:, j]
    return [
        (origins[i], float(imp[i]), float(observations[i])) for i in range(len(traces))
    ]


# -- artifact writers ------------------------------------------------------------


def write_heatmap_artifacts(matrix: np.ndarray, labels: list[str], out_dir, stamp: str,
                            title: str = "spatial attention") -> tuple[str, str]:
    csv_path = f"{out_dir}/heatmap_{stamp}.csv"
    svg_path = f"{out_dir}/heatmap_{stamp}.svg"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("variable," + ",".join(labels) + "\n")
        for label, row in zip(labels, matrix):
            fh.write(label + "," + ",".join(repr(float(v)) for v in row) + "\n")
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write(heatmap_svg(matrix, labels, title))
    return csv_path, svg_path


def write_importance_artifacts(stats: dict, out_dir, stamp: str) -> tuple[str, str]:
    csv_path = f"{out_dir}/importance_{stamp}.csv"
    svg_path = f"{out_dir}/importance_{stamp}.svg"
    names = list(stats)
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("variable,mean,std,q10,q50,q90\n")
        for name in names:
            s = stats[name]
            fh.write(
                f"{name},{s['mean']!r},{s['std']!r},{s['q10']!r},{s['q50']!r},{s['q90']!r}\n"
            )
    matrix = np.array([[stats[n][k] for k in ("q10", "q50", "q90")] for n in names])
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write(heatmap_svg(matrix, names, "variable importance deciles (q10,q50,q90)"))
    return csv_path, svg_path


def write_curves_artifacts(offsets: np.ndarray, curves: np.ndarray, out_dir, stamp: str) -> tuple[str, str]:
    csv_path = f"{out_dir}/temporal_{stamp}.csv"
    svg_path = f"{out_dir}/temporal_{stamp}.svg"
    horizon = curves.shape[0]
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("t," + ",".join(f"k{k}" for k in range(1, horizon + 1)) + "\n")
        for j, t in enumerate(offsets):
            fh.write(str(int(t)) + "," + ",".join(repr(float(curves[k, j])) for k in range(horizon)) + "\n")
    series = {f"k={k + 1}": curves[k] for k in range(horizon)}
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write(
            line_plot_svg(
                offsets, series, "median temporal attention by horizon step",
                xlabel="offset t from forecast origin (hours)", ylabel="median weight",
            )
        )
    return csv_path, svg_path


def write_timeline_artifacts(rows: list[tuple], variable: str, out_dir, stamp: str) -> tuple[str, str]:
    csv_path = f"{out_dir}/timeline_{variable}_{stamp}.csv"
    svg_path = f"{out_dir}/timeline_{variable}_{stamp}.svg"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("timestamp,importance,observation\n")
        for ts, imp, obs in rows:
            fh.write(f"{ts},{imp!r},{obs!r}\n")
    x = np.arange(len(rows))
    imp = np.array([r[1] for r in rows])
    obs = np.array([r[2] for r in rows])
    scale = np.abs(obs).max()
    obs_scaled = obs / scale if scale > 0 else obs
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write(
            line_plot_svg(
                x,
                {"importance": imp, "observation (scaled)": obs_scaled},
                f"importance timeline: {variable}",
                xlabel="window index (chronological)",
                ylabel="weight / scaled value",
            )
        )
    return csv_path, svg_path
