"""The forecaster: embedding, masked spatial/temporal attention, quantile heads.

One forward pass maps a history of p covariates over B hours plus calendar
features for B+tau hours to tau rows of quantile forecasts. The pipeline is

    embed -> spatial attention -> temporal attention over compressed states
          -> second spatial attention -> per-step compression
          -> context pooling -> full-range temporal attention -> linear heads

Both spatial attention passes share one permit mask compiled from the
declared cause graph, so a variable can never draw weight from a variable
whose cluster was not declared as one of its causes; the temporal passes use
lower-triangular masks so no step sees the future. Every attention weight
matrix and every row-compression weight vector is recorded in an
AttentionTrace, which is the raw material for the interpretability reports.

Internally all stages are batched over windows (leading axis N); the public
single-window ``forward`` is a thin wrapper that also denormalizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, InputError, ShapeError, StateError
from .graph import MultilayerNetwork, spatial_mask, temporal_mask
from .params import ParamStore
from .rng import Rng

TIME_TABLE_SIZES = {"month": 12, "day": 31, "hour": 24}


@dataclass(frozen=True)
class ModelConfig:
    history: int  # B, hours of covariate history
    horizon: int  # tau, hours forecast ahead
    quantiles: tuple[float, ...] = (0.1, 0.5, 0.7, 0.9)
    d_embed: int = 3  # covariate/time embedding width
    d_hidden: int = 10  # hidden feature width
    d_attn: int = 10  # attention key width
    dropout: float = 0.1

    def __post_init__(self):
        if self.history < 1 or self.horizon < 1:
            raise ConfigError("history and horizon must be >= 1")
        if min(self.d_embed, self.d_hidden, self.d_attn) < 1:
            raise ConfigError("layer widths must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        q = tuple(float(v) for v in self.quantiles)
        if not q or any(not 0.0 < v < 1.0 for v in q):
            raise ConfigError("quantile levels must lie strictly inside (0, 1)")
        if any(b <= a for a, b in zip(q, q[1:])):
            raise ConfigError("quantile levels must be strictly increasing")
        object.__setattr__(self, "quantiles", q)

    def to_dict(self) -> dict:
        return {
            "history": self.history,
            "horizon": self.horizon,
            "quantiles": list(self.quantiles),
            "d_embed": self.d_embed,
            "d_hidden": self.d_hidden,
            "d_attn": self.d_attn,
            "dropout": self.dropout,
        }

    @staticmethod
    def from_dict(obj: dict) -> "ModelConfig":
        return ModelConfig(
            history=int(obj["history"]),
            horizon=int(obj["horizon"]),
            quantiles=tuple(obj["quantiles"]),
            d_embed=int(obj["d_embed"]),
            d_hidden=int(obj["d_hidden"]),
            d_attn=int(obj["d_attn"]),
            dropout=float(obj["dropout"]),
        )


@dataclass(frozen=True)
class TimeFeature:
    month: int  # 1..12
    day: int  # 1..31
    hour: int  # 0..23

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise InputError(f"month out of range: {self.month}")
        if not 1 <= self.day <= 31:
            raise InputError(f"day out of range: {self.day}")
        if not 0 <= self.hour <= 23:
            raise InputError(f"hour out of range: {self.hour}")


@dataclass
class SeriesWindow:
    """One sample: covariate history, calendar row per step, horizon targets."""

    x: np.ndarray  # (B, p), normalized units
    times: tuple[TimeFeature, ...]  # length B + tau
    y: np.ndarray | None = None  # (tau,), normalized units; None at inference
    origin: object = None  # timestamp of the last history step, for bookkeeping


@dataclass
class AttentionTrace:
    """Everything a forward pass committed to attention and selection weights."""

    spatial_first: np.ndarray  # (B, p, p)
    spatial_second: np.ndarray  # (B, p, p)
    temporal_encoder: np.ndarray  # (B, B)
    temporal_decoder: np.ndarray  # (B+tau, B+tau)
    vsn_encoder_weights: np.ndarray  # (B, p)
    vsn_global_weights: np.ndarray  # (B,)
    vsn_local_weights: np.ndarray  # (tau, 3)


@dataclass
class ForecastQuantiles:
    values: np.ndarray  # (tau, |Q|), original units
    quantiles: tuple[float, ...]


def times_to_array(times) -> np.ndarray:
    """(month, day, hour) int rows for a sequence of TimeFeature."""
    return np.array([[t.month, t.day, t.hour] for t in times], dtype=np.int64)


class Forecaster:
    """Masked-attention quantile forecaster over a declared cause graph.

    `apply_spatial_mask=False` is the ablation hook: the temporal masks stay,
    but both spatial attention passes run all-permit, so attention may leak
    across undeclared cause edges.
    """

    def __init__(
        self,
        config: ModelConfig,
        net: MultilayerNetwork,
        stats=None,
        apply_spatial_mask: bool = True,
    ):
        self.config = config
        self.net = net
        self.p = net.p
        self.stats = stats  # needs .mean and .std arrays aligned to net.variables
        self.apply_spatial_mask = apply_spatial_mask
        compiled = spatial_mask(net).permit
        self.spatial_permit = compiled if apply_spatial_mask else np.ones_like(compiled)
        self.temporal_permit = temporal_mask(config.history).permit
        self.temporal_permit_full = temporal_mask(config.history + config.horizon).permit
        self.target_index = net.variables.index(net.target_variable)

    # -- parameters -----------------------------------------------------------

    def init_params(self, seed: int) -> ParamStore:
        cfg = self.config
        p, d1, d2, d3 = self.p, cfg.d_embed, cfg.d_hidden, cfg.d_attn
        nq = len(cfg.quantiles)
        store = ParamStore(seed)
        store.add("embed.w", (p, d1), fan_in=1)
        store.add("embed.b", (p, d1), zero=True)
        for name, size in TIME_TABLE_SIZES.items():
            store.add(f"time.{name}", (size, d1), fan_in=1)
        for w in ("wq", "wk", "wv"):
            store.add(f"scan1.{w}", (d1, d2))
        self._add_vsn(store, "vsn1", rows=p, width=d2)
        store.add("tan.wq", (d2, d3))
        store.add("tan.wk", (d2, d3))
        for w in ("wq", "wk", "wv"):
            store.add(f"scan2.{w}", (d2, d2))
        self._add_vsn(store, "vsn2", rows=p, width=d2)
        self._add_vsn(store, "vsn3", rows=cfg.history, width=d2)
        store.add("local.w", (d1, d2))
        store.add("local.b", (d2,), zero=True)
        self._add_vsn(store, "vsn4", rows=3, width=d2)
        for w in ("wq", "wk", "wv"):
            store.add(f"final.{w}", (d2, d3))
        store.add("head.w", (d3, nq))
        store.add("head.b", (nq,), zero=True)
        return store

    @staticmethod
    def _add_vsn(store: ParamStore, prefix: str, rows: int, width: int) -> None:
        store.add(f"{prefix}.w1", (rows * width, width))
        store.add(f"{prefix}.b1", (width,), zero=True)
        store.add(f"{prefix}.w2", (width, rows))
        store.add(f"{prefix}.b2", (rows,), zero=True)

    # -- stages ---------------------------------------------------------------

    def _drop(self, t: Tensor, rng: Rng | None) -> Tensor:
        if rng is None or self.config.dropout == 0.0:
            return t
        return ad.dropout(t, self.config.dropout, rng)

    def _time_embedding(self, t_arr: np.ndarray, params: ParamStore) -> Tensor:
        """Mean of month/day/hour table rows; t_arr is (N, steps, 3) ints."""
        month = ad.lookup(params["time.month"], t_arr[..., 0] - 1)
        day = ad.lookup(params["time.day"], t_arr[..., 1] - 1)
        hour = ad.lookup(params["time.hour"], t_arr[..., 2])
        return ad.mul(ad.add(ad.add(month, day), hour), 1.0 / 3.0)

    def embed(self, x: np.ndarray, t_hist: np.ndarray, params: ParamStore) -> Tensor:
        """Per-variable affine lift plus shared averaged time embedding.

        x is (N, B, p); t_hist is (N, B, 3). Returns (N, B, p, d_embed):
        row i of each step is w_i * x_i + b_i + time_mean.
        """
        lifted = ad.add(
            ad.mul(ad.constant(x[..., None]), params["embed.w"]), params["embed.b"]
        )
        time_part = self._time_embedding(t_hist, params)  # (N, B, d1)
        n, b, d1 = time_part.shape
        return ad.add(lifted, ad.reshape(time_part, (n, b, 1, d1)))

    def scan(self, h: Tensor, params: ParamStore, prefix: str, rng: Rng | None):
        """Spatial attention pass restricted by the compiled cause mask."""
        out, weights = ad.self_attention(
            h,
            params[f"{prefix}.wq"],
            params[f"{prefix}.wk"],
            params[f"{prefix}.wv"],
            self.spatial_permit,
        )
        return self._drop(out, rng), weights

    def vsn(self, h: Tensor, params: ParamStore, prefix: str, rng: Rng | None):
        """Compress rows of h (..., rows, d) into one vector (..., d).

        A two-layer score network over the flattened matrix produces one
        score per row; softmax turns scores into simplex weights; the output
        is the weight-averaged row.
        """
        h = self._drop(h, rng)
        lead = h.shape[:-2]
        rows, width = h.shape[-2], h.shape[-1]
        flat = ad.reshape(h, lead + (rows * width,))
        hidden = ad.elu(ad.add(ad.matmul(flat, params[f"{prefix}.w1"]), params[f"{prefix}.b1"]))
        scores = ad.add(ad.matmul(hidden, params[f"{prefix}.w2"]), params[f"{prefix}.b2"])
        weights = ad.masked_softmax(scores, None)  # (..., rows)
        pooled = ad.matmul(ad.reshape(weights, lead + (1, rows)), h)
        return ad.reshape(pooled, lead + (width,)), weights

    def tan(self, h1: Tensor, params: ParamStore, rng: Rng | None):
        """Temporal attention across the B steps.

        Queries and keys come from the compressed per-step vectors; values
        are the raw flattened spatial states (no value projection), so the
        output mixes full per-step feature maps across permitted time steps.
        """
        n, b, p, d2 = h1.shape
        h1_flat = ad.reshape(h1, (n, b, p * d2))
        h1_tilde, _ = self.vsn(h1, params, "vsn1", rng)  # (N, B, d2)
        q = ad.matmul(h1_tilde, params["tan.wq"])
        k = ad.matmul(h1_tilde, params["tan.wk"])
        logits = ad.mul(ad.matmul(q, ad.swap_last2(k)), 1.0 / np.sqrt(self.config.d_attn))
        weights = ad.masked_softmax(logits, self.temporal_permit)  # (N, B, B)
        mixed = self._drop(ad.matmul(weights, h1_flat), rng)
        return mixed, weights

    def strengthen(self, h2: Tensor, params: ParamStore, rng: Rng | None):
        """Second spatial pass; its weights are the spatial heatmap source."""
        return self.scan(h2, params, "scan2", rng)

    def encode(self, x: np.ndarray, t_hist: np.ndarray, params: ParamStore, rng: Rng | None):
        """Full encoder. Returns per-step summary (N, B, d2) plus trace parts."""
        n, b, p = x.shape
        d2 = self.config.d_hidden
        h0 = self.embed(x, t_hist, params)
        h1, a_first = self.scan(h0, params, "scan1", rng)
        h2_flat, a_temporal = self.tan(h1, params, rng)
        h2 = ad.reshape(h2_flat, (n, b, p, d2))
        h3, a_second = self.strengthen(h2, params, rng)
        summary, importance = self.vsn(h3, params, "vsn2", rng)
        return summary, {
            "spatial_first": a_first,
            "spatial_second": a_second,
            "temporal_encoder": a_temporal,
            "vsn_encoder_weights": importance,
        }

    def decode(self, summary: Tensor, t_future: np.ndarray, params: ParamStore, rng: Rng | None):
        """Pool context, attend over history+horizon, apply quantile heads."""
        cfg = self.config
        n = summary.shape[0]
        global_ctx, global_w = self.vsn(summary, params, "vsn3", rng)  # (N, d2)

        month = ad.lookup(params["time.month"], t_future[..., 0] - 1)
        day = ad.lookup(params["time.day"], t_future[..., 1] - 1)
        hour = ad.lookup(params["time.hour"], t_future[..., 2])
        stacked = ad.concat(
            [ad.reshape(e, (n, cfg.horizon, 1, cfg.d_embed)) for e in (month, day, hour)],
            axis=-2,
        )  # (N, tau, 3, d1)
        local_in = ad.add(ad.matmul(stacked, params["local.w"]), params["local.b"])
        local_ctx, local_w = self.vsn(local_in, params, "vsn4", rng)  # (N, tau, d2)

        pooled = ad.add(ad.reshape(global_ctx, (n, 1, cfg.d_hidden)), local_ctx)
        h4 = ad.concat([summary, pooled], axis=-2)  # (N, B+tau, d2)
        h5, a_decoder = ad.self_attention(
            h4, params["final.wq"], params["final.wk"], params["final.wv"],
            self.temporal_permit_full,
        )
        h5 = self._drop(h5, rng)
        future_rows = ad.narrow(h5, -2, cfg.history, cfg.horizon)  # (N, tau, d3)
        yhat = ad.add(ad.matmul(future_rows, params["head.w"]), params["head.b"])
        return yhat, {"temporal_decoder": a_decoder, "vsn_global_weights": global_w,
                      "vsn_local_weights": local_w}

    # -- full passes ------------------------------------------------------------

    def _validate_inputs(self, x: np.ndarray, t_arr: np.ndarray) -> None:
        cfg = self.config
        if x.ndim != 3 or x.shape[1] != cfg.history or x.shape[2] != self.p:
            raise ShapeError(
                f"covariates must be (N, {cfg.history}, {self.p}), got {x.shape}"
            )
        if t_arr.shape != (x.shape[0], cfg.history + cfg.horizon, 3):
            raise ShapeError(
                f"time features must be (N, {cfg.history + cfg.horizon}, 3), got {t_arr.shape}"
            )
        if not np.isfinite(x).all():
            raise InputError("covariates contain non-finite values")
        months, days, hours = t_arr[..., 0], t_arr[..., 1], t_arr[..., 2]
        if (months < 1).any() or (months > 12).any():
            raise InputError("month out of range")
        if (days < 1).any() or (days > 31).any():
            raise InputError("day out of range")
        if (hours < 0).any() or (hours > 23).any():
            raise InputError("hour out of range")

    def forward_batch(
        self,
        x: np.ndarray,
        t_arr: np.ndarray,
        params: ParamStore,
        rng: Rng | None = None,
        want_trace: bool = False,
    ):
        """Normalized-unit forecasts for a stack of windows.

        x: (N, B, p) normalized covariates; t_arr: (N, B+tau, 3) calendar
        ints. Passing an rng enables dropout (training mode). Returns
        (yhat Tensor (N, tau, |Q|), traces list or None).
        """
        x = np.asarray(x, dtype=np.float64)
        t_arr = np.asarray(t_arr, dtype=np.int64)
        self._validate_inputs(x, t_arr)
        cfg = self.config
        summary, enc_parts = self.encode(x, t_arr[:, : cfg.history], params, rng)
        yhat, dec_parts = self.decode(summary, t_arr[:, cfg.history :], params, rng)
        traces = None
        if want_trace:
            traces = [
                AttentionTrace(
                    spatial_first=enc_parts["spatial_first"].values[i],
                    spatial_second=enc_parts["spatial_second"].values[i],
                    temporal_encoder=enc_parts["temporal_encoder"].values[i],
                    temporal_decoder=dec_parts["temporal_decoder"].values[i],
                    vsn_encoder_weights=enc_parts["vsn_encoder_weights"].values[i],
                    vsn_global_weights=dec_parts["vsn_global_weights"].values[i],
                    vsn_local_weights=dec_parts["vsn_local_weights"].values[i],
                )
                for i in range(x.shape[0])
            ]
        return yhat, traces

    def forward(self, window: SeriesWindow, params: ParamStore):
        """Single-window inference in original units, with full trace."""
        if self.stats is None:
            raise StateError("normalization statistics not set; train or load a checkpoint first")
        cfg = self.config
        if len(window.times) != cfg.history + cfg.horizon:
            raise ShapeError(
                f"window carries {len(window.times)} time features, need {cfg.history + cfg.horizon}"
            )
        x = np.asarray(window.x, dtype=np.float64)[None]
        t_arr = times_to_array(window.times)[None]
        yhat, traces = self.forward_batch(x, t_arr, params, rng=None, want_trace=True)
        denorm = self.denormalize_target(yhat.values[0])
        return ForecastQuantiles(values=denorm, quantiles=cfg.quantiles), traces[0]

    def denormalize_target(self, values: np.ndarray) -> np.ndarray:
        if self.stats is None:
            raise StateError("normalization statistics not set")
        i = self.target_index
        return values * self.stats.std[i] + self.stats.mean[i]
