"""Acceptance suite: one test per criterion, one printed PASS/FAIL line each.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion lines
while the suite runs. Criteria 4-6 share a single seed-fixed training run on
the default synthetic dataset (module-scoped fixture), so this file takes a
few minutes end to end.
"""

import json
import time

import numpy as np
import pytest

from caf import evaluation as ev
from caf.cli import main as cli_main
from caf.data import SplitSpec, compute_stats, make_windows, normalize, split, synth_generate
from caf.gradcheck import grad_check
from caf.graph import build_network
from caf.interpret import spatial_heatmap, variable_importance
from caf.model import Forecaster, ModelConfig
from caf.rng import Rng, derive_seed
from caf.training import TrainConfig, composite_quantile_loss, fit, quantile_loss

from conftest import river_config, tiny_config


def check(num, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    suffix = f" | {detail}" if detail else ""
    print(f"ACCEPTANCE {num} ({name}): {status}{suffix}")
    assert ok, f"criterion {num} ({name}) failed: {detail}"


def random_inputs(model, rng, n=1):
    cfg = model.config
    steps = cfg.history + cfg.horizon
    x = rng.uniform_range(-2, 2, (n, cfg.history, model.p))
    t = np.stack(
        [
            1 + (rng.uniforms((n, steps)) * 12).astype(int),
            1 + (rng.uniforms((n, steps)) * 28).astype(int),
            (rng.uniforms((n, steps)) * 24).astype(int),
        ],
        axis=-1,
    )
    return x, t


def test_criterion_1_mask_fidelity():
    net = build_network(river_config())
    assert net.p == 16 and [c.size for c in net.clusters] == [3, 1, 5, 7]
    cfg = ModelConfig(history=12, horizon=4, quantiles=(0.1, 0.5, 0.9),
                      d_embed=3, d_hidden=4, d_attn=4, dropout=0.0)
    model = Forecaster(cfg, net)
    forbidden = ~model.spatial_permit
    upper_enc = np.triu_indices(cfg.history, k=1)
    upper_dec = np.triu_indices(cfg.history + cfg.horizon, k=1)

    start = time.perf_counter()
    violations = 0
    for trial in range(1000):
        params = model.init_params(seed=derive_seed(12345, f"trial/{trial}"))
        x, t = random_inputs(model, Rng(derive_seed(54321, f"input/{trial}")))
        _, traces = model.forward_batch(x, t, params, want_trace=True)
        trace = traces[0]
        if not (
            (trace.spatial_first[:, forbidden] == 0.0).all()
            and (trace.spatial_second[:, forbidden] == 0.0).all()
            and (trace.temporal_encoder[upper_enc] == 0.0).all()
            and (trace.temporal_decoder[upper_dec] == 0.0).all()
        ):
            violations += 1
    elapsed = time.perf_counter() - start
    check(
        1, "mask fidelity", violations == 0 and elapsed < 60.0,
        f"{violations} violations in 1000 trials, {elapsed:.1f}s",
    )


def test_criterion_2_gradient_correctness():
    net = build_network(tiny_config())
    assert net.p == 4
    cfg = ModelConfig(history=4, horizon=2, quantiles=(0.5, 0.9),
                      d_embed=3, d_hidden=3, d_attn=3, dropout=0.0)
    model = Forecaster(cfg, net)
    params = model.init_params(seed=101)
    rng = Rng(102)
    x, t = random_inputs(model, rng, n=2)
    y = rng.uniform_range(-1, 1, (2, 2))

    def objective(store):
        yhat, _ = model.forward_batch(x, t, store)
        total, _ = composite_quantile_loss(y, yhat, cfg.quantiles)
        return total

    start = time.perf_counter()
    result = grad_check(objective, params, h=1e-4, tol=1e-4)
    elapsed = time.perf_counter() - start
    check(
        2, "gradient correctness", result.passed and elapsed < 60.0,
        f"max rel error {result.max_rel_error:.2e} at {result.worst_param}, {elapsed:.1f}s",
    )


def test_criterion_3_quantile_loss_identities():
    exact = (
        quantile_loss(1.0, 0.0, 0.9) == (0.9 - 0.0) * 1.0
        and abs(quantile_loss(1.0, 0.0, 0.9) - 0.9) < 1e-15
        and quantile_loss(0.0, 1.0, 0.9) == (0.9 - 1.0) * (0.0 - 1.0)
        and abs(quantile_loss(0.0, 1.0, 0.9) - 0.1) < 1e-15
        and quantile_loss(2.5, 2.5, 0.7) == 0.0
    )

    minimizer_ok = True
    rng = Rng(303)
    for _ in range(20):
        n = 3 + int(rng.uniform() * 48)
        sample = np.round(rng.uniform_range(-5, 5, n), 2)
        q = float(rng.uniform_range(0.05, 0.95, 1)[0])
        candidates = np.unique(np.concatenate([sample, sample + 0.005, sample - 0.005]))
        losses = np.array(
            [np.mean([quantile_loss(y, c, q) for y in sample]) for c in candidates]
        )
        empirical = np.quantile(sample, q, method="inverted_cdf")
        loss_at_empirical = np.mean([quantile_loss(y, empirical, q) for y in sample])
        if loss_at_empirical > losses.min() + 1e-12:
            minimizer_ok = False
    check(
        3, "quantile loss identities", exact and minimizer_ok,
        f"exact={exact} minimizer={minimizer_ok}",
    )


# -- shared training run for criteria 4-6 ----------------------------------------


SYNTH_SEED = 42
TRAIN_SEED = 7
QUANTILES = (0.1, 0.5, 0.9)


@pytest.fixture(scope="module")
def trained_synthetic():
    ds, _, net_cfg = synth_generate(seed=SYNTH_SEED, n_hours=4000)
    net = build_network(net_cfg)
    model_cfg = ModelConfig(history=24, horizon=6, quantiles=QUANTILES)
    parts = split(ds, SplitSpec(fractions=(0.7, 0.1)))
    stats = compute_stats(parts[0])
    train_ws, val_ws, test_ws = [
        make_windows(normalize(p, stats), 24, 6, "tgt") for p in parts
    ]
    model = Forecaster(model_cfg, net, stats=stats)
    params = model.init_params(derive_seed(TRAIN_SEED, "params"))
    train_cfg = TrainConfig(
        epochs=30, batch_size=32, learning_rate=2e-3, seed=TRAIN_SEED,
        early_stop_patience=30,
    )
    start = time.perf_counter()
    result = fit(model, params, train_ws, val_ws, train_cfg)
    elapsed = time.perf_counter() - start
    forecasts = ev.model_forecasts(model, params, test_ws)
    traces = []
    for s in range(0, len(test_ws), 256):
        sub = test_ws.subset(np.arange(s, min(s + 256, len(test_ws))))
        _, chunk = model.forward_batch(sub.x, sub.times, params, want_trace=True)
        traces.extend(chunk)
    return {
        "net": net,
        "model": model,
        "result": result,
        "elapsed": elapsed,
        "train_ws": train_ws,
        "test_ws": test_ws,
        "forecasts": forecasts,
        "traces": traces,
    }


def test_criterion_4_synthetic_training(trained_synthetic):
    run = trained_synthetic
    history = run["result"].history
    initial, final = history[0]["train_cql"], history[-1]["train_cql"]
    ratio = final / initial

    y_true = ev.denormalized_targets(run["test_ws"])
    sigma = ev.persistence_sigma(run["train_ws"])
    fc_pers = ev.denormalize_forecasts(
        run["test_ws"], ev.baseline_persistence(run["test_ws"], QUANTILES, sigma)
    )
    model_ql = ev.q_level_ql(y_true, run["forecasts"], QUANTILES, 0.5).average
    pers_ql = ev.q_level_ql(y_true, fc_pers, QUANTILES, 0.5).average

    ok = ratio <= 0.5 and model_ql < pers_ql and run["elapsed"] < 600.0
    check(
        4, "synthetic training",
        ok,
        f"CQL {initial:.3f}->{final:.3f} (ratio {ratio:.3f}); "
        f"0.5-QL model {model_ql:.4f} vs persistence {pers_ql:.4f}; "
        f"{run['elapsed']:.0f}s",
    )


def test_criterion_5_calibration(trained_synthetic):
    run = trained_synthetic
    y_true = ev.denormalized_targets(run["test_ws"])
    gaps = {}
    for q in QUANTILES:
        rate = ev.q_rate(y_true, run["forecasts"], QUANTILES, q)
        gaps[q] = abs(q - rate)
    ok = all(gap <= 0.10 for gap in gaps.values())
    detail = " ".join(f"|{q}-rate|={gaps[q]:.3f}" for q in QUANTILES)
    check(5, "calibration", ok, detail)


def test_criterion_6_interpretability_recovery(trained_synthetic):
    run = trained_synthetic
    stats = variable_importance(run["traces"], run["net"].variables)
    driver = stats["drv"]["q50"]
    decoy = stats["dcy"]["q50"]
    ratio = driver / decoy if decoy > 0 else float("inf")
    check(
        6, "interpretability recovery", ratio >= 1.2,
        f"driver median {driver:.4f} vs decoy {decoy:.4f} (ratio {ratio:.2f})",
    )


def test_criterion_7_determinism(tmp_path, monkeypatch):
    monkeypatch.setenv("CAF_LOG", "error")
    config = {
        "model": {"history": 24, "horizon": 6, "quantiles": [0.1, 0.5, 0.9]},
        "train": {"epochs": 3, "batch_size": 64, "learning_rate": 2e-3, "seed": 5},
        "split": {"mode": "chronological", "fractions": [0.7, 0.15]},
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))

    def pipeline(tag):
        base = tmp_path / tag
        data = base / "data"
        art = base / "artifacts"
        ckpt = base / "model.ckpt"
        report = base / "report.json"
        base.mkdir()
        assert cli_main(["synth", "--seed", "9", "--hours", str(24 * 40),
                         "--out", str(data)]) == 0
        assert cli_main(["train", "--data", str(data / "data.csv"),
                         "--network", str(data / "network.json"),
                         "--config", str(cfg_path), "--out", str(ckpt)]) == 0
        assert cli_main(["evaluate", "--data", str(data / "data.csv"),
                         "--ckpt", str(ckpt), "--config", str(cfg_path),
                         "--out", str(report)]) == 0
        assert cli_main(["interpret", "--ckpt", str(ckpt),
                         "--data", str(data / "data.csv"),
                         "--config", str(cfg_path), "--what", "heatmap",
                         "--out", str(art)]) == 0
        assert cli_main(["interpret", "--ckpt", str(ckpt),
                         "--data", str(data / "data.csv"),
                         "--config", str(cfg_path), "--what", "importance",
                         "--out", str(art)]) == 0
        files = {}
        for path in sorted([data / "data.csv", data / "events.json", ckpt, report,
                            report.with_suffix(".txt"), *sorted(art.iterdir())]):
            files[path.name] = path.read_bytes()
        return files

    first = pipeline("run1")
    second = pipeline("run2")
    same_names = set(first) == set(second)
    same_bytes = same_names and all(first[k] == second[k] for k in first)
    check(
        7, "determinism", same_bytes,
        f"{len(first)} artifacts compared byte-for-byte",
    )


def test_criterion_8_ablation_hook():
    ds, _, net_cfg = synth_generate(seed=SYNTH_SEED, n_hours=400)
    net = build_network(net_cfg)
    cfg = ModelConfig(history=24, horizon=6, quantiles=QUANTILES, dropout=0.0)
    masked = Forecaster(cfg, net, apply_spatial_mask=True)
    unmasked = Forecaster(cfg, net, apply_spatial_mask=False)
    params = masked.init_params(seed=8)
    rng = Rng(9)
    x, t = random_inputs(masked, rng)

    _, masked_traces = masked.forward_batch(x, t, params, want_trace=True)
    _, open_traces = unmasked.forward_batch(x, t, params, want_trace=True)
    heat_masked = spatial_heatmap(masked_traces, reduce="mean")
    heat_open = spatial_heatmap(open_traces, reduce="mean")

    forbidden = ~masked.spatial_permit
    masked_zero = (heat_masked[forbidden] == 0.0).all()
    open_nonzero = (heat_open[forbidden] > 0.0).any()
    check(
        8, "ablation hook", masked_zero and open_nonzero,
        f"forbidden cells: masked all zero={masked_zero}, "
        f"unmasked max={heat_open[forbidden].max():.4f}",
    )
