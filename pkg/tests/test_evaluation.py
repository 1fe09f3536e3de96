import numpy as np
import pytest

from caf.data import (
    Dataset,
    NormStats,
    SplitSpec,
    SynthSpec,
    WindowSet,
    make_windows,
    synth_generate,
)
from caf.errors import ConfigError
from caf.evaluation import (
    baseline_persistence,
    baseline_seasonal_naive,
    compare_shift,
    denormalized_targets,
    format_report_table,
    persistence_sigma,
    q_level_ql,
    q_rate,
    score_all_levels,
    seasonal_sigma,
)
from caf.graph import build_network
from caf.model import ModelConfig
from caf.rng import Rng
from caf.training import TrainConfig

QS = (0.1, 0.5, 0.9)


def fc(y, offset_per_level):
    """(N, tau, |Q|) forecasts: y plus a constant per level."""
    return y[..., None] + np.asarray(offset_per_level)


def toy_windows(history=24, horizon=6, n_hours=400, seed=0):
    ds, _, net_cfg = synth_generate(seed=seed, n_hours=n_hours)
    return make_windows(ds, history, horizon, "tgt")


class TestQLevelQL:
    def test_perfect_forecast_zero(self):
        y = Rng(1).uniform_range(-2, 2, (5, 3))
        score = q_level_ql(y, fc(y, [0.0, 0.0, 0.0]), QS, 0.5)
        assert score.total == 0.0
        assert score.average == 0.0

    def test_constant_over_forecast(self):
        # forecasting one unit high at level 0.9 costs 0.1 per point
        y = Rng(2).uniform_range(-2, 2, (7, 4))
        score = q_level_ql(y, fc(y, [0.0, 0.0, 1.0]), QS, 0.9)
        assert score.average == pytest.approx(0.1)
        assert score.total == pytest.approx(0.1 * y.size)

    def test_symmetric_errors_at_median(self):
        y = np.array([[1.0], [1.0]])
        yhat = np.array([[[0.0]], [[2.0]]])  # errors +1 and -1
        score = q_level_ql(y, yhat, (0.5,), 0.5)
        assert score.total == pytest.approx(1.0)

    def test_unknown_level_rejected(self):
        y = np.zeros((2, 2))
        with pytest.raises(ConfigError):
            q_level_ql(y, fc(y, [0.0, 0.0, 0.0]), QS, 0.7)

    def test_decomposes_over_horizons(self):
        y = Rng(3).uniform_range(-2, 2, (6, 4))
        yhat = fc(y, [0.0, 0.0, 0.0]) + Rng(4).uniform_range(-1, 1, (6, 4, 3))
        whole = q_level_ql(y, yhat, QS, 0.5)
        parts = [
            q_level_ql(y[:, k : k + 1], yhat[:, k : k + 1], QS, 0.5).total
            for k in range(4)
        ]
        assert whole.total == pytest.approx(sum(parts))


class TestQRate:
    def test_always_above(self):
        y = np.zeros((4, 3))
        assert q_rate(y, fc(y, [1.0, 1.0, 1.0]), QS, 0.5) == 1.0

    def test_always_below(self):
        y = np.zeros((4, 3))
        assert q_rate(y, fc(y, [-1.0, -1.0, -1.0]), QS, 0.5) == 0.0

    def test_tie_counts_as_not_below(self):
        y = np.zeros((4, 3))
        assert q_rate(y, fc(y, [0.0, 0.0, 0.0]), QS, 0.5) == 0.0

    def test_empirical_quantile_calibrates(self):
        # forecasting the exact empirical q-quantile puts the rate within 1/n
        rng = Rng(5)
        for q in (0.1, 0.5, 0.9):
            sample = rng.uniform_range(-3, 3, 200)
            quant = np.quantile(sample, q, method="inverted_cdf")
            y = sample.reshape(-1, 1)
            yhat = np.full((200, 1, 1), quant)
            rate = q_rate(y, yhat, (q,), q)
            brute = (sample < quant).mean()
            assert rate == pytest.approx(brute)
            assert abs(rate - q) <= 1.0 / 200 + 1e-12

    def test_monotone_in_level_for_monotone_forecasts(self):
        y = Rng(6).uniform_range(-2, 2, (30, 4))
        yhat = fc(y, [-0.5, 0.0, 0.5]) + Rng(7).uniform_range(-0.2, 0.2, (30, 4, 1))
        rates = [q_rate(y, yhat, QS, q) for q in QS]
        assert rates[0] <= rates[1] <= rates[2]

    def test_adding_constant_weakly_increases_rate(self):
        y = Rng(8).uniform_range(-2, 2, (30, 4))
        yhat = fc(y, [0.0, 0.0, 0.0]) + Rng(9).uniform_range(-1, 1, (30, 4, 3))
        before = q_rate(y, yhat, QS, 0.5)
        after = q_rate(y, yhat + 0.3, QS, 0.5)
        assert after >= before


class TestBaselines:
    def test_persistence_constant_series(self):
        ws = toy_windows()
        ws.x[:, :, ws.variables.index("tgt")] = 4.0
        out = baseline_persistence(ws, QS, sigma=2.0)
        from scipy.special import ndtri

        for i, q in enumerate(QS):
            assert np.allclose(out[..., i], 4.0 + ndtri(q) * 2.0)

    def test_persistence_median_is_last_value(self):
        ws = toy_windows()
        out = baseline_persistence(ws, QS, sigma=1.7)
        last = ws.x[:, -1, ws.variables.index("tgt")]
        assert np.allclose(out[:, :, 1], last[:, None])

    def test_persistence_ramp_bias(self):
        # on a unit-slope ramp the horizon-k median error is exactly k
        n, B, tau = 5, 6, 3
        base = np.arange(B, dtype=float)
        x = np.zeros((n, B, 1))
        x[:, :, 0] = base
        y = np.stack([np.arange(B, B + tau, dtype=float) for _ in range(n)])
        ws = WindowSet(
            x=x, times=np.ones((n, B + tau, 3), dtype=int), y=y,
            origins=np.array(["2020-01-01T00"] * n, dtype="datetime64[h]"),
            variables=["v"], target="v",
        )
        out = baseline_persistence(ws, (0.5,), sigma=1.0)
        for k in range(tau):
            assert np.allclose(y[:, k] - out[:, k, 0], k + 1)

    def test_seasonal_naive_pure_periodic(self):
        n_hours = 24 * 20
        t = np.arange(n_hours)
        series = np.sin(2 * np.pi * t / 12.0)
        ds = Dataset(
            timestamps=np.datetime64("2020-01-01T00", "h") + t * np.timedelta64(1, "h"),
            values=series[:, None],
            columns=["v"],
        )
        ws = make_windows(ds, history=24, horizon=6, target="v")
        out = baseline_seasonal_naive(ws, (0.5,), sigma=0.0, period=12)
        assert np.allclose(out[:, :, 0], ws.y, atol=1e-12)

    def test_seasonal_equals_persistence_on_constant(self):
        ws = toy_windows()
        ws.x[:, :, ws.variables.index("tgt")] = 2.0
        p = baseline_persistence(ws, QS, sigma=1.0)
        s = baseline_seasonal_naive(ws, QS, sigma=1.0, period=12)
        assert np.allclose(p, s)

    def test_seasonal_period_equals_history_uses_oldest_row(self):
        ws = toy_windows(history=12, horizon=1)
        out = baseline_seasonal_naive(ws, (0.5,), sigma=0.0, period=12)
        oldest = ws.x[:, 0, ws.variables.index("tgt")]
        assert np.allclose(out[:, 0, 0], oldest)

    def test_history_shorter_than_period_rejected(self):
        ws = toy_windows(history=8, horizon=2)
        with pytest.raises(ConfigError):
            baseline_seasonal_naive(ws, QS, sigma=1.0, period=12)

    def test_sigmas_are_finite_positive(self):
        ws = toy_windows()
        assert persistence_sigma(ws) > 0
        assert seasonal_sigma(ws, period=12) > 0


@pytest.fixture(scope="module")
def shifted_data():
    # full year so the chronological test period avoids the shifted months
    spec = SynthSpec(spike_rate=0.02, monthly_spike_scale=((7, 6.0), (8, 6.0)))
    ds, _, net_cfg = synth_generate(seed=21, n_hours=24 * 366, spec=spec)
    return ds, build_network(net_cfg)


class TestCompareShift:
    def test_baselines_only_report_shape(self, shifted_data):
        ds, net = shifted_data
        model_cfg = ModelConfig(history=24, horizon=6, quantiles=QS)
        report = compare_shift(
            ds, net, model_cfg, TrainConfig(epochs=1), include_model=False, stride=4
        )
        assert set(report["stable"]["methods"]) == {"persistence", "seasonal_naive"}
        assert set(report["shift"]["methods"]) == {"persistence", "seasonal_naive"}
        for q in QS:
            cell = report["shift"]["methods"]["persistence"][f"{q:g}"]
            assert set(cell) == {"total_ql", "avg_ql", "q_rate", "abs_gap"}

    def test_shift_degrades_under_spike_shift(self, shifted_data):
        # seasonal naive absorbs the shared 12h harmonic, so its score
        # isolates the spike bursts that the shifted months amplify
        ds, net = shifted_data
        model_cfg = ModelConfig(history=24, horizon=6, quantiles=QS)
        report = compare_shift(
            ds, net, model_cfg, TrainConfig(epochs=1), include_model=False, stride=2
        )
        stable = report["stable"]["methods"]["seasonal_naive"]["0.5"]["avg_ql"]
        shift = report["shift"]["methods"]["seasonal_naive"]["0.5"]["avg_ql"]
        assert shift > 1.2 * stable

    def test_table_renders_all_sections(self, shifted_data):
        ds, net = shifted_data
        model_cfg = ModelConfig(history=24, horizon=6, quantiles=QS)
        report = compare_shift(
            ds, net, model_cfg, TrainConfig(epochs=1), include_model=False, stride=8
        )
        text = format_report_table(report)
        assert "[stable]" in text and "[shift]" in text
        assert "persistence" in text and "avg_ql" in text

    def test_model_included_when_requested(self, shifted_data):
        ds, net = shifted_data
        model_cfg = ModelConfig(history=24, horizon=6, quantiles=QS, dropout=0.0)
        train_cfg = TrainConfig(epochs=1, batch_size=256, learning_rate=1e-3, seed=3)
        report = compare_shift(
            ds, net, model_cfg, train_cfg, include_model=True, stride=8
        )
        assert "model" in report["stable"]["methods"]
        assert "model" in report["shift"]["methods"]
        assert report["shift"]["years"] == [2016]


class TestScoreAllLevels:
    def test_keys_and_gap(self):
        y = Rng(10).uniform_range(-1, 1, (10, 3))
        scores = score_all_levels(y, fc(y, [-0.5, 0.0, 0.5]), QS)
        assert set(scores) == {"0.1", "0.5", "0.9"}
        for q in QS:
            cell = scores[f"{q:g}"]
            assert cell["abs_gap"] == pytest.approx(abs(q - cell["q_rate"]))
