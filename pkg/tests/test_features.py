import numpy as np
import pandas as pd
import pytest
from scipy.special import binom

from holdsim import features as feat


def ser(x, start="2024-01-01"):
    return pd.Series(
        np.asarray(x, dtype=float), index=pd.date_range(start, periods=len(x), freq="W-MON")
    )


# --- Stationarity decisions (pinned published table: 9 series x 2 specs) ---

UNITROOT_TABLE = [
    # (dfgls_c, kpss_c, za_c, dfgls_ct, kpss_ct, za_ct, decision_c, decision_ct)
    ("btc_logret", 0.000, 0.100, 0.000, 0.000, 0.100, 0.001, "STATIONARY", "STATIONARY"),
    ("fgi", 0.001, 0.078, 0.002, 0.000, 0.098, 0.005, "STATIONARY", "STATIONARY"),
    ("hy_oas", 0.014, 0.076, 0.584, 0.092, 0.023, 0.556, "AMBIGUOUS", "UNIT_ROOT"),
    ("fedfunds", 0.260, 0.010, 0.024, 0.422, 0.010, 0.697, "AMBIGUOUS", "UNIT_ROOT"),
    ("ust10y", 0.469, 0.010, 0.691, 0.859, 0.010, 0.877, "UNIT_ROOT", "UNIT_ROOT"),
    ("usd_broad", 0.625, 0.010, 0.323, 0.232, 0.022, 0.421, "UNIT_ROOT", "UNIT_ROOT"),
    ("nasdaq", 0.828, 0.010, 0.232, 0.240, 0.011, 0.327, "UNIT_ROOT", "UNIT_ROOT"),
    ("t10y2y", 0.266, 0.010, 0.404, 0.742, 0.010, 0.893, "UNIT_ROOT", "UNIT_ROOT"),
    ("vix", 0.000, 0.100, 0.000, 0.000, 0.010, 0.001, "STATIONARY", "AMBIGUOUS"),
]


class TestStationarity:
    @pytest.mark.parametrize("row", UNITROOT_TABLE, ids=lambda r: r[0])
    def test_published_decision_table(self, row):
        _, dg_c, kp_c, za_c, dg_ct, kp_ct, za_ct, want_c, want_ct = row
        assert feat.decide_stationarity(dg_c, kp_c, za_c) == want_c
        assert feat.decide_stationarity(dg_ct, kp_ct, za_ct) == want_ct

    def test_p_value_range_validated(self):
        with pytest.raises(ValueError):
            feat.decide_stationarity(1.5, 0.5, 0.5)

    def test_tags(self):
        assert feat.tag_from_decisions("STATIONARY", "STATIONARY") == "LEVEL"
        assert feat.tag_from_decisions("AMBIGUOUS", "STATIONARY") == "TREND"
        assert feat.tag_from_decisions("UNIT_ROOT", "UNIT_ROOT") == "RW"
        assert feat.tag_from_decisions("AMBIGUOUS", "AMBIGUOUS") == "RW"

    def test_global_tag_majority_and_ties(self):
        assert feat.resolve_global_tag(["LEVEL", "LEVEL", "RW"]) == "LEVEL"
        assert feat.resolve_global_tag(["LEVEL", "RW"]) == "RW"
        assert feat.resolve_global_tag(["LEVEL", "TREND"]) == "TREND"
        assert feat.resolve_global_tag(["TREND", "RW"]) == "RW"

    def test_missing_table_entries_default_ambiguous(self):
        assert feat.decisions_from_table({}, "anything") == ("AMBIGUOUS", "AMBIGUOUS")


class TestFracDiff:
    def test_weights_match_binomial(self):
        w = feat.frac_diff_weights(0.5, 200)
        for k in range(21):
            assert w[k] == pytest.approx((-1) ** k * binom(0.5, k), rel=1e-12)

    def test_truncation_threshold(self):
        # Weights decay ~ k^-1.5, so a loose tol actually triggers the
        # early-exit branch within a modest K.
        tol = 1e-4
        w = feat.frac_diff_weights(0.5, 10**6, tol=tol)
        assert 10 < len(w) < 10**4
        assert np.all(np.abs(w) >= tol)
        # The next weight in the recurrence falls below tol.
        k = len(w)
        nxt = w[-1] * (-(0.5 - (k - 1)) / k)
        assert abs(nxt) < tol

    def test_default_k_truncation(self):
        # At the default tol the cap K, not the threshold, limits the length.
        assert len(feat.frac_diff_weights(0.5, 200)) == 201

    def test_d_one_gives_first_difference(self):
        x = ser(np.random.default_rng(0).normal(0, 1, 50))
        out = feat.frac_diff(x, d=1.0)
        np.testing.assert_allclose(out.to_numpy()[1:], np.diff(x.to_numpy()), atol=1e-12)

    def test_matches_explicit_convolution(self):
        x = ser(np.random.default_rng(1).normal(0, 1, 80))
        w = feat.frac_diff_weights(0.5, 200)
        out = feat.frac_diff(x)
        vals = x.to_numpy()
        for t in [0, 1, 5, 40, 79]:
            want = sum(w[k] * vals[t - k] for k in range(min(t + 1, len(w))))
            assert out.iloc[t] == pytest.approx(want, rel=1e-10, abs=1e-12)

    def test_series_shorter_than_weights(self):
        x = ser(np.ones(10))
        out = feat.frac_diff(x)
        assert len(out) == 10 and np.isfinite(out).all()


class TestTransforms:
    def test_ema_recurrence(self):
        x = ser(np.random.default_rng(2).normal(0, 1, 30))
        out = feat.ema(x, 4)
        a = 2.0 / 5.0
        want = [x.iloc[:4].mean()]
        for v in x.iloc[4:]:
            want.append(a * v + (1 - a) * want[-1])
        np.testing.assert_allclose(out.to_numpy(), want, rtol=1e-12)
        assert out.index[0] == x.index[3]

    def test_ema_short_series_empty(self):
        assert feat.ema(ser([1.0, 2.0]), 4).empty

    def test_rolling_vol_matches_oracle(self):
        x = ser(np.random.default_rng(3).normal(0, 1, 40))
        out = feat.rolling_vol(x, 8)
        vals = x.to_numpy()
        for i, t in enumerate(range(7, 40)):
            win = vals[t - 7 : t + 1]
            assert out.iloc[i] == pytest.approx(win.std(ddof=1), rel=1e-12)

    def test_rolling_detrend_matches_polyfit(self):
        x = ser(np.cumsum(np.random.default_rng(4).normal(0.2, 1, 80)))
        out = feat.rolling_detrend(x, 52)
        vals = x.to_numpy()
        for i, t in enumerate(range(51, 80)):
            win = vals[t - 51 : t + 1]
            slope, intercept = np.polyfit(np.arange(52), win, 1)
            assert out.iloc[i] == pytest.approx(vals[t] - (intercept + slope * 51), abs=1e-9)

    def test_rolling_detrend_falls_back_to_first_diff(self):
        x = ser(np.arange(30.0))
        out = feat.rolling_detrend(x, 52)
        np.testing.assert_allclose(out.to_numpy(), np.ones(29))

    def test_causal_zscore_oracle(self):
        x = np.random.default_rng(5).normal(3, 2, 50)
        z, s = feat.causal_zscore(x)
        for t in range(50):
            win = x[: t + 1]
            sd = max(np.sqrt(np.mean((win - win.mean()) ** 2)), 1e-2)
            assert s[t] == pytest.approx(sd, rel=1e-9)
            assert z[t] == pytest.approx((x[t] - win.mean()) / sd, rel=1e-9, abs=1e-9)

    def test_causal_zscore_clips_tiny_sigma(self):
        z, s = feat.causal_zscore(np.full(10, 7.0))
        assert np.all(s == 1e-2)
        assert np.all(z == 0.0)


class TestCausality:
    """Perturbing the future never changes the past output."""

    TRANSFORMS = [
        ("frac_diff", lambda s: feat.frac_diff(s)),
        ("first_diff", feat.first_diff),
        ("detrend", lambda s: feat.rolling_detrend(s, 12)),
        ("ema", lambda s: feat.ema(s, 4)),
        ("vol", lambda s: feat.rolling_vol(s, 4)),
    ]

    @pytest.mark.parametrize("name,fn", TRANSFORMS, ids=[t[0] for t in TRANSFORMS])
    def test_series_transforms_causal(self, name, fn):
        rng = np.random.default_rng(hash(name) % 2**32)
        for _ in range(100):
            n = int(rng.integers(20, 60))
            x = ser(rng.normal(0, 1, n))
            t_cut = int(rng.integers(13, n - 1))
            y = x.copy()
            y.iloc[t_cut + 1 :] += rng.normal(0, 5, n - t_cut - 1)
            a = fn(x)
            b = fn(y)
            cutoff = x.index[t_cut]
            pd.testing.assert_series_equal(a.loc[:cutoff], b.loc[:cutoff])

    def test_zscore_causal(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = int(rng.integers(10, 50))
            x = rng.normal(0, 1, n)
            t_cut = int(rng.integers(1, n - 1))
            y = x.copy()
            y[t_cut + 1 :] += rng.normal(0, 5, n - t_cut - 1)
            za, _ = feat.causal_zscore(x)
            zb, _ = feat.causal_zscore(y)
            np.testing.assert_array_equal(za[: t_cut + 1], zb[: t_cut + 1])

    def test_future_targets_causal(self):
        rng = np.random.default_rng(12)
        horizons = [30, 90]
        for _ in range(100):
            T = int(rng.integers(30, 60))
            y = rng.normal(0, 1, (T, 2, 3))
            fut_a, t_star = feat.build_future_targets(y, horizons)
            y2 = y.copy()
            # fut[t] reads y at t + g(h); perturbing beyond that row for the
            # largest gap cannot change fut rows <= t.
            t_cut = int(rng.integers(0, t_star))
            y2[t_cut + feat.gap_weeks(90) + 1 :] += 1.0
            fut_b, _ = feat.build_future_targets(y2, horizons)
            np.testing.assert_array_equal(fut_a[: t_cut + 1], fut_b[: t_cut + 1])


class TestGapsAndTargets:
    def test_canonical_gap_values(self):
        assert [feat.gap_weeks(h) for h in [30, 90, 180, 365, 730, 1095]] == [
            6, 14, 27, 54, 106, 158,
        ]

    def test_future_target_shift(self):
        T, H = 40, 2
        y = np.arange(T, dtype=float)[:, None, None] * np.ones((1, H, 1))
        fut, t_star = feat.build_future_targets(y, [30, 90])
        assert t_star == 40 - 14
        np.testing.assert_array_equal(fut[:, 0, 0], np.arange(6, 6 + t_star))
        np.testing.assert_array_equal(fut[:, 1, 0], np.arange(14, 14 + t_star))

    def test_insufficient_history_fatal(self):
        with pytest.raises(ValueError, match="insufficient history"):
            feat.build_future_targets(np.zeros((10, 1, 1)), [90])


class TestFeatureBlock:
    def test_names_and_order(self):
        macro = pd.DataFrame(
            {"B": ser(np.random.default_rng(0).normal(0, 1, 60)),
             "A": ser(np.random.default_rng(1).normal(0, 1, 60))}
        )
        block = feat.macro_feature_block(macro, {"A": "LEVEL", "B": "LEVEL"})
        names = list(block.columns)
        assert names[:4] == ["A_EMA4", "A_EMA8", "A_EMA12", "A_EMA24"]
        assert names[4:8] == ["A_VOL4", "A_VOL8", "A_VOL12", "A_VOL24"]
        assert names[8] == "B_EMA4"
        assert len(names) == 16


def _tiny_tensor():
    rng = np.random.default_rng(7)
    n = 120
    endog = {
        h: pd.DataFrame(
            {name: ser(rng.normal(0, 1, n)) for name in feat.TARGET_NAMES}
        )
        for h in (30, 90)
    }
    macro = pd.DataFrame({"VIX": ser(18 + rng.normal(0, 1, n)),
                          "FGI": ser(50 + rng.normal(0, 5, n))})
    endog_dec = {
        (name, h): ("STATIONARY", "STATIONARY")
        for name in feat.TARGET_NAMES
        for h in (30, 90)
    }
    macro_dec = {"VIX": ("STATIONARY", "STATIONARY"), "FGI": ("AMBIGUOUS", "AMBIGUOUS")}
    return feat.build_feature_tensor(endog, macro, endog_dec, macro_dec, [30, 90])


class TestTensor:
    def test_build_shapes(self):
        t = _tiny_tensor()
        T = len(t.grid)
        assert t.y_current.shape == (T, 2, 4)
        assert t.x_macro.shape == (T, 2, 16)
        assert t.y_future.shape == (t.t_star, 2, 4)
        assert t.t_star == T - 14
        assert np.isfinite(t.y_current).all() and np.isfinite(t.x_macro).all()
        assert t.ref_scale_y.shape == (2, 4) and np.all(t.ref_scale_y >= 1e-2)

    def test_save_load_roundtrip(self, tmp_path):
        t = _tiny_tensor()
        feat.save_tensor(t, tmp_path)
        back = feat.load_tensor(tmp_path)
        assert back.horizons == t.horizons
        assert back.feature_names == t.feature_names
        assert back.t_star == t.t_star
        np.testing.assert_allclose(back.y_current, t.y_current, rtol=1e-12)
        np.testing.assert_allclose(back.y_future, t.y_future, rtol=1e-12)
        np.testing.assert_allclose(back.ref_scale_y, t.ref_scale_y, rtol=1e-12)
        assert back.grid.equals(t.grid)

    def test_empty_grid_diagnostic_names_series(self):
        short = ser(np.ones(5))
        endog = {30: pd.DataFrame({"median_er": short})}
        macro_feats = pd.DataFrame({"VIX_EMA4": ser(np.ones(3), start="2030-01-01")})
        with pytest.raises(ValueError, match="latest-starting"):
            feat.align_tensors(endog, macro_feats, [30])


def test_stationarity_csv_roundtrip(tmp_path):
    frame = pd.DataFrame(
        {
            "series": ["VIX", "VIX"],
            "spec": ["c", "ct"],
            "dfgls_p": [0.0, 0.0],
            "kpss_p": [0.1, 0.01],
            "za_p": [0.0, 0.001],
        }
    )
    frame.to_csv(tmp_path / "stationarity.csv", index=False)
    table = feat.load_stationarity(tmp_path / "stationarity.csv")
    assert feat.decisions_from_table(table, "VIX") == ("STATIONARY", "AMBIGUOUS")
