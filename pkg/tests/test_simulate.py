import numpy as np
import pytest

from holdsim import episode_py, kernel, simulate
from holdsim.rng import make_stream

cy = pytest.importorskip("holdsim._episode_cy")


def run_both(u, high, low, gamma, lo, hi, fee=0.001, needed=10**9, streak=0, limit=50):
    a = cy.process_block(u, high, low, gamma, lo, hi, fee, needed, streak, limit)
    b = episode_py.process_block(u, high, low, gamma, lo, hi, fee, needed, streak, limit)
    return a, b


def assert_identical(a, b):
    for k in a[0]:
        assert np.array_equal(a[0][k], b[0][k]), k
    assert a[1:] == b[1:]


class TestKernelEquivalence:
    @pytest.mark.parametrize("seed", range(8))
    def test_random_blocks(self, seed, price_panel, riskfree_gamma):
        high, low = price_panel
        rng = np.random.default_rng(seed)
        u = rng.random((2000, 5))
        lo, hi = [(1, 30), (31, 90), (181, 365), (731, 1095)][seed % 4]
        a, b = run_both(u, high, low, riskfree_gamma, lo, hi)
        assert_identical(a, b)

    def test_needed_truncation(self, price_panel, riskfree_gamma):
        high, low = price_panel
        u = np.random.default_rng(1).random((500, 5))
        a, b = run_both(u, high, low, riskfree_gamma, 31, 90, needed=7)
        assert_identical(a, b)
        assert len(a[0]["x"]) == 7
        assert a[2] == kernel.STOP_TARGET

    def test_failure_stop(self, riskfree_gamma):
        # Unsellable panel: every attempt fails, streak trips the limit.
        high = np.full((900, 2), np.nan)
        low = np.full((900, 2), np.nan)
        u = np.random.default_rng(2).random((500, 5))
        a, b = run_both(u, high, low, riskfree_gamma, 31, 90, streak=3, limit=50)
        assert_identical(a, b)
        assert a[2] == kernel.STOP_FAILURES
        assert a[3] == 47  # 3 carried in + 47 new failures = 50
        assert len(a[0]["x"]) == 0

    def test_discard_when_horizon_exceeds_sample(self, riskfree_gamma):
        high = np.ones((100, 2))
        low = np.ones((100, 2)) * 0.9
        u = np.random.default_rng(3).random((200, 5))
        # tau in [150, 200] always exceeds T-1=99.
        a, b = run_both(u, high, low, riskfree_gamma[:100], 150, 200, limit=1000)
        assert_identical(a, b)
        assert a[4] == 200 and a[5] == 0  # all discarded, none rejected


class TestScalarReference:
    def test_kernel_matches_scalar_ops(self, price_panel, riskfree_gamma):
        """Replaying the uniform block through the scalar reference ops
        reproduces the kernel episode for episode."""
        high, low = price_panel
        u = np.random.default_rng(9).random((300, 5))
        eps, *_ = cy.process_block(
            u, high, low, riskfree_gamma, 31, 90, 0.001, 10**9, 0, 10**9
        )
        got = 0
        T, C = high.shape
        for i in range(u.shape[0]):

            class Replay:
                def __init__(self, row):
                    self.row = list(row)

                def random(self):
                    return self.row.pop(0)

            r = Replay(u[i])
            tau = simulate.draw_horizon((31, 90), r)
            u_s, u_c = r.random(), r.random()
            span = T - tau
            c = min(int(u_c * C), C - 1)
            s = min(int(u_s * span), span - 1)
            e = s + tau
            if not (
                low[s, c] > 0
                and high[s, c] >= low[s, c]
                and low[e, c] > 0
                and high[e, c] >= low[e, c]
            ):
                continue
            ep = simulate.price_and_return(
                dict(coin=c, s=s, e=e, tau=tau), high, low, riskfree_gamma, 0.001, r
            )
            assert eps["coin"][got] == c
            assert eps["s"][got] == s
            assert eps["tau"][got] == tau
            assert eps["p_buy"][got] == pytest.approx(ep["p_buy"], rel=1e-15)
            assert eps["g"][got] == pytest.approx(ep["g"], rel=1e-14)
            got += 1
        assert got == len(eps["x"]) > 50


class TestEpisodeInvariants:
    @pytest.fixture
    def batch(self, price_panel, riskfree_gamma):
        high, low = price_panel
        cfg = simulate.SimConfig(basket="B", interval=(31, 90), n=20000, seed=5)
        return (
            simulate.simulate_batch(cfg, high, low, riskfree_gamma),
            high,
            low,
            riskfree_gamma,
        )

    def test_bounds_and_identities(self, batch):
        b, high, low, gamma = batch
        assert b.complete and len(b) == 20000
        assert np.all((b.tau >= 31) & (b.tau <= 90))
        assert np.all(b.e - b.s == b.tau)
        assert np.all(b.p_buy >= low[b.s, b.coin]) and np.all(b.p_buy <= high[b.s, b.coin])
        assert np.all(b.p_sell >= low[b.e, b.coin]) and np.all(b.p_sell <= high[b.e, b.coin])
        np.testing.assert_array_equal(b.x, b.g - b.r_rf)
        expected_g = 0.999 * (b.p_sell / b.p_buy) * 0.999 - 1.0
        np.testing.assert_allclose(b.g, expected_g, rtol=1e-15)
        expected_rf = np.exp(gamma[b.e] - gamma[b.s]) - 1.0
        np.testing.assert_allclose(b.r_rf, expected_rf, rtol=1e-12)

    def test_no_episode_touches_invalid_days(self, batch):
        b, high, low, _ = batch
        assert np.all(low[b.s, b.coin] > 0) and np.all(low[b.e, b.coin] > 0)


class TestDeterminism:
    def test_worker_count_invariance(self, price_panel, riskfree_gamma):
        high, low = price_panel
        cfg = simulate.SimConfig(
            basket="B", interval=(1, 30), n=150000, seed=11, shard_size=65536
        )
        b1 = simulate.simulate_batch(cfg, high, low, riskfree_gamma, n_workers=1)
        b4 = simulate.simulate_batch(cfg, high, low, riskfree_gamma, n_workers=4)
        for f in ("coin", "s", "tau", "p_buy", "p_sell", "g", "r_rf", "x"):
            assert np.array_equal(getattr(b1, f), getattr(b4, f)), f

    def test_seed_sensitivity(self, price_panel, riskfree_gamma):
        high, low = price_panel
        mk = lambda seed: simulate.simulate_batch(
            simulate.SimConfig(basket="B", interval=(1, 30), n=1000, seed=seed),
            high,
            low,
            riskfree_gamma,
        )
        assert not np.array_equal(mk(1).x, mk(2).x)
        assert np.array_equal(mk(1).x, mk(1).x)

    def test_python_kernel_gives_same_batch(
        self, price_panel, riskfree_gamma, monkeypatch
    ):
        high, low = price_panel
        cfg = simulate.SimConfig(basket="B", interval=(1, 30), n=5000, seed=3)
        b_cy = simulate.simulate_batch(cfg, high, low, riskfree_gamma)
        monkeypatch.setattr(kernel, "process_block", episode_py.process_block)
        b_py = simulate.simulate_batch(cfg, high, low, riskfree_gamma)
        for f in ("coin", "s", "tau", "p_buy", "p_sell", "g", "r_rf", "x"):
            assert np.array_equal(getattr(b_cy, f), getattr(b_py, f)), f


class TestCurveAndArrays:
    def test_riskfree_constant_rate(self):
        import pandas as pd

        cal = pd.date_range("2024-01-01", periods=10, freq="D")
        y = pd.Series(3.65, index=cal[::2])  # quoted every other day
        gamma = simulate.build_riskfree_curve(cal, y)
        r = 3.65 / (100 * 365)
        np.testing.assert_allclose(gamma, np.cumsum(np.log1p(np.full(10, r))))

    def test_empty_curve_is_zero(self):
        import pandas as pd

        cal = pd.date_range("2024-01-01", periods=5, freq="D")
        gamma = simulate.build_riskfree_curve(cal, pd.Series(dtype=float))
        assert np.all(gamma == 0)

    def test_build_price_arrays_union_calendar(self):
        import pandas as pd

        from holdsim.ingest import PanelSet, TokenPanel

        def tp(sym, start, end):
            idx = pd.date_range(start, end, freq="D")
            f = pd.DataFrame(
                {"high": 2.0, "low": 1.0, "close": 1.5, "volume": 1.0}, index=idx
            )
            return TokenPanel(sym, f)

        ps = PanelSet(panels={"A": tp("A", "2024-01-01", "2024-03-01"),
                              "B": tp("B", "2024-02-01", "2024-04-01")})
        cal, high, low = simulate.build_price_arrays(ps)
        assert cal[0] == pd.Timestamp("2024-01-01") and cal[-1] == pd.Timestamp("2024-04-01")
        assert np.isnan(high[0, 1]) and not np.isnan(high[0, 0])
        assert np.isnan(high[-1, 0]) and not np.isnan(high[-1, 1])


def test_block_consumes_five_uniforms_per_attempt(price_panel, riskfree_gamma):
    """Cross-block state carry: splitting the same stream into two blocks
    yields the same episodes as one big block."""
    high, low = price_panel
    gen = make_stream(0, "t")
    u = gen.random((1000, 5))
    whole = cy.process_block(u, high, low, riskfree_gamma, 31, 90, 0.001, 10**9, 0, 10**9)
    first = cy.process_block(u[:400], high, low, riskfree_gamma, 31, 90, 0.001, 10**9, 0, 10**9)
    second = cy.process_block(
        u[400:], high, low, riskfree_gamma, 31, 90, 0.001, 10**9, first[1], 10**9
    )
    for k in whole[0]:
        merged = np.concatenate([first[0][k], second[0][k]])
        assert np.array_equal(whole[0][k], merged), k
