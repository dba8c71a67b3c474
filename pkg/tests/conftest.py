import numpy as np
import pytest


@pytest.fixture
def price_panel():
    """Synthetic (T, C) high/low arrays with NaN padding and one bad day."""
    rng = np.random.default_rng(123)
    T, C = 900, 4
    base = np.exp(np.cumsum(rng.normal(0, 0.03, (T, C)), axis=0))
    low = base * (1 - 0.02 * rng.random((T, C)))
    high = base * (1 + 0.02 * rng.random((T, C)))
    low[:60, 1] = np.nan
    high[:60, 1] = np.nan
    low[200, 2] = 0.0
    return high, low


@pytest.fixture
def riskfree_gamma():
    T = 900
    r_daily = 4.0 / (100.0 * 365.0)
    return np.cumsum(np.log1p(np.full(T, r_daily)))
