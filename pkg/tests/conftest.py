import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hybridsizer.market_data import MarketSeries, PvSeries
from hybridsizer.plant import CostParams, DesignVector, PlantParams

settings.register_profile("default", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def hourly(n, start="2021-06-01T00:00:00"):
    return np.datetime64(start, "s") + np.arange(n) * np.timedelta64(3600, "s")


def make_data(lam_e, p_avail, lam_res=None, lam_up=None, lam_dn=None, start="2021-06-01T00:00:00",
              nameplate=None):
    n = len(lam_e)
    z = np.zeros(n)
    ts = hourly(n, start)
    market = MarketSeries(ts, lam_e, z if lam_res is None else lam_res, z if lam_up is None else lam_up,
                          z if lam_dn is None else lam_dn, 1.0)
    return market, PvSeries(ts, p_avail, 1.0, nameplate)


@pytest.fixture
def params():
    return PlantParams()


@pytest.fixture
def costs():
    return CostParams()


@pytest.fixture
def design():
    return DesignVector(11.0, 20.0, 5.0)
