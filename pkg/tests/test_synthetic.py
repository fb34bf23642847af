import numpy as np

from loadcast.synthetic import FRIDGE_BASE, synthetic_household


def test_shape_roles_and_determinism():
    a = synthetic_household(days=10, seed=4)
    b = synthetic_household(days=10, seed=4)
    assert len(a) == 240
    assert a.data.equals(b.data)
    assert set(a.load_channels) == {"fridge", "washing_machine", "dishwasher", "television"}
    assert not synthetic_household(days=10, seed=5).data.equals(a.data)


def test_fridge_daily_cycle_and_temperature_coupling():
    f = synthetic_household(days=120, seed=0).data
    assert (f["fridge"] >= 0).all()
    by_hour = f["fridge"].groupby(f.index.hour).mean()
    assert by_hour.idxmax() in range(11, 16)  # sinusoid peaks at 13:00
    assert abs(f["fridge"].mean() - FRIDGE_BASE) < 10
    resid = f["fridge"] - by_hour.reindex(f.index.hour).to_numpy()
    assert np.corrcoef(resid, f["temperature"])[0, 1] > 0.3
