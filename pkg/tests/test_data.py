import numpy as np
import pandas as pd
import pytest

from utils import constant_dataset

from voltage_control_bench.config import SynthConfig
from voltage_control_bench.engine import costs
from voltage_control_bench.engine.data import (
    DatasetTooShort,
    MissingColumn,
    NonFiniteValue,
    SynthesisError,
    injections_at,
    load_dataset,
    resolve_s_ratings,
    save_dataset,
    synth_dataset,
)
from voltage_control_bench.grid.power_flow import solve


def test_synth_shape(net6, synth6):
    assert len(synth6) == 3 * 480
    assert synth6.load_p.shape == (3 * 480, len(net6.loads))
    assert synth6.pv_p.shape == (3 * 480, len(net6.pvs))
    assert list(synth6.day_starts()) == [0, 480, 960]
    assert np.all(synth6.pv_p >= 0)
    assert np.all(synth6.load_p >= 0)


def test_synth_pv_zero_at_night(synth6):
    night = (synth6.minute_of_day < 6 * 60) | (synth6.minute_of_day >= 19 * 60)
    assert np.all(synth6.pv_p[night] == 0.0)


def test_synth_default_violates_under_zero_control(net6, synth6):
    daytime = np.flatnonzero((synth6.minute_of_day >= 9 * 60) & (synth6.minute_of_day <= 16 * 60))
    violations = [costs.cost_boolean(solve(net6, injections_at(net6, synth6, row)).v[1:]) for row in daytime]
    assert max(violations) == 1.0


def test_synth_zero_pv_is_safe(net6):
    dataset = synth_dataset(SynthConfig(days=1, pv_peak=0.0), 0, net6)
    assert np.all(dataset.pv_p == 0.0)
    for row in range(0, len(dataset), 10):
        assert costs.cost_boolean(solve(net6, injections_at(net6, dataset, row)).v[1:]) == 0.0


def test_synth_deterministic(net6):
    a = synth_dataset(SynthConfig(days=2), 7, net6)
    b = synth_dataset(SynthConfig(days=2), 7, net6)
    pd.testing.assert_frame_equal(a.to_frame(), b.to_frame())


def test_synth_gives_up(net6):
    cfg = SynthConfig(days=1, pv_peak=1e-4, max_scale_tries=0)
    with pytest.raises(SynthesisError):
        synth_dataset(cfg, 0, net6)


def test_save_and_load(net6, synth6, tmp_path):
    path = str(tmp_path / "data.csv")
    save_dataset(synth6, path)
    loaded = load_dataset(path, net6)
    assert loaded.step_minutes == 3
    assert len(loaded) == len(synth6)
    np.testing.assert_allclose(loaded.pv_p, synth6.pv_p, rtol=1e-9)
    np.testing.assert_allclose(loaded.load_q, synth6.load_q, rtol=1e-9)
    frame = pd.read_csv(path)
    assert list(frame.columns)[:3] == ["timestamp", "load1_p", "load1_q"]
    assert list(frame.columns)[-3:] == ["pv2_p", "pv3_p", "pv5_p"]


def test_missing_pv_column(net6, synth6, tmp_path):
    path = str(tmp_path / "data.csv")
    synth6.to_frame().drop(columns=["pv3_p"]).to_csv(path, index=False)
    with pytest.raises(MissingColumn):
        load_dataset(path, net6)


def test_non_finite_value(net6, synth6, tmp_path):
    path = str(tmp_path / "data.csv")
    frame = synth6.to_frame()
    frame.loc[5, "load2_p"] = np.nan
    frame.to_csv(path, index=False)
    with pytest.raises(NonFiniteValue):
        load_dataset(path, net6)


def test_too_short(net6, tmp_path):
    path = str(tmp_path / "data.csv")
    save_dataset(constant_dataset(net6, 100), path)
    with pytest.raises(DatasetTooShort):
        load_dataset(path, net6)


def test_injections_at(net6):
    dataset = constant_dataset(net6, 10, load_p=0.05, load_q=0.02, pv_p=0.3)
    inj = injections_at(net6, dataset, 0, pv_q=np.array([0.1, -0.1, 0.0]))
    assert inj.p[0] == 0.0
    assert inj.p[1] == pytest.approx(-0.05)
    assert inj.p[2] == pytest.approx(0.25)
    assert inj.q[2] == pytest.approx(0.08)
    assert inj.q[3] == pytest.approx(-0.12)
    assert inj.q[5] == pytest.approx(-0.02)


def test_resolve_s_ratings(net12):
    dataset = constant_dataset(net12, 10, pv_p=0.4)
    ratings = resolve_s_ratings(net12, dataset)
    # the third PV has an explicit rating in the fixture
    np.testing.assert_allclose(ratings, [0.48, 0.48, 0.6])
