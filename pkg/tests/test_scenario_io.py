import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from dfigsim import cli, scenario_io as sio
from dfigsim.errors import ParseError, ValidationError
from dfigsim.sim_engine import LOG_COLUMNS, SimLog


def test_empty_scenario_gives_reference_defaults():
    sc = sio.parse_scenario("")
    assert sc.gains.alpha == 5.0 and sc.gains.h == 16.0
    assert sc.gains.w_p == 10.0 and sc.gains.w_q == 1.0 and sc.gains.w_pq == 0.0
    assert sc.gains.step_max == 0.025 and sc.gains.grad_scale == 2.0
    assert sc.gains.pitch_gain == 2.7
    assert (sc.gains.avg_window, sc.gains.hold_time, sc.gains.ramp_time) == \
        (1.0, 4.0, 6.0)
    assert sc.turbine.r_s == 0.00706 and sc.turbine.inertia == 10.08
    assert sc.gains.K[0, 0] == 12277.0 and sc.gains.K[1, 1] == 12117.0
    assert sc.pf_d == 0.995
    assert sc.pd_schedule == ((0.0, 1.0),)


def test_reference_switching_scenario_parses():
    sc = sio.parse_scenario(
        "pd_schedule = 0:1.0, 1200:0.3, 2400:1.0\npf_d = 0.995\n")
    assert sc.pd_schedule == ((0.0, 1.0), (1200.0, 0.3), (2400.0, 1.0))
    assert sc.pf_d == 0.995


def test_invalid_weight_rejected():
    with pytest.raises(ValidationError):
        sio.parse_scenario("w_p = -1\n")


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ParseError) as err:
        sio.parse_scenario("alpha = 5\nnot a key value line\n")
    assert err.value.line == 2
    with pytest.raises(ParseError) as err:
        sio.parse_scenario("alpha = 5\nunknown_key = 3\n")
    assert err.value.line == 2
    with pytest.raises(ParseError) as err:
        sio.parse_scenario("alpha = 5\nalpha = 6\n")
    assert err.value.line == 2
    with pytest.raises(ParseError):
        sio.parse_scenario("alpha = banana\n")


def test_schedule_validation():
    with pytest.raises(ValidationError):
        sio.parse_scenario("pd_schedule = 5:1.0\n")  # must start at zero
    with pytest.raises(ValidationError):
        sio.parse_scenario("pd_schedule = 0:1.0, 10:0.5, 10:0.7\n")
    with pytest.raises(ValidationError):
        sio.parse_scenario("pf_d = 0.5\nqd_schedule = 0:0.1\n")
    with pytest.raises(ValidationError):
        sio.parse_scenario("pf_d = 1.5\n")


def test_serialize_parse_stable():
    sc = sio.parse_scenario("pd_schedule = 0:1.0, 900:0.4\npf_d = 0.98\n"
                            "alpha = 4.5\nwind_mean = 11\nseed = 9\n")
    text = sio.serialize_scenario(sc)
    sc2 = sio.parse_scenario(text)
    assert sio.serialize_scenario(sc2) == text
    assert sc2.gains.alpha == 4.5 and sc2.wind_spec.mean == 11.0


def test_serialize_parse_qd_schedule_mode():
    sc = sio.parse_scenario("qd_schedule = 0:0.1, 50:-0.2\n")
    text = sio.serialize_scenario(sc)
    assert sio.parse_scenario(text).qd_schedule == ((0.0, 0.1), (50.0, -0.2))


def test_all_documented_override_keys_parse():
    text = """
    # every override class in one file, with an inline comment -> here
    omega_s = 1.0          # synchronous speed
    r_s = 0.007
    cp_coeffs = 0.5, 116, 0.4, 5, 21, 0.0068
    k = 12000, -4500, 33, -6, -1600, 12100, -0.5, 32
    controller_inertia = 9.5
    alpha = 4.0
    theta_rate = 0.01
    dt = 0.001
    duration = 20
    log_stride = 10
    seed = 3
    omega_r0 = 0.1
    flux0 = 0, 0, 0, 0
    wind_mean = 9
    wind_sample_dt = 0.2
    pd_schedule = 0:0.5
    pf_d = 0.99
    """
    sc = sio.parse_scenario(text)
    assert sc.turbine.r_s == 0.007
    assert sc.turbine.cp_coeffs == (0.5, 116.0, 0.4, 5.0, 21.0, 0.0068)
    assert sc.gains.K.shape == (2, 4) and sc.gains.K[1, 0] == -1600.0
    assert sc.gains.inertia == 9.5  # decoupled from the turbine value
    assert sc.gains.alpha == 4.0 and sc.gains.theta_rate == 0.01
    assert sc.sim.log_stride == 10 and sc.sim.seed == 3
    assert np.all(sc.sim.flux0 == 0.0)
    assert sc.wind_spec.mean == 9.0 and sc.wind_spec.sample_dt == 0.2


def test_controller_inertia_follows_turbine_by_default():
    sc = sio.parse_scenario("inertia = 12.5\n")
    assert sc.turbine.inertia == 12.5
    assert sc.gains.inertia == 12.5


def test_wind_file_key(tmp_path):
    wind = tmp_path / "w.csv"
    wind.write_text("0,9.0\n100,9.0\n")
    sc = sio.parse_scenario(f"wind_file = {wind}\nduration = 2\n"
                            "log_stride = 100\n")
    log = sio.run(sc)
    assert np.all(log["v_w"] == 9.0)


def test_load_wind_interpolation(tmp_path):
    path = tmp_path / "wind.csv"
    path.write_text("time_s,speed_mps\n0,10\n10,12\n")
    ws = sio.load_wind(path)
    assert sio.sample(ws, 5.0) == pytest.approx(11.0)
    assert sio.sample(ws, -1.0) == 10.0
    assert sio.sample(ws, 99.0) == 12.0


def test_load_wind_single_row(tmp_path):
    path = tmp_path / "wind.csv"
    path.write_text("0,9\n")
    ws = sio.load_wind(path)
    for t in (-5.0, 0.0, 123.0):
        assert sio.sample(ws, t) == 9.0


def test_load_wind_validation(tmp_path):
    bad_order = tmp_path / "a.csv"
    bad_order.write_text("0,10\n5,11\n5,12\n")
    with pytest.raises(ValidationError):
        sio.load_wind(bad_order)
    bad_speed = tmp_path / "b.csv"
    bad_speed.write_text("0,10\n5,-1\n")
    with pytest.raises(ValidationError):
        sio.load_wind(bad_speed)
    bad_row = tmp_path / "c.csv"
    bad_row.write_text("0,10\nx,y\n")
    with pytest.raises(ParseError):
        sio.load_wind(bad_row)


def test_gen_wind_noiseless():
    ws = sio.gen_wind(sio.SyntheticWindSpec(volatility=0.0, mean=10.0), 50.0)
    assert np.all(ws.v == 10.0)


def test_gen_wind_deterministic():
    spec = sio.SyntheticWindSpec(seed=5)
    a = sio.gen_wind(spec, 100.0)
    b = sio.gen_wind(spec, 100.0)
    assert np.array_equal(a.v, b.v)


def test_gen_wind_statistics():
    spec = sio.SyntheticWindSpec(mean=10.0, relaxation=60.0, volatility=0.6,
                                 v_min=6.0, v_max=14.0, seed=2)
    ws = sio.gen_wind(spec, 3600.0)
    assert abs(ws.v.mean() - 10.0) < 0.5
    assert np.all((ws.v >= 6.0) & (ws.v <= 14.0))
    assert ws.v.std() > 0.3


def test_results_roundtrip(tmp_path, params, gains):
    rows = np.arange(3 * len(LOG_COLUMNS), dtype=float).reshape(3, -1)
    rows[:, 0] = [0.0, 0.5, 1.0]
    log = SimLog(data=rows)
    path = tmp_path / "results.csv"
    sio.write_results(log, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 4
    assert lines[0] == ",".join(LOG_COLUMNS)
    back = sio.read_results(path)
    assert np.allclose(back.data, rows, rtol=1e-8)


def test_read_results_rejects_foreign_header(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ParseError):
        sio.read_results(path)


def test_emit_plots_produces_svgs(tmp_path):
    sc = sio.parse_scenario("duration = 10\nwind_volatility = 0\n"
                            "pd_schedule = 0:0.3\nlog_stride = 40\n")
    log = sio.run(sc)
    paths = sio.emit_plots(log, tmp_path / "plots")
    assert len(paths) == 8
    for path in paths:
        assert os.path.getsize(path) > 0
        ET.parse(path)  # well-formed XML


def test_cli_simulate_and_plot(tmp_path):
    scn = tmp_path / "s.scn"
    scn.write_text("duration = 5\nwind_volatility = 0\npd_schedule = 0:0.3\n"
                   "log_stride = 50\n")
    out = tmp_path / "out"
    assert cli.main(["simulate", "--scenario", str(scn), "--out", str(out)]) == 0
    assert (out / "results.csv").exists()
    plots = tmp_path / "plots"
    assert cli.main(["plot", "--log", str(out / "results.csv"),
                     "--out", str(plots)]) == 0
    assert len(list(plots.glob("*.svg"))) == 8


def test_cli_simulate_wind_override(tmp_path):
    scn = tmp_path / "s.scn"
    scn.write_text("duration = 5\npd_schedule = 0:0.3\nlog_stride = 50\n")
    wind = tmp_path / "w.csv"
    wind.write_text("0,9.5\n10,9.5\n")
    out = tmp_path / "out"
    assert cli.main(["simulate", "--scenario", str(scn), "--wind", str(wind),
                     "--out", str(out)]) == 0
    log = sio.read_results(out / "results.csv")
    assert np.all(log["v_w"] == 9.5)


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.scn"
    bad.write_text("w_p = -1\n")
    assert cli.main(["simulate", "--scenario", str(bad),
                     "--out", str(tmp_path / "o")]) == 1
    assert cli.main(["simulate", "--scenario", str(tmp_path / "missing.scn"),
                     "--out", str(tmp_path / "o")]) == 1
    assert cli.main(["verify", "--suite", "gainbound"]) == 0
    diverging = tmp_path / "diverge.scn"
    diverging.write_text("duration = 1\nwind_volatility = 0\n"
                         "flux0 = 1e308, 0, 0, 0\n")
    assert cli.main(["simulate", "--scenario", str(diverging),
                     "--out", str(tmp_path / "o2")]) == 2
