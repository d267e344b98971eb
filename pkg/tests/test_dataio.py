import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pneusleeve import dataio
from pneusleeve.dataio import (CharacterizationRow, LeverCell, LeverGeometry, loadcell_to_torque,
                               parse_characterization, parse_emg, parse_imu, parse_lever_geometry,
                               parse_mvc, parse_raw_platform, parse_trials,
                               write_characterization)
from pneusleeve.errors import (ConfigurationError, MissingChannelError, ParseError,
                               RateMismatchError, ValidationError)
from pneusleeve.signals import EmgTrace, ImuTrace
from synth import write_dataset

GEOM = LeverGeometry((LeverCell(1, "AA", 0.1, 1), LeverCell(2, "AA", 0.1, 1),
                      LeverCell(3, "BB", 0.05, 1), LeverCell(4, "BB", 0.05, -1)))
HEADER = "aa_angle_deg,bb_angle_deg,pressure_kpa,torque_nm\n"


def test_loadcell_examples():
    assert loadcell_to_torque([5, 5, 0, 0], GEOM) == pytest.approx((1.0, 0.0))
    assert loadcell_to_torque([0, 0, 0, 0], GEOM) == (0.0, 0.0)
    assert loadcell_to_torque([5, -5, 2, 3], GEOM)[0] == 0.0
    with pytest.raises(ConfigurationError):
        loadcell_to_torque([1, 2, 3], GEOM)


forces = st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4)


@given(forces, forces, st.floats(-10, 10))
def test_loadcell_linear(f1, f2, k):
    combo = [a + k * b for a, b in zip(f1, f2)]
    t1, t2, tc = (loadcell_to_torque(f, GEOM) for f in (f1, f2, combo))
    for axis in range(2):
        assert tc[axis] == pytest.approx(t1[axis] + k * t2[axis], abs=1e-9)


def test_geometry_invariants():
    with pytest.raises(ConfigurationError):
        LeverGeometry(GEOM.cells[:3])
    with pytest.raises(ConfigurationError):
        LeverGeometry(GEOM.cells[:3] + (LeverCell(4, "AA", 0.1, 1),))
    with pytest.raises(ConfigurationError):
        LeverGeometry(GEOM.cells[:3] + (LeverCell(4, "BB", 0.0, 1),))


def test_parse_geometry_and_raw(tmp_path):
    g = tmp_path / "geom.csv"
    g.write_text("cell,axis,lever_m,sign\n1,AA,0.1,1\n2,AA,0.1,1\n3,BB,0.05,1\n4,bb,0.05,-1\n")
    geom = parse_lever_geometry(g)
    assert geom == GEOM
    raw = tmp_path / "raw.csv"
    raw.write_text("aa_angle_deg,bb_angle_deg,pressure_kpa,f1_n,f2_n,f3_n,f4_n\n"
                   "90,0,80,10,12.2,0,0\n")
    rows = parse_raw_platform(raw, geom)
    assert rows[0].torque_nm == pytest.approx(2.22)


def test_parse_characterization(tmp_path):
    f = tmp_path / "c.csv"
    f.write_text(HEADER + "0,0,80,11.15\n90,0,80,4.44\n180,10,80,1.54\n")
    rows = parse_characterization(f)
    assert len(rows) == 3
    assert rows[1] == CharacterizationRow(90.0, 0.0, 80.0, 4.44)


def test_out_of_range_pressure_names_line(tmp_path):
    f = tmp_path / "c.csv"
    f.write_text(HEADER + "0,0,80,11.15\n90,0,300,4.44\n")
    with pytest.raises(ValidationError) as err:
        parse_characterization(f)
    assert err.value.line == 3
    assert "pressure_kpa" in str(err.value)


def test_header_only_file(tmp_path):
    f = tmp_path / "c.csv"
    f.write_text(HEADER)
    assert parse_characterization(f) == []


@pytest.mark.parametrize("body, line", [
    ("aa,bb,p,t\n", 1),
    (HEADER + "0,0,80\n", 2),
    (HEADER + "0,0,80,1\n10,0,eighty,1\n", 3),
    (HEADER + "0,0,80,nan\n", 2),
    ("", 1),
])
def test_malformed_characterization(tmp_path, body, line):
    f = tmp_path / "c.csv"
    f.write_text(body)
    with pytest.raises(ParseError) as err:
        parse_characterization(f)
    assert err.value.line == line


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        parse_characterization(tmp_path / "nope.csv")


row = st.builds(CharacterizationRow, st.floats(0, 270), st.floats(0, 45), st.floats(0, 150),
                st.floats(-1e6, 1e6, allow_nan=False))


@given(st.lists(row, max_size=20))
def test_characterization_round_trip(tmp_path_factory, rows):
    d = tmp_path_factory.mktemp("rt")
    write_characterization(rows, d / "a.csv")
    parsed = parse_characterization(d / "a.csv")
    assert parsed == rows
    write_characterization(parsed, d / "b.csv")
    assert (d / "a.csv").read_bytes() == (d / "b.csv").read_bytes()


def test_emg_and_imu_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    emg = EmgTrace(2000.0, {"lateral_deltoid": rng.standard_normal(400),
                            "infraspinatus": rng.standard_normal(400)})
    dataio.write_emg(emg, tmp_path / "e.csv")
    back = parse_emg(tmp_path / "e.csv")
    for m in emg.channels:
        assert np.array_equal(back.channels[m], emg.channels[m])
    imu = ImuTrace(100.0, np.linspace(0, 90, 50))
    dataio.write_imu(imu, tmp_path / "i.csv")
    assert np.array_equal(parse_imu(tmp_path / "i.csv").elevation_deg, imu.elevation_deg)


def test_rate_mismatch(tmp_path):
    dataio.write_imu(ImuTrace(50.0, np.zeros(100)), tmp_path / "i.csv")
    with pytest.raises(RateMismatchError):
        parse_imu(tmp_path / "i.csv", 100.0)


def test_missing_channel(tmp_path):
    dataio.write_emg(EmgTrace(2000.0, {"lateral_deltoid": np.zeros(10)}), tmp_path / "e.csv")
    with pytest.raises(MissingChannelError):
        parse_emg(tmp_path / "e.csv", muscles=["lateral_deltoid", "anterior_deltoid"])


def test_mvc_file(tmp_path):
    f = tmp_path / "m.csv"
    f.write_text("muscle,mvc_v\nanterior_deltoid,0.4\nlateral_deltoid,0.35\n")
    assert parse_mvc(f).values == {"anterior_deltoid": 0.4, "lateral_deltoid": 0.35}
    f.write_text("muscle,mvc_v\nanterior_deltoid,-1\n")
    with pytest.raises(ValidationError):
        parse_mvc(f)


def test_parse_trials(tmp_path):
    manifest = write_dataset(tmp_path, ["abduction"], 0.6, n_reps=3)
    sets, mvc = parse_trials(manifest)
    assert {(s.movement, s.condition) for s in sets} == {("abduction", "unpowered"),
                                                        ("abduction", "powered")}
    assert all(len(s.repetitions) == 3 for s in sets)
    assert mvc["infraspinatus"] > 0


def test_parse_trials_missing_mvc_entry(tmp_path):
    manifest = write_dataset(tmp_path, ["abduction"], 0.6, n_reps=1)
    (tmp_path / "mvc.csv").write_text("muscle,mvc_v\nanterior_deltoid,0.4\n")
    with pytest.raises(ConfigurationError):
        parse_trials(manifest)


def test_report_round_trip(tmp_path):
    from pneusleeve.signals import ReportRow
    rows = [ReportRow("abduction", "lateral_deltoid", 40.0)]
    dataio.write_report(rows, tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == \
        "movement,target_muscle,relative_reduction_pct\nabduction,lateral_deltoid,40.00\n"
    assert dataio.parse_report(tmp_path / "r.csv") == rows
