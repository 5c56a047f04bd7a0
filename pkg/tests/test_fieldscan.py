import numpy as np
import pytest

from sniftle import fieldscan
from sniftle.errors import InvalidInputError, ResumeError
from sniftle.fieldscan import (DOMAIN_EXIT, MEASURES, OK, FieldResult, ScanAborted, ScanSpec,
                               checkpoint_and_resume, read_field_binary, run_scan, summarize,
                               write_field_binary, write_field_csv)
from sniftle.flowfield import (builtin_model, double_gyre, linear_saddle, model_from_grid,
                               sample_model_on_grid, zero_model)
from sniftle.flowmap import IntegratorConfig
from sniftle.measures import measure_record

COARSE = IntegratorConfig(1e-2)


def _gyre_spec(nx=9, ny=5, times=(2.0, 4.0), **kw):
    return ScanSpec(double_gyre(), [(0, 2, nx), (0, 1, ny)], times, integrator=COARSE, **kw)


@pytest.fixture(scope="module")
def gyre_full():
    return run_scan(_gyre_spec(), workers=1)


def test_single_point_matches_measure_record():
    xi = np.array([[1.0, 0.2], [0.2, 0.5]])
    spec = ScanSpec(double_gyre(), [(1.0, 2.0, 1), (0.5, 1.0, 1)], [3.0], xi, COARSE)
    res = run_scan(spec)
    rec = measure_record(double_gyre(), [1.0, 0.5], 3.0, xi, COARSE)
    np.testing.assert_array_equal(res.values[0, 0],
                                  [rec.ftle, rec.sniftle, rec.s2, rec.q2])
    assert res.complete and res.status[0, 0] == OK


def test_zero_model_field():
    spec = ScanSpec(zero_model(), [(0, 1, 3), (0, 1, 4)], [1.5, 2.0])
    res = run_scan(spec)
    np.testing.assert_array_equal(res.values[..., 0], 0.0)
    np.testing.assert_allclose(res.values[:, 1, 2], 2.0, rtol=1e-13)
    assert res.field("ftle", 1).shape == (3, 4)


def test_grid_is_row_major(gyre_full):
    pts = gyre_full.spec.points()
    assert pts.shape == (45, 2)
    np.testing.assert_array_equal(pts[1], [0.0, 0.25])
    np.testing.assert_array_equal(pts[5], [0.25, 0.0])


def test_worker_count_does_not_change_values(gyre_full, monkeypatch):
    monkeypatch.setattr(fieldscan, "POINT_CHUNK", 4)
    many = run_scan(_gyre_spec(), workers=6)
    np.testing.assert_array_equal(many.values, gyre_full.values)
    np.testing.assert_array_equal(many.status, gyre_full.status)


def test_resume_complete_result_is_unchanged(gyre_full):
    again = checkpoint_and_resume(gyre_full, _gyre_spec())
    np.testing.assert_array_equal(again.values, gyre_full.values)


def test_resume_after_partial_run(gyre_full, monkeypatch, tmp_path):
    monkeypatch.setattr(fieldscan, "POINT_CHUNK", 5)
    spec = _gyre_spec()
    partial = run_scan(spec, limit=5)
    assert not partial.complete
    assert np.count_nonzero(partial.status == fieldscan.PENDING) == (45 - 25) * 2
    partial.save(tmp_path / "part.npz")
    loaded = FieldResult.load(tmp_path / "part.npz", spec)
    done = checkpoint_and_resume(loaded, spec, workers=3)
    np.testing.assert_array_equal(done.values, gyre_full.values)


def test_resume_rejects_changed_grid(gyre_full):
    with pytest.raises(ResumeError):
        checkpoint_and_resume(gyre_full, _gyre_spec(nx=11))


def _gridded_scan(policy):
    data = sample_model_on_grid(builtin_model("linear_saddle", a=1.0),
                                [np.linspace(-1, 1, 11), np.linspace(-1, 1, 11)], [0.0, 5.0])
    return ScanSpec(model_from_grid(data), [(-0.9, 0.9, 7), (-0.9, 0.9, 3)], [0.5],
                    integrator=COARSE, failure_policy=policy)


def test_record_nan_masks_domain_exits():
    res = run_scan(_gridded_scan("record_nan"))
    # x1 = x1(0) e^t stays inside [-1, 1] only for |x1(0)| < e^-0.5
    x1 = res.spec.points()[:, 0]
    inside = np.abs(x1) * np.exp(0.5) < 1
    np.testing.assert_array_equal(res.status[:, 0] == OK, inside)
    assert np.all(res.status[~inside, 0] == DOMAIN_EXIT)
    assert np.isnan(res.values[~inside]).all()
    assert summarize(res)["failures"] == np.count_nonzero(~inside)


def test_abort_reports_first_failing_point():
    with pytest.raises(ScanAborted) as info:
        run_scan(_gridded_scan("abort"))
    np.testing.assert_allclose(info.value.point, [-0.9, -0.9])


def test_csv_output(tmp_path):
    spec = ScanSpec(linear_saddle(1.0), [(0, 1, 2), (0, 1, 2)], [1.0, 2.0], integrator=COARSE)
    res = run_scan(spec)
    path = tmp_path / "f.csv"
    write_field_csv(res, path, ["prov line"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# prov line"
    assert lines[1] == "x1,x2,t,ftle,sniftle,s2,q2,status"
    assert len(lines) == 2 + 4 * 2
    first = lines[2].split(",")
    assert first[2] == "1" and first[-1] == "ok"
    assert float(first[3]) == res.values[0, 0, 0]


def test_binary_roundtrip(tmp_path, gyre_full):
    path = tmp_path / "f.bin"
    write_field_binary(gyre_full, path, {"note": "x"})
    header, data = read_field_binary(path)
    assert header["columns"][3:7] == list(MEASURES)
    assert header["meta"] == {"note": "x"}
    np.testing.assert_array_equal(data[:, 3:7], gyre_full.values.reshape(-1, 4))
    (tmp_path / "junk.bin").write_bytes(b"nope")
    with pytest.raises(InvalidInputError):
        read_field_binary(tmp_path / "junk.bin")


def test_spec_validation():
    with pytest.raises(InvalidInputError):
        ScanSpec(double_gyre(), [(0, 2, 3)], [1.0])
    with pytest.raises(InvalidInputError):
        ScanSpec(double_gyre(), [(0, 2, 3), (0, 1, 3)], [0.0])
    with pytest.raises(InvalidInputError):
        ScanSpec(double_gyre(), [(0, 2, 3), (0, 1, 3)], [1.0], failure_policy="skip")


def test_grid_refinement_changes_max_ftle_little():
    coarse = run_scan(_gyre_spec(21, 11, (5.0,)), workers=4)
    fine = run_scan(_gyre_spec(41, 21, (5.0,)), workers=4)
    a, b = coarse.field("ftle").max(), fine.field("ftle").max()
    assert abs(b - a) <= 0.02 * abs(b)
