import numpy as np
import pytest

from conftest import preset_system
from darkcool.model import ConfigError
from darkcool.moments import StabilityError
from darkcool.schedule import (DriveProtocol, Segment, contrast_sweep, detuning_sweep, load_protocol,
                               path_independence_check, quasi_static_run, scale_rows, two_mode_system,
                               write_curve_csv, write_run_csv)


@pytest.fixture(scope="module")
def fig4a():
    base, n_th, unit, run = preset_system("fig4a")
    proto = DriveProtocol.sequential(run["strength"] / unit, 3, steps=4)
    return base, n_th, unit, proto


@pytest.fixture(scope="module")
def fig4b_run():
    base, n_th, unit, run = preset_system("fig4b")
    return base, n_th, quasi_static_run(base, n_th, DriveProtocol.sequential(0.1, 12, steps=1))


def test_protocol_points():
    p = DriveProtocol.sequential(2.0, 3, steps=2, order=[2, 0, 1])
    pts = p.points()
    assert len(pts) == 7 and np.all(pts[0][1] == 0)
    assert np.allclose(pts[2][1], [0, 0, 2]) and np.allclose(pts[1][1], [0, 0, 1])
    assert np.allclose(p.final, [2, 2, 2])
    with pytest.raises(ConfigError):
        Segment((1.0, -1.0))
    with pytest.raises(ConfigError):
        Segment((1.0,), steps=0)


def test_load_protocol(tmp_path):
    f = tmp_path / "p.toml"
    f.write_text("scale = 2.0\n[[segment]]\ntargets = [1.0, 0.0]\nsteps = 3\n[[segment]]\ntargets = [1.0, 1.0]\n")
    p = load_protocol(f)
    assert p.segments == (Segment((2.0, 0.0), 3), Segment((2.0, 2.0), 1))
    f.write_text("[[segment]]\ntargets = [1.0]\nramp = 'cubic'\n")
    with pytest.raises(ConfigError, match="ramp"):
        load_protocol(f)


def test_zero_protocol_is_thermal():
    base = two_mode_system([0.05, 0.05])
    res = quasi_static_run(base, 50.0, DriveProtocol((Segment((0.0, 0.0), 3),)))
    for r in res.records:
        assert np.allclose(r.occupancies, 50.0, rtol=1e-10)


def test_fig4a_segments(fig4a):
    base, n_th, _, proto = fig4a
    res = quasi_static_run(base, n_th, proto)
    ends = res.segment_ends()
    first = ends[0].occupancies
    assert first[1] == pytest.approx(n_th, rel=0.01) and first[2] == pytest.approx(n_th, rel=0.01)
    assert ends[1].occupancies[2] == pytest.approx(n_th, rel=0.01)
    assert np.all(ends[2].occupancies < 1.0)
    # frozen from this implementation
    assert ends[2].occupancies == pytest.approx([0.157, 0.159, 0.293], abs=5e-3)


def test_fig4b_plateaus(fig4b_run):
    _, n_th, res = fig4b_run
    plateaus = np.array([r.total for r in res.segment_ends()]) / n_th
    assert np.all(np.diff(plateaus) <= 0)
    for M in range(1, 10):
        assert plateaus[M - 1] == pytest.approx(10 - M, rel=0.05)
    for M in (10, 11):
        assert abs(plateaus[M] - plateaus[M - 1]) < 0.5 * plateaus[M - 1]


def test_quasi_static_fidelity(fig4a):
    base, n_th, _, proto = fig4a
    a = [r.total for r in quasi_static_run(base, n_th, proto).segment_ends()]
    b = [r.total for r in quasi_static_run(base, n_th, proto.with_steps(2)).segment_ends()]
    assert np.allclose(a, b, rtol=1e-12)


def test_path_independence(fig4a):
    base, n_th, _, proto = fig4a
    s = proto.final[0]
    sim = DriveProtocol.simultaneous(s, 3, steps=4)
    assert path_independence_check(base, n_th, proto, sim).passed
    rev = DriveProtocol.sequential(s, 3, steps=4, order=[2, 1, 0])
    cmp_ = path_independence_check(base, n_th, proto, rev)
    assert cmp_.relative_difference < 1e-8
    with pytest.raises(ConfigError):
        path_independence_check(base, n_th, proto, DriveProtocol.simultaneous(2 * s, 3))


def test_unstable_step_named():
    base = two_mode_system([0.05, 0.05], detunings=[-20.0, 20.0])
    with pytest.raises(StabilityError, match=r"step 3 \(segment 1"):
        quasi_static_run(base, 1.0, DriveProtocol.sequential(0.2, 2, steps=2, order=[1, 0]))


def test_detuning_sweep_minimum():
    base = two_mode_system([0.1, 0.1])
    c = detuning_sweep(base, 1e4, 0, np.linspace(19.0, 21.0, 41))
    assert abs(c.argmin - 20.0) < 0.01
    lo, hi, mid = (c.total[np.argmin(abs(c.parameter - d))] for d in (19.8, 20.2, 20.0))
    assert (lo - mid) == pytest.approx(hi - mid, rel=0.1)


def test_detuning_sweep_zero_row_is_flat():
    base = two_mode_system([0.1, 0.1])
    base = base.with_couplings(scale_rows(base.couplings, base.kappas, [0.0, 0.1]))
    c = detuning_sweep(base, 1e4, 0, np.linspace(19.0, 21.0, 5))
    assert np.ptp(c.total) < 1e-9 * c.total[0]
    # drive 2 alone leaves its dark mode thermal
    assert c.total[0] == pytest.approx(1e4, rel=0.05)


def test_contrast_symmetric():
    cs = np.linspace(-0.8, 0.8, 9)
    c = contrast_sweep(cs, 1e4)
    assert np.allclose(c.total, c.total[::-1], rtol=0.01)


def test_contrast_uneven_kappa():
    c = contrast_sweep(np.linspace(-1, 1, 41), 1e4, kappa_ratio=2.0)
    assert c.argmin != 0.0
    assert c.total[0] == pytest.approx(1e4, rel=0.01) and c.total[-1] == pytest.approx(1e4, rel=0.01)


def test_run_csv(tmp_path, fig4a):
    base, n_th, _, proto = fig4a
    res = quasi_static_run(base, n_th, proto.with_steps(1))
    write_run_csv(tmp_path / "r.csv", res)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "step,segment,Gamma_1,Gamma_2,Gamma_3,n_schmidt_1,n_schmidt_2,n_schmidt_3,n_tot"
    assert len(lines) == 5


def test_curve_csv(tmp_path):
    c = contrast_sweep([-0.5, 0.5], 10.0)
    write_curve_csv(tmp_path / "c.csv", c, "contrast")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "contrast,n_tot"
