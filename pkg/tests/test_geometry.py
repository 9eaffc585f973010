import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nprach.geometry import (
    C,
    SET_1,
    SET_2,
    GeometryError,
    LinkBudgetInputs,
    OrbitConfig,
    beam_geometry,
    candidate_table,
    cnr,
    doppler,
    elevation_for_md_rtd,
    free_space_path_loss,
    geometry_report,
    link_budget,
    slant_range,
    snr,
)

ORBIT = OrbitConfig()
T_AMB = 1 / 3750


def test_orbit_validation():
    with pytest.raises(GeometryError):
        OrbitConfig(altitude=-1.0)
    with pytest.raises(GeometryError):
        OrbitConfig(carrier_freq=0.0)


def test_slant_range_nadir():
    assert slant_range(ORBIT, 90) == pytest.approx(600e3)


def test_slant_range_against_law_of_cosines():
    # independent oracle: triangle Earth centre / UE / satellite
    Re, R = ORBIT.earth_radius, ORBIT.radius
    for elev in (10.0, 30.0, 55.0):
        d = slant_range(ORBIT, elev)
        # angle at the UE between zenith and satellite is 90 + elev
        assert R**2 == pytest.approx(Re**2 + d**2 - 2 * Re * d * np.cos(np.radians(90 + elev)), rel=1e-12)


@pytest.mark.parametrize("elev,rtd", [(30, 7.17e-3), (90, 4.0e-3)])
def test_rtd(elev, rtd):
    assert 2 * slant_range(ORBIT, elev) / C == pytest.approx(rtd, rel=0.02)


@pytest.mark.parametrize("bad", [0.0, -5.0, 91.0])
def test_elevation_range(bad):
    with pytest.raises(GeometryError):
        slant_range(ORBIT, bad)


def test_doppler_values():
    shift30, rate30 = doppler(ORBIT, 30)
    shift90, rate90 = doppler(ORBIT, 90)
    assert abs(shift30) == pytest.approx(41e3, rel=0.05)
    assert rate30 == pytest.approx(-101, rel=0.05)
    assert abs(shift90) < 1.0
    assert rate90 == pytest.approx(-594, rel=0.05)


def test_doppler_rate_matches_analytic_overhead():
    # r^2 = R^2 + Re^2 - 2 R Re cos(w t) gives r'' = R Re w^2 / h at zenith
    R, Re, w = ORBIT.radius, ORBIT.earth_radius, ORBIT.angular_rate
    expected = -ORBIT.carrier_freq / C * R * Re * w**2 / ORBIT.altitude
    _, rate = doppler(ORBIT, 90)
    assert rate == pytest.approx(expected, rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(5.0, 89.0))
def test_doppler_rate_negative_and_max_at_zenith(elev):
    _, r = doppler(ORBIT, elev)
    _, r90 = doppler(ORBIT, 90)
    assert r < 0
    assert abs(r) <= abs(r90) + 1e-9


def test_monotonic_slant_and_md_rtd():
    elevs = np.linspace(20, 90, 30)
    d = [slant_range(ORBIT, e) for e in elevs]
    assert np.all(np.diff(d) < 0)
    for p in (SET_1, SET_2):
        md = [beam_geometry(ORBIT, p, e)[1] for e in elevs]
        assert np.all(np.diff(md) <= 1e-12)


@pytest.mark.parametrize(
    "payload,elev,diam_km,md_us,tol",
    [
        (SET_1, 90, 46.23, 3.25, 0.20),
        (SET_1, 30, 144.02, 807.13, 0.10),
        (SET_1, 45, None, 369.53, 0.10),
        (SET_2, 30, None, 1397.23, 0.10),
        (SET_2, 45, None, 658.85, 0.10),
        (SET_2, 90, None, 13.04, 0.20),
    ],
)
def test_beam_table(payload, elev, diam_km, md_us, tol):
    diam, md = beam_geometry(ORBIT, payload, elev)
    if diam_km is not None:
        assert diam / 1e3 == pytest.approx(diam_km, rel=0.05)
    assert md * 1e6 == pytest.approx(md_us, rel=tol)


def test_beam_misses_earth():
    with pytest.raises(GeometryError):
        beam_geometry(OrbitConfig(altitude=600e3), type(SET_1)("wide", 0.0, 150.0), 5.0)


def test_report_invariants():
    rep = geometry_report(ORBIT, SET_2, 40.0)
    assert rep.rtd == pytest.approx(2 * rep.slant_range / C)
    assert rep.doppler_rate < 0 and rep.md_rtd >= 0
    assert rep.alpha_min_sc <= rep.alpha_max_sc < 0
    # rate map: near edge (zero differential delay) has the steepest rate
    assert rep.rate_at_drtd(0.0) == pytest.approx(rep.alpha_min_sc)
    assert rep.rate_at_drtd(rep.md_rtd) == pytest.approx(rep.alpha_max_sc)


def test_elevation_for_md_rtd_inverts():
    e = elevation_for_md_rtd(ORBIT, SET_2, 800e-6)
    assert beam_geometry(ORBIT, SET_2, e)[1] == pytest.approx(800e-6, rel=1e-9)
    with pytest.raises(GeometryError):
        elevation_for_md_rtd(ORBIT, SET_1, 0.1)


# ---------------------------------------------------------------- link budget

TABLE = {
    # (G/T, FSPL) -> (CNR, SNR)
    "set1_30": (1.10, 159.10, 5.79, 16.60),
    "set1_90": (1.10, 154.03, 10.85, 21.66),
    "set2_30": (-4.9, 159.10, -0.21, 10.60),
    "set2_90": (-4.9, 154.03, 4.86, 15.67),
}


@pytest.mark.parametrize("case", sorted(TABLE))
def test_link_budget_rows(case):
    gt, fspl, c_ref, s_ref = TABLE[case]
    inp = LinkBudgetInputs(g_over_t=gt, pl_fs=fspl)
    c = cnr(inp)
    assert c == pytest.approx(c_ref, abs=0.05)
    assert snr(c, inp.g, inp.margin) == pytest.approx(s_ref, abs=0.05)


def test_cnr_identity():
    inp = LinkBudgetInputs(eirp=60.0, g_over_t=0.0, bw_nbiot=1.0, pl_fs=0, pl_a=0, pl_s=0, pl_ad=0)
    assert cnr(inp) == pytest.approx(258.6)


def test_snr_identity_and_errors():
    assert snr(3.3, 1.0, 0.0) == pytest.approx(3.3)
    assert LinkBudgetInputs().g == 48
    with pytest.raises(ValueError):
        snr(1.0, 0.0)


@pytest.mark.parametrize("field", ["eirp", "g_over_t", "pl_fs", "pl_a", "pl_s", "pl_ad", "pl_pol", "pl_other"])
def test_cnr_affine(field):
    base = LinkBudgetInputs()
    c0 = cnr(base)
    slope = 1.0 if field in ("eirp", "g_over_t") else -1.0
    for delta in (-3.0, 0.5, 7.25):
        moved = base.with_(**{field: getattr(base, field) + delta})
        assert cnr(moved) - c0 == pytest.approx(slope * delta, abs=1e-12)


def test_fspl_from_slant_range():
    inputs, c, s = link_budget(ORBIT, SET_1, 30.0)
    assert inputs.pl_fs == pytest.approx(159.10, abs=0.01)
    assert free_space_path_loss(600e3, 2e9) == pytest.approx(154.03, abs=0.01)
    assert s == pytest.approx(16.60, abs=0.05)


# ---------------------------------------------------------------- candidates


def test_candidates_800us():
    rep = geometry_report(ORBIT, SET_2, 42.1)
    cands = candidate_table(rep, 800e-6, 66.67e-6, T_AMB)
    toas = [c[0] * 1e6 for c in cands]
    assert toas == pytest.approx([66.67, 333.34, 600.0], abs=0.01)
    rates = [c[1] for c in cands]
    assert rates == pytest.approx([-305, -261, -225], rel=0.10)


def test_candidate_single_and_spacing():
    rep = geometry_report(ORBIT, SET_1, 60.0)
    assert rep.md_rtd < 266e-6
    one = candidate_table(rep, 800e-6, 66.67e-6, T_AMB)
    assert len(one) == 1
    big = geometry_report(ORBIT, SET_2, 31.0)
    many = candidate_table(big, 1333.4e-6, 10e-6, T_AMB)
    assert np.allclose(np.diff([c[0] for c in many]), T_AMB)


def test_candidate_window_limited_by_cp():
    big = geometry_report(ORBIT, SET_2, 31.0)
    cands = candidate_table(big, 533.33e-6, 10e-6, T_AMB)
    assert [round(c[0] * 1e6, 2) for c in cands] == [10.0, 276.67]


def test_candidate_margin_keeps_wrapped_truth():
    rep = geometry_report(ORBIT, SET_2, 42.1)
    # raw estimate just below t_amb can stand for a true delay just below 0
    cands = candidate_table(rep, 800e-6, T_AMB - 1e-6, T_AMB, margin=5e-6)
    assert any(abs(c[0] + 1e-6) < 1e-12 for c in cands)


def test_candidate_errors():
    rep = geometry_report(ORBIT, SET_2, 42.1)
    with pytest.raises(ValueError):
        candidate_table(rep, 800e-6, T_AMB, T_AMB)
    tiny = geometry_report(ORBIT, SET_1, 90.0)
    with pytest.raises(ValueError):
        candidate_table(tiny, 266e-6, 200e-6, T_AMB)
