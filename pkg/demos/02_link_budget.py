"""Link budget and beam geometry for the two LEO payloads at 600 km."""

from nprach.geometry import SET_1, SET_2, OrbitConfig, geometry_report, link_budget

orbit = OrbitConfig()
print(f"{'payload':8} {'elev':>5} {'slant km':>9} {'RTD ms':>7} {'shift kHz':>10} {'rate Hz/s':>10} {'MD-RTD us':>10} {'SNR dB':>7}")
for payload in (SET_1, SET_2):
    for elev in (30.0, 45.0, 90.0):
        rep = geometry_report(orbit, payload, elev)
        _, _, s = link_budget(orbit, payload, elev)
        print(
            f"{payload.set_id:8} {elev:5.0f} {rep.slant_range / 1e3:9.1f} {rep.rtd * 1e3:7.2f} "
            f"{rep.doppler_shift / 1e3:10.2f} {rep.doppler_rate:10.1f} {rep.md_rtd * 1e6:10.1f} {s:7.2f}"
        )

# Doppler rate across one beam: the receiver uses this spread to pick the ToA candidate
rep = geometry_report(orbit, SET_2, 42.1)
print(f"\nSet-2 at 42.1 deg: MD-RTD {rep.md_rtd * 1e6:.0f} us, rate spans {rep.alpha_min_sc:.1f} .. {rep.alpha_max_sc:.1f} Hz/s")
for d in (0.0, 266.67e-6, 533.33e-6):
    print(f"  D-RTD {d * 1e6:6.1f} us -> rate {float(rep.rate_at_drtd(d)):7.1f} Hz/s")
