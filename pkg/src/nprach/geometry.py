"""LEO geometry, Doppler and link budget for a regenerative S-band payload.

Model: spherical non-rotating Earth, circular orbit, static UE lying in the
orbital plane. A beam is described by its 3 dB cone; the ``elevation`` of a
beam is the lowest elevation seen inside its footprint (the far edge), with
the boresight clamped at nadir for high elevations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import asin, cos, log10, pi, radians, sin, sqrt

import numpy as np
from scipy.optimize import brentq

C = 299_792_458.0
MU_EARTH = 3.986004418e14
K_BOLTZMANN_DB = -228.6  # dBW/K/Hz


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class OrbitConfig:
    altitude: float = 600e3
    earth_radius: float = 6371e3
    mu: float = MU_EARTH
    carrier_freq: float = 2e9

    def __post_init__(self):
        if self.altitude <= 0 or self.carrier_freq <= 0:
            raise GeometryError("altitude and carrier frequency must be positive")

    @property
    def radius(self) -> float:
        return self.earth_radius + self.altitude

    @property
    def velocity(self) -> float:
        return sqrt(self.mu / self.radius)

    @property
    def angular_rate(self) -> float:
        return self.velocity / self.radius


@dataclass(frozen=True)
class PayloadSet:
    set_id: str
    g_over_t: float
    beamwidth_3db: float  # degrees, full width


SET_1 = PayloadSet("Set-1", 1.1, 4.4127)
SET_2 = PayloadSet("Set-2", -4.9, 8.8320)
PAYLOAD_SETS = {"Set-1": SET_1, "Set-2": SET_2}


def _check_elevation(elevation: float) -> None:
    if not 0 < elevation <= 90:
        raise GeometryError(f"elevation must be in (0, 90] degrees, got {elevation}")


def nadir_angle(orbit: OrbitConfig, elevation: float) -> float:
    """Off-nadir angle (rad) at which the satellite sees a UE at ``elevation``."""
    return asin(orbit.earth_radius * cos(radians(elevation)) / orbit.radius)


def slant_range(orbit: OrbitConfig, elevation: float) -> float:
    _check_elevation(elevation)
    Re, h = orbit.earth_radius, orbit.altitude
    s = sin(radians(elevation))
    return sqrt(Re**2 * s**2 + 2 * Re * h + h**2) - Re * s


def _slant_from_nadir(orbit: OrbitConfig, eta):
    eta = np.abs(eta)
    R, Re = orbit.radius, orbit.earth_radius
    disc = Re**2 - (R * np.sin(eta)) ** 2
    if np.any(disc < 0):
        raise GeometryError("beam edge misses the Earth")
    return R * np.cos(eta) - np.sqrt(disc)


def _central_from_nadir(orbit: OrbitConfig, eta):
    """Signed Earth-central angle between sub-satellite point and ground point."""
    a = np.abs(eta)
    gamma = np.arcsin(orbit.radius * np.sin(a) / orbit.earth_radius) - a
    return np.sign(eta) * gamma


def _range_and_rate(orbit: OrbitConfig, gamma, t):
    """Range and range rate to a ground point at central angle ``gamma``.

    The satellite sits over ``gamma = 0`` at ``t = 0`` and moves towards
    positive ``gamma``.
    """
    R, Re, w = orbit.radius, orbit.earth_radius, orbit.angular_rate
    phi = w * t - gamma
    r = np.sqrt(R**2 + Re**2 - 2 * R * Re * np.cos(phi))
    return r, R * Re * w * np.sin(phi) / r


def doppler_shift_at(orbit: OrbitConfig, gamma, t=0.0):
    _, rdot = _range_and_rate(orbit, gamma, t)
    return -orbit.carrier_freq * rdot / C


def doppler_rate_at(orbit: OrbitConfig, gamma, dt: float = 0.01):
    """Doppler rate (Hz/s) by central differences of the shift along the pass."""
    return (doppler_shift_at(orbit, gamma, dt) - doppler_shift_at(orbit, gamma, -dt)) / (2 * dt)


def doppler(orbit: OrbitConfig, elevation: float) -> tuple[float, float]:
    """One-way Doppler shift and rate for a UE seeing the satellite at ``elevation``.

    The UE is placed ahead of the satellite, so the shift is positive.
    """
    _check_elevation(elevation)
    gamma = float(_central_from_nadir(orbit, nadir_angle(orbit, elevation)))
    return float(doppler_shift_at(orbit, gamma)), float(doppler_rate_at(orbit, gamma))


def beam_edges(orbit: OrbitConfig, payload: PayloadSet, elevation: float) -> tuple[float, float]:
    """Signed off-nadir angles (rad) of the near and far footprint edges."""
    _check_elevation(elevation)
    width = radians(payload.beamwidth_3db)
    boresight = max(nadir_angle(orbit, elevation) - width / 2, 0.0)
    return boresight - width / 2, boresight + width / 2


def beam_geometry(orbit: OrbitConfig, payload: PayloadSet, elevation: float) -> tuple[float, float]:
    """Footprint diameter (m) along the major axis and MD-RTD (s)."""
    lo, hi = beam_edges(orbit, payload, elevation)
    d_far = float(_slant_from_nadir(orbit, hi))
    d_near = float(_slant_from_nadir(orbit, max(lo, 0.0)))
    gam = _central_from_nadir(orbit, np.array([lo, hi]))
    diameter = orbit.earth_radius * float(gam[1] - gam[0])
    return diameter, 2 * (d_far - d_near) / C


@dataclass(frozen=True)
class GeometryReport:
    elevation: float
    slant_range: float
    rtd: float
    doppler_shift: float
    doppler_rate: float
    beam_diameter: float
    md_rtd: float
    alpha_min_sc: float
    alpha_max_sc: float
    payload: str = ""
    drtd_grid: np.ndarray = field(default=None, repr=False)
    rate_grid: np.ndarray = field(default=None, repr=False)

    def rate_at_drtd(self, drtd):
        """Doppler rate at the footprint location(s) with differential RTD ``drtd``.

        Values outside ``[0, md_rtd]`` are clamped to the beam edges.
        """
        return np.interp(drtd, self.drtd_grid, self.rate_grid)


def geometry_report(
    orbit: OrbitConfig, payload: PayloadSet, elevation: float, n_grid: int = 801
) -> GeometryReport:
    lo, hi = beam_edges(orbit, payload, elevation)
    diameter, md_rtd = beam_geometry(orbit, payload, elevation)
    # D-RTD and Doppler rate both depend on |off-nadir angle| only
    eta = np.linspace(max(lo, 0.0), hi, n_grid)
    d = _slant_from_nadir(orbit, eta)
    drtd = 2 * (d - d[0]) / C
    rates = doppler_rate_at(orbit, _central_from_nadir(orbit, eta))
    d0 = slant_range(orbit, elevation)
    shift, rate = doppler(orbit, elevation)
    return GeometryReport(
        elevation=elevation,
        slant_range=d0,
        rtd=2 * d0 / C,
        doppler_shift=shift,
        doppler_rate=rate,
        beam_diameter=diameter,
        md_rtd=md_rtd,
        alpha_min_sc=float(rates.min()),
        alpha_max_sc=float(rates.max()),
        payload=payload.set_id,
        drtd_grid=drtd,
        rate_grid=rates,
    )


def elevation_for_md_rtd(orbit: OrbitConfig, payload: PayloadSet, md_rtd: float) -> float:
    """Minimum beam elevation (deg) whose footprint has the given MD-RTD."""
    f = lambda e: beam_geometry(orbit, payload, e)[1] - md_rtd
    lo = 5.0
    while True:
        try:
            f(lo)
            break
        except GeometryError:
            lo += 1.0
    if f(lo) < 0 or f(90.0) > 0:
        raise GeometryError(f"{payload.set_id} cannot produce an MD-RTD of {md_rtd * 1e6:.2f} us")
    return brentq(f, lo, 90.0, xtol=1e-9)


def candidate_table(
    report: GeometryReport, cp_new: float, d_hat_raw: float, t_amb: float, margin: float = 0.0
) -> list[tuple[float, float]]:
    """ToA candidates ``d_hat_raw + j * t_amb`` that fit the beam, with predicted rates.

    ``margin`` widens the admissible window ``[0, min(md_rtd, cp_new)]`` on
    both sides, so estimates that wrapped across 0 or ``t_amb`` keep their
    true candidate.
    """
    if not 0 <= d_hat_raw < t_amb:
        raise ValueError("d_hat_raw must lie in [0, t_amb)")
    upper = min(report.md_rtd, cp_new) + margin
    j = np.arange(-1, int(np.floor((upper - d_hat_raw) / t_amb)) + 1)
    toa = d_hat_raw + j * t_amb
    toa = toa[(toa >= -margin) & (toa <= upper)]
    if toa.size == 0:
        raise ValueError("no ToA candidate fits the beam; inputs are inconsistent")
    return [(float(d), float(r)) for d, r in zip(toa, report.rate_at_drtd(toa))]


def free_space_path_loss(distance: float, freq: float) -> float:
    return 20 * log10(4 * pi * distance * freq / C)


@dataclass(frozen=True)
class LinkBudgetInputs:
    eirp: float = 23.01  # dBm
    g_over_t: float = 1.1
    bw_nbiot: float = 180e3
    bw_nprach: float = 3750.0
    pl_fs: float = 159.10
    pl_a: float = 0.07
    pl_s: float = 3.0
    pl_ad: float = 2.2
    pl_pol: float = 0.0
    pl_other: float = 0.0
    margin: float = 6.0
    k_b: float = K_BOLTZMANN_DB

    @property
    def g(self) -> float:
        return self.bw_nbiot / self.bw_nprach

    def with_(self, **kw) -> "LinkBudgetInputs":
        return replace(self, **kw)


def cnr(inputs: LinkBudgetInputs) -> float:
    """Carrier-to-noise ratio in dB over the NB-IoT bandwidth."""
    eirp_dbw = inputs.eirp - 30.0
    return (
        eirp_dbw
        + inputs.g_over_t
        - inputs.k_b
        - inputs.pl_fs
        - inputs.pl_a
        - inputs.pl_s
        - inputs.pl_ad
        - inputs.pl_pol
        - inputs.pl_other
        - 10 * log10(inputs.bw_nbiot)
    )


def snr(cnr_db: float, g: float = 48.0, margin: float = 6.0) -> float:
    """SNR over one NPRACH tone: CNR plus bandwidth gain, minus margin."""
    if g <= 0:
        raise ValueError("bandwidth ratio must be positive")
    return cnr_db + 10 * log10(g) - margin


def link_budget(
    orbit: OrbitConfig, payload: PayloadSet, elevation: float, **overrides
) -> tuple[LinkBudgetInputs, float, float]:
    """Inputs, CNR and SNR for a UE at ``elevation``, FSPL from the slant range."""
    fields_ = dict(
        g_over_t=payload.g_over_t,
        pl_fs=free_space_path_loss(slant_range(orbit, elevation), orbit.carrier_freq),
    )
    fields_.update(overrides)
    inputs = LinkBudgetInputs(**fields_)
    c = cnr(inputs)
    return inputs, c, snr(c, inputs.g, inputs.margin)
