"""FMCW chirp physics backing the mmWave preference modes.

The radar exposes two preference modes rather than pixel resolutions.
Each (preference, fps) pair maps to a chirp profile, and the four operating
parameters follow from standard FMCW identities, so the range/velocity
trade-off is an actual physical consequence of the chirp geometry:

    range_resolution          = c / (2 B)
    max_radial_velocity       = lambda / (4 T_c)
    radial_velocity_resolution= lambda / (2 N T_c)
    max_unambiguous_range     = range_resolution * num_range_bins

where B is the sweep bandwidth, T_c the chirp duration and N the number of
chirps per frame. N is bounded by the frame period: N * T_c <= 1 / fps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .domain import DEFAULT_FPS_LADDER, RadarParams, RadarPreference

C_LIGHT = 299_792_458.0  # m/s, exact

CARRIER_FREQUENCY = 60e9  # Hz (60-64 GHz band radar; we fix the low edge)
CARRIER_WAVELENGTH = C_LIGHT / CARRIER_FREQUENCY

# ADC depth of the range FFT; scales max_unambiguous_range only.
NUM_RANGE_BINS = 256


class UnknownRadarConfigError(KeyError):
    """Raised for (preference, fps) pairs absent from the built-in table."""


@dataclass(frozen=True)
class ChirpConfig:
    bandwidth: float              # Hz
    chirp_duration: float         # s
    num_chirps_per_frame: int
    carrier_wavelength: float = CARRIER_WAVELENGTH  # m

    def __post_init__(self):
        if self.bandwidth <= 0 or self.chirp_duration <= 0 or self.carrier_wavelength <= 0:
            raise ValueError("chirp parameters must be positive")
        if self.num_chirps_per_frame < 2:
            raise ValueError("need at least 2 chirps per frame for a velocity estimate")


def derive_radar_params(chirp: ChirpConfig, num_range_bins: int = NUM_RANGE_BINS) -> RadarParams:
    """Apply the FMCW identities to one chirp profile. Pure."""
    range_resolution = C_LIGHT / (2.0 * chirp.bandwidth)
    max_radial_velocity = chirp.carrier_wavelength / (4.0 * chirp.chirp_duration)
    radial_velocity_resolution = chirp.carrier_wavelength / (
        2.0 * chirp.num_chirps_per_frame * chirp.chirp_duration)
    return RadarParams(
        range_resolution=range_resolution,
        max_unambiguous_range=range_resolution * num_range_bins,
        max_radial_velocity=max_radial_velocity,
        radial_velocity_resolution=radial_velocity_resolution,
    )


# Chirp profile per preference mode. Range mode sweeps a wide band with
# relaxed frame occupancy; velocity mode narrows the sweep, shortens the
# chirp (higher max velocity) and packs the frame with chirps (finer
# velocity resolution). frame_fill < 1 keeps N * T_c inside the frame.
_PROFILES = {
    RadarPreference.PREFER_RANGE: dict(bandwidth=4.0e9, chirp_duration=120e-6, frame_fill=0.50),
    RadarPreference.PREFER_VELOCITY: dict(bandwidth=1.2e9, chirp_duration=60e-6, frame_fill=0.95),
}


def chirp_for(pref: RadarPreference, fps: int) -> ChirpConfig:
    """Chirp profile serving one (preference, fps) operating point."""
    profile = _PROFILES[pref]
    t_c = profile["chirp_duration"]
    num_chirps = math.floor(profile["frame_fill"] / (t_c * fps))
    return ChirpConfig(
        bandwidth=profile["bandwidth"],
        chirp_duration=t_c,
        num_chirps_per_frame=max(2, num_chirps),
    )


_TABLE_CACHE: dict[tuple[int, ...], dict[tuple[RadarPreference, int], RadarParams]] = {}


def _table(fps_ladder: tuple[int, ...]) -> dict[tuple[RadarPreference, int], RadarParams]:
    table = _TABLE_CACHE.get(fps_ladder)
    if table is None:
        table = {
            (pref, fps): derive_radar_params(chirp_for(pref, fps))
            for pref in RadarPreference
            for fps in fps_ladder
        }
        _TABLE_CACHE[fps_ladder] = table
    return table


def radar_params_for(pref: RadarPreference, fps: int,
                     fps_ladder: tuple[int, ...] = DEFAULT_FPS_LADDER) -> RadarParams:
    """Look up the derived parameters for a (preference, fps) pair."""
    try:
        return _table(tuple(fps_ladder))[(pref, fps)]
    except KeyError:
        raise UnknownRadarConfigError(
            f"no radar profile for pref={pref.value} fps={fps} (ladder {fps_ladder})") from None


def lut_rows(fps_ladder: tuple[int, ...] = DEFAULT_FPS_LADDER) -> list[dict]:
    """Full table as rows, ready for CSV export."""
    rows = []
    for pref in RadarPreference:
        for fps in fps_ladder:
            p = radar_params_for(pref, fps, fps_ladder)
            rows.append({
                "pref": pref.value,
                "fps": fps,
                "range_res_m": p.range_resolution,
                "max_range_m": p.max_unambiguous_range,
                "max_vel_mps": p.max_radial_velocity,
                "vel_res_mps": p.radial_velocity_resolution,
            })
    return rows
