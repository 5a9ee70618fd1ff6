"""Physical constants and unit helpers.

Internal units: time in ps, angular frequency in rad/ps, energy in meV.
"""

import math

HBAR_MEV_PS = 0.6582119
MU_B_MEV_PER_T = 0.0578838

#: sech intensity FWHM τ and envelope rate σ satisfy σ·τ = 2·arccosh(√2)
SECH_FWHM_FACTOR = 2.0 * math.acosh(math.sqrt(2.0))
#: spectral intensity FWHM of sech(σt) in rad/ps is this factor times σ
SECH_SPECTRAL_FACTOR = 4.0 * math.acosh(math.sqrt(2.0)) / math.pi


def mev_to_rad_per_ps(energy_mev):
    return energy_mev / HBAR_MEV_PS


def rad_per_ps_to_mev(omega):
    return omega * HBAR_MEV_PS


def larmor_omega(g_factor, field_t):
    """Electron precession frequency (rad/ps) for |g| and field B in tesla."""
    return abs(g_factor) * MU_B_MEV_PER_T * field_t / HBAR_MEV_PS


def sech_sigma_from_fwhm(fwhm_ps):
    return SECH_FWHM_FACTOR / fwhm_ps


def sech_sigma_from_bandwidth(bandwidth_mev):
    """Envelope rate σ of a sech pulse whose spectral intensity FWHM is `bandwidth_mev`."""
    return mev_to_rad_per_ps(bandwidth_mev) / SECH_SPECTRAL_FACTOR
