"""Physical and geodetic constants shared across the simulator.

Distances are kilometers and time is seconds unless a name says otherwise.
The Earth model is a sphere of radius R_EARTH_KM rotating uniformly; time is
treated as uniform seconds since an epoch (no leap seconds).
"""

# Gravitational parameter of the Earth, km^3/s^2
MU_EARTH_KM3_S2 = 398600.4418

# Mean equatorial radius, km (spherical Earth everywhere)
R_EARTH_KM = 6378.137

# Second zonal harmonic (oblateness) used for secular nodal regression
J2_EARTH = 1.08262668e-3

# Earth rotation rate, rad/s (ERA rate)
OMEGA_EARTH_RAD_S = 7.292115146706979e-5

# One sidereal year, seconds; a Sun-synchronous node precesses 360°/year
SIDEREAL_YEAR_S = 365.256363 * 86400.0

SPEED_OF_LIGHT_KM_S = 299792.458
SPEED_OF_LIGHT_M_S = 299792458.0

PLANCK_J_S = 6.62607015e-34


def photon_energy_j(wavelength_nm: float) -> float:
    """Energy of one photon at the given wavelength, joules."""
    if wavelength_nm <= 0:
        raise ValueError(f"wavelength must be positive, got {wavelength_nm}")
    return PLANCK_J_S * SPEED_OF_LIGHT_M_S / (wavelength_nm * 1e-9)
