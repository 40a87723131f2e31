"""Free-space constants and frequency helpers (SI units)."""

import math

C0 = 299_792_458.0
MU0 = 4e-7 * math.pi
EPS0 = 1.0 / (MU0 * C0**2)
ETA0 = MU0 * C0


def wavenumber(frequency):
    """Free-space wavenumber in rad/m for a frequency in Hz."""
    if frequency <= 0:
        raise ValueError(f"frequency must be positive, got {frequency}")
    return 2.0 * math.pi * frequency / C0


def wavelength(frequency):
    return C0 / frequency
