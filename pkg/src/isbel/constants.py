"""Physical constants in the internal unit system.

Energies are in meV, times in ps, lengths in nm, sheet densities in cm^-2.
Angular frequencies and all rates are in ps^-1 (energy / HBAR).
"""

HBAR = 0.6582119569          # meV ps
KB = 0.08617333262           # meV / K
C_LIGHT = 2.99792458e5       # nm / ps
M_ELECTRON = 5.1099895e8 / C_LIGHT**2   # meV ps^2 / nm^2 (rest mass, from m c^2)
COULOMB = 1439.96455         # e^2 / (4 pi eps0), meV nm

# sheet-density conversion: quantities built from nm^-2 reported in cm^-2
NM2_PER_CM2 = 1.0e14
