"""Sideband cooling of near-degenerate mechanical modes through several optical drives.

Modules
-------
model       configuration dataclasses and unit handling
linearize   mean-field solution and linearized couplings
moments     second-moment dynamics, steady states and transients
spectral    dynamical matrix, dark modes and exceptional points
limits      closed-form cooling limits
membrane    square-membrane drum modes and optical overlaps
schedule    quasi-static drive protocols and sweeps
cli         command-line entry point
"""

__version__ = "0.1.0"
