"""Coherent light scattering in cold, disordered atomic ensembles.

Subpackages cover angular-momentum algebra, dressed-medium optics,
phase-integral propagation, polarization-resolved Monte-Carlo multiple
scattering, radiative transport/diffusion, microscopic coupled-dipole
solvers, protocol utilities and a scenario CLI.
"""

__version__ = "0.1.0"
