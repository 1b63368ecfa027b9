"""
Elastic electron scattering on molecules in the first Born approximation.

Plane-wave and twisted (Bessel-beam) projectiles, with targets described by AIM .wfn
wavefunctions or analytic model densities. The CLI lives in `cli`; everything it does is
available from the modules below.
"""

__version__ = "0.1.0"

__all__ = [
    "beam",
    "cli",
    "config",
    "cross_sections",
    "density",
    "errors",
    "form_factor",
    "kinematics",
    "quadrature",
    "scan",
    "validation",
    "wfn_loader",
]
