"""Numerical laboratory for contact sub-Riemannian 3-manifolds.

Models (Heisenberg quotient, constant-field circle bundles, a Kepler-type
non-homogeneous example), the geodesic and Reeb flows, closed geodesics
around Reeb orbits, sR Laplacian spectra, and Schroedinger-type traces.
"""
from .flow import (GeodesicTrajectory, IntegrationError, h0_closure, hamiltonian_vector_field,
                   integrate_geodesic, integrate_reeb, model_flow_h0)
from .models import (ChartError, ContactModel, Heisenberg, KeplerHeisenberg, MagneticTorus,
                     PhasePoint, cometric, get_model, popp_volume, reeb_field, reeb_momentum)
from .periodic import (LengthSpectrum, PeriodicOrbitResult, ShootingError, fit_reeb_period,
                       length_spectrum, shoot_periodic)
from .spectra import (SpectrumTable, analytic_spectrum, assemble_spectrum, heisenberg_spectrum,
                      landau_band_count, magnetic_mode_spectrum, torus_fraction, weyl_check,
                      weyl_count)
from .spiral import SpiralFit, spiral_fit
from .traces import (TraceProfile, extract_lengths, heisenberg_trace_closed, pole_probe,
                     trace_partial)

__version__ = "0.1.0"
