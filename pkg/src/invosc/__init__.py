"""Exact states of a charged oscillator with an inverse-square core in a
time-dependent magnetic field, plus the machinery to distrust them.

The package is organized as a pipeline:

  params        time-dependent coefficients and config scanning
  ode           the transformation chain (rotation angle, Riccati width,
                scale factor, accumulated phase)
  bessel        the radial pair J_nu / N_nu away from library coverage
  wavefunction  assembly of the full field, residual checks, convention scan
  oracle        an independent Crank-Nicolson radial propagator
  cli           config-driven commands emitting CSV artifacts

Import the pieces you need from the submodules; this namespace re-exports
the everyday surface.
"""

from .errors import (BlowUp, ConfigError, DomainTooLarge, FallToCenter,
                     GridTooCoarse, Inconclusive, InvoscError,
                     MismatchedGrids, NonFinite, NonPositiveArgument,
                     OriginUndefined, OutOfDomain, Overflow, Pole,
                     ToleranceNotMet, Unstable, ZeroCrossing, ZeroNorm)
from .params import (CoefficientSet, TimeFunction, derived_fields,
                     effective_frequency_sq, frame_rotation_rate)
from .ode import (IntegratorConfig, MU_COUPLINGS, TransformTrajectory,
                  default_alpha0, integrate_beta, integrate_mu,
                  integrate_phase, solve_chain, solve_riccati,
                  write_trajectory_csv)
from .bessel import bessel_j, bessel_n, gamma_real, wronskian_check
from .wavefunction import (CartesianGrid, ConventionFlags, ModeSpec,
                           PolarGrid, ResidualReport, ScanOutcome, WaveField,
                           assemble_psi, convention_scan, normalize_on_disk,
                           order_from_coupling, sample_field,
                           schrodinger_residual, sector_winding,
                           theta_from_xy)
from .oracle import (PropagationResult, RadialProblem, effective_potential,
                     fidelity, propagate)
from .cli import main as cli_main

__version__ = "0.1.0"

__all__ = [
    "BlowUp", "ConfigError", "DomainTooLarge", "FallToCenter",
    "GridTooCoarse", "Inconclusive", "InvoscError", "MismatchedGrids",
    "NonFinite", "NonPositiveArgument", "OriginUndefined", "OutOfDomain",
    "Overflow", "Pole", "ToleranceNotMet", "Unstable", "ZeroCrossing",
    "ZeroNorm",
    "CoefficientSet", "TimeFunction", "derived_fields",
    "effective_frequency_sq", "frame_rotation_rate",
    "IntegratorConfig", "MU_COUPLINGS", "TransformTrajectory",
    "default_alpha0", "integrate_beta", "integrate_mu", "integrate_phase",
    "solve_chain", "solve_riccati", "write_trajectory_csv",
    "bessel_j", "bessel_n", "gamma_real", "wronskian_check",
    "CartesianGrid", "ConventionFlags", "ModeSpec", "PolarGrid",
    "ResidualReport", "ScanOutcome", "WaveField", "assemble_psi",
    "convention_scan", "normalize_on_disk", "order_from_coupling",
    "sample_field", "schrodinger_residual", "sector_winding",
    "theta_from_xy",
    "PropagationResult", "RadialProblem", "effective_potential", "fidelity",
    "propagate",
    "cli_main",
    "__version__",
]
