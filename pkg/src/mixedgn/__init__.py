"""Ground states and sharp interpolation constants for two-order fractional
Schroedinger operators ``(-Delta)^s_high + (-Delta)^s_low``."""
from .functionals import (FunctionalReport, dilation_scaling, energy, energy_gradient,
                          functional_report, h_function, mass_scaling, t_star,
                          threshold_inequality_holds, weinstein)
from .params import (GnExponents, ParameterError, ProblemParams, beta_target,
                     constant_from_critical_mass, critical_mass_from_constant, gamma_target,
                     gn_exponents, mass_scaling_exponents, threshold_coefficient)
from .solvers import (BracketError, ConvergenceError, DegenerateError, GroundState,
                      SolverOptions, critical_mass_search, mass_constrained_flow,
                      petviashvili_solve, rescale_to_solution, weinstein_descent)
from .spectral import (Field, SpectralGrid, apply_fractional_laplacian, lp_norm_p, mass,
                       resample, seminorm_sq)
from .verification import (Certificate, optimality_certificate, sampled_inequality_suite,
                           theorem14_battery)

__version__ = "0.1.0"
