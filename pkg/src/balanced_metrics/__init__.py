"""Numerical toolkit for balanced metrics on polarised samples.

Submodules:

``hermitian``     geometry of positive definite Hermitian forms
``convex``        convex analysis on that space (slopes, properness, descent)
``quantization``  Bergman densities, T-operators and balancing energies
``samples``       exact quadrature samples of P^1 and its deformations
``weights``       exact Chow weights and DF invariants of toric configurations
``io``            JSON/CSV interchange
``cli``           command line front end
"""

from .convex import (Degenerate, Minimizer, asymptotic_slope, convexity_report,
                     decide_existence, liminf_harness, minimize_convex,
                     one_sided_derivatives, properness_certificate)
from .errors import (BalancedMetricsError, ContractError, ConvergenceError,
                     ConvexityViolation, InvariantViolation, NotProperError,
                     PreconditionError, ValidationError)
from .hermitian import (GeodesicRay, HermitianForm, TangentDirection,
                        connecting_direction, distance, geodesic_point,
                        reduced_distance)
from .quantization import (AnticanonicalSample, BalanceResult, PolarizedSample,
                           Status, ac_energy, ac_exact_slope, ac_t_operator,
                           balance_iterate, balancing_energy, bergman_density,
                           energy_gradient, exact_slope, t_operator)
from .samples import (CurvatureGrid, MetricProfile, QuadratureSpec,
                      build_p1_sample, deformed_p1_sample, degenerate_sample,
                      product_sample)
from .weights import (ExpansionCoefficients, ToricConfigData, WeightTable,
                      chow_limit_check, chow_weight, df_invariant,
                      fit_expansion, toric_weight_table)

__version__ = "0.1.0"
