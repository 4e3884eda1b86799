"""Maximum-likelihood linear regression under symmetric scale-family noise.

The MLE of the regression vector and the noise scale is computed jointly
and compared with ordinary least squares, both through closed-form
asymptotic efficiencies and through Monte-Carlo simulation.
"""
from .errors import (BatchError, DataError, DegenerateDataError, DomainError,
                     EfficiencyUndefinedError, QuadratureError, ScaleMLEError,
                     SingularDesignError, SingularityError)
from .special_math import (QuadratureSpec, gamma, integrate_half_line, integrate_interval,
                           integrate_real_line_even, log_gamma)
from .families import NoiseFamily, ScaledNoise, constants, density, log_density_and_score, sample
from .asymptotics import (EfficiencyReport, EtaCurve, FisherBlocks, eta_closed_form, eta_curve,
                          eta_quadrature_oracle, fisher_blocks, mle_asymptotic_cov,
                          ols_asymptotic_cov)
from .optimize import OptimizerSettings, bfgs
from .estimators import (Dataset, FeasibleRegion, FitResult, feasible_region, mle_fit,
                         negative_loglik, negative_loglik_gradient, ols_fit)
from .simulation import (ExperimentConfig, ReplicationRecord, dimension_sweep, estimate_are,
                         generate_dataset, resample_stddev, run_batch)
from .pipeline import (CenteringRecord, TabularSource, export_residuals, load_and_center,
                       train_test_evaluate)

__version__ = "0.1.0"
