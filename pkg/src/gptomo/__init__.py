"""Gaussian-process tomographic reconstruction with per-pixel uncertainty.

The package recovers a 2-d object from parallel-beam sinogram data by GP
regression through an exact beam-pixel intersection operator, reports a
relative-standard-deviation map alongside the reconstruction, fits kernel
hyperparameters by marginal-likelihood maximization with analytic
gradients and a truncated-Newton optimizer, and ships least-squares and
total-variation baselines for comparison.

Modules:

- ``geometry``   grids, scans, and the sparse system matrix
- ``kernels``    covariance families and the pixel-grid prior
- ``gp``         posterior mean/variance and the RSD uncertainty map
- ``likelihood`` marginal likelihood value and analytic gradient
- ``optim``      truncated-Newton minimization, sequential fitting
- ``noise``      synthetic noise regimes I-IV and assumed noise models
- ``baselines``  least-squares and total-variation reconstructions
- ``phantoms``   Shepp-Logan ground truths
- ``fileio``     image and sinogram serialization
- ``metrics``    reconstruction error and run records
- ``cli``        command-line pipeline
"""

from .baselines import (TvConfig, TvSearchResult, reconstruct_l2, reconstruct_tv,
                        total_variation, tv_grid_search, tv_prox)
from .fileio import (SinogramData, area_resample, load_grayscale, load_image_file,
                     load_sinogram, save_image, save_pgm, save_png, save_sinogram)
from .geometry import (Grid, ScanConfig, build_grid, build_system_matrix, default_scan,
                       forward_project, load_system_matrix, save_system_matrix)
from .gp import (IllConditionedError, NoiseCovariance, PosteriorResult, assemble_Ky,
                 posterior, rsd_map)
from .kernels import (KernelSpec, MemoryBudgetError, PriorCovariance,
                      build_prior_covariance, component_value, kernel_grad,
                      kernel_value, unit_kernel)
from .likelihood import (MarginalLikelihood, NllEvaluation, make_objective, nll,
                         nll_grad, solve_initial_c)
from .metrics import MetricRecord, e_norm, parse_metrics_csv, summarize
from .noise import NoiseCase, assumed_noise_model, corrupt, rms
from .optim import (FitReport, MinimizeResult, OptimizerConfig, StageReport,
                    default_initial_spec, fit_sequential, minimize)
from .phantoms import ObjectField, shepp_logan

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
