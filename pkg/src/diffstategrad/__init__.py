"""Diffusion-state-guided projection of measurement gradients for inverse problems."""

from .linalg import (StateProjector, SvdFactors, build_projector, project_gradient,
                     select_rank, svd)
from .metrics import failure_rate, nmse, posterior_moment_error, psnr, ssim
from .operators import make_measurement, make_operator
from .prior import GmmPrior, exact_linear_posterior, make_lowrank_prior
from .schedule import NoiseSchedule, make_vp_schedule
from .solvers import (Autoencoder, GuidanceConfig, run_daps_style, run_dps, run_psld_style,
                      run_resample_style)

__version__ = "0.1.0"
