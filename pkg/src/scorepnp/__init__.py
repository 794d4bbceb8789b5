"""scorepnp: classical plug-and-play solvers driven by diffusion-model scores.

Pre-trained score functions (VE or VP convention) become plug-in MMSE
denoisers through a general Tweedie template plus parameter matching, and
run unchanged inside PnP-ADMM, RED, DPIR/HQS, and a DiffPIR-style
sampler.  Analytic Gaussian/GMM priors with closed-form scores provide
machine-precision oracles for every formula at desk scale.
"""

__version__ = "0.1.0"

from .errors import (
    ScorePnpError, DimensionError, ParameterError, ConditionError,
    SigmaRangeError, NumericsError, TrainingError, ConfigError,
    TransportError, ProtocolError,
)
from .imaging import (
    ImageTensor, BlurKernel, Measurement, LinearOperator, IdentityOperator,
    MaskOperator, CirculantBlurOperator, CallableOperator, kernel_spectrum,
    apply_forward, apply_adjoint, generate_measurement,
    load_kernel, save_kernel, load_image, save_image,
)
from .schedules import (
    NoiseSchedule, VESchedule, VPSchedule, vp_sigma_of_t,
    linear_beta_schedule, geometric_sigma_schedule, betas_for_sigmas,
    vp_schedule_for_sigmas, load_schedule, save_schedule,
    schedule_from_dict, schedule_to_dict,
)
from .priors import (
    GaussianPrior, GmmPrior, PatchGmmImagePrior, ScoreFunction,
    gaussian_score, gmm_score, gmm_mmse_denoise,
    emulate_ve_network, emulate_vp_network, direct_score,
    load_gmm, save_gmm, gmm_from_dict,
)
from .adaptation import (
    ParamMatch, AdaptedDenoiser, interpolate_schedule, matching_grid,
    param_matching, tweedie_denoise, adapt_ve, adapt_vp,
)
from .solvers import (
    QuadraticDataTerm, SolverConfig, SolverState, TraceRow,
    prox_quadratic, grad_quadratic, conjugate_gradient,
    make_log_sigma_schedule, pnp_admm, red, dpir_hqs, diffpir_sample,
    run_solver,
)
from .training import (
    MlpScoreNet, DsmTrainConfig, dsm_loss, train_toy_score, grad_check,
    save_checkpoint, load_checkpoint,
)
from .metrics import psnr, ssim
from .remote import (
    RemoteScoreClient, remote_score, remote_score_function,
    make_remote_denoiser, encode_tensor, decode_tensor,
    PROTO_VERSION, PROTO_HEADER,
)
