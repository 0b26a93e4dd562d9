"""Plug-and-play splitting schemes for linear inverse imaging problems."""

from .cnn import CnnDenoiser, CnnModel, ConvLayer, infer, load_model, save_model
from .denoisers import (
    GaussianSmooth,
    IdentityDenoiser,
    NlmParams,
    NonLocalMeans,
    TvProx,
    tv_prox_denoise,
)
from .image import add_gaussian_noise, clamp01, mse, psnr
from .imageio import read_image, write_image
from .linops import (
    BayerMask,
    BayerPattern,
    CircularConvolution,
    ConvKernel,
    Gradient,
    Identity,
    gaussian_kernel,
    operator_norm,
)
from .prox import DataTerm, prox_l1, prox_l21
from .schemes import (
    RunReport,
    SchemeConfig,
    fixed_point_init,
    fixed_point_residual,
    rescale_config,
    run,
    run_admm,
    run_pdhg1,
    run_pdhg2,
    run_pg,
    run_stacked_pdhg,
)

__version__ = "0.1.0"
